#include <gtest/gtest.h>

#include <numbers>

#include <Eigen/LU>

#include "robmrag/error.hpp"
#include "robmrag/fixtures.hpp"
#include "robmrag/pipeline.hpp"
#include "robmrag/pose_refinement.hpp"
#include "test_support.hpp"

using namespace robmrag;
using robmrag::testkit::Rng;
using robmrag::testkit::TempDir;

TEST(Candidates, DefaultSpecHasSixPlusIdentity) {
    const auto cands = make_rotation_candidates(default_rotation_spec());
    ASSERT_EQ(cands.size(), 7u);
    EXPECT_TRUE(cands[0].rot_matrix.isIdentity(0.0));
    for (std::size_t k = 0; k < cands.size(); ++k) {
        const auto& r = cands[k].rot_matrix;
        EXPECT_EQ(cands[k].index, static_cast<int>(k));
        EXPECT_LE((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
        EXPECT_LE((to_matrix(cands[k].rot_quat) - r).cwiseAbs().maxCoeff(), 1e-15);
    }
    // +-10 degrees about x, y, z in that order.
    const double a = 10.0 * std::numbers::pi / 180.0;
    EXPECT_LE((cands[1].rot_matrix - testkit::rodrigues(Vec3::UnitX(), a)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((cands[2].rot_matrix - testkit::rodrigues(Vec3::UnitX(), -a)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((cands[3].rot_matrix - testkit::rodrigues(Vec3::UnitY(), a)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((cands[6].rot_matrix - testkit::rodrigues(Vec3::UnitZ(), -a)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Candidates, ZeroAngleIsIdentity) {
    const std::vector<AxisAngle> spec{{Vec3::UnitZ(), 0.0}};
    const auto cands = make_rotation_candidates(spec);
    ASSERT_EQ(cands.size(), 2u);
    EXPECT_LE((cands[1].rot_matrix - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Candidates, QuarterTurnColumns) {
    const std::vector<AxisAngle> spec{{Vec3::UnitZ(), 90.0}};
    const Mat3 r = make_rotation_candidates(spec)[1].rot_matrix;
    EXPECT_LE((r.col(0) - Vec3(0, 1, 0)).norm(), 1e-12);
    EXPECT_LE((r.col(1) - Vec3(-1, 0, 0)).norm(), 1e-12);
    EXPECT_LE((r.col(2) - Vec3(0, 0, 1)).norm(), 1e-12);
}

TEST(Candidates, ZeroAxisThrows) {
    const std::vector<AxisAngle> spec{{Vec3::Zero(), 10.0}};
    EXPECT_THROW(make_rotation_candidates(spec), GeometryError);
}

namespace {

GraspPose sample_pose() {
    GraspPose p;
    p.contact_2d = Vec2(0.4, 0.6);
    p.contact_3d = Vec3(0.3, -0.1, 2.0);
    p.dir_up = Vec3(0, 0, 1);
    p.dir_forward = Vec3(1, 0, 0);
    return p;
}

}  // namespace

TEST(TransformPose, IdentityLeavesPoseUnchanged) {
    const auto ref = sample_pose();
    const auto out = transform_pose(ref, make_rotation_candidates({})[0], Vec3(1, 2, 3));
    EXPECT_EQ(*out.contact_3d, *ref.contact_3d);
    EXPECT_EQ(out.dir_up, ref.dir_up);
    EXPECT_EQ(out.dir_forward, ref.dir_forward);
}

TEST(TransformPose, PivotAtContactIsFixedPoint) {
    const auto ref = sample_pose();
    for (const auto& cand : make_rotation_candidates(default_rotation_spec())) {
        const auto out = transform_pose(ref, cand, *ref.contact_3d);
        EXPECT_LE((*out.contact_3d - *ref.contact_3d).norm(), 1e-15);
        EXPECT_LE((out.dir_up - cand.rot_matrix * ref.dir_up).norm(), 1e-12);
    }
}

TEST(TransformPose, QuarterTurnAboutOrigin) {
    GraspPose ref = sample_pose();
    ref.contact_3d = Vec3(1, 0, 2);
    ref.dir_up = Vec3(1, 0, 0);
    ref.dir_forward = Vec3(0, 0, 1);
    const std::vector<AxisAngle> spec{{Vec3::UnitZ(), 90.0}};
    const auto out = transform_pose(ref, make_rotation_candidates(spec)[1], Vec3::Zero());
    EXPECT_LE((*out.contact_3d - Vec3(0, 1, 2)).norm(), 1e-12);
    EXPECT_LE((out.dir_up - Vec3(0, 1, 0)).norm(), 1e-12);
    EXPECT_LE((out.dir_forward - Vec3(0, 0, 1)).norm(), 1e-12);
}

TEST(TransformPose, NeedsContact3d) {
    GraspPose ref = sample_pose();
    ref.contact_3d.reset();
    EXPECT_THROW(transform_pose(ref, make_rotation_candidates({})[0], Vec3::Zero()), ValidationError);
}

TEST(TransformPoseProperty, DirectionsStayUnitAndMatchMatrix) {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        GraspPose ref;
        ref.contact_3d = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(1, 3));
        ref.dir_up = rng.unit_vector();
        ref.dir_forward = rng.unit_vector();
        const std::vector<AxisAngle> spec{{rng.unit_vector(), rng.uniform(-180, 180)}};
        const auto cand = make_rotation_candidates(spec)[1];
        const Vec3 pivot(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(1, 3));
        const auto out = transform_pose(ref, cand, pivot);
        ASSERT_NEAR(out.dir_up.norm(), 1.0, 1e-6);
        ASSERT_NEAR(out.dir_forward.norm(), 1.0, 1e-6);
        ASSERT_LE((out.dir_up - cand.rot_matrix * ref.dir_up).norm(), 1e-9);
        // The extrinsic form moves points the same way.
        const auto ext = candidate_extrinsics(cand, pivot);
        ASSERT_LE((ext.rotation * *ref.contact_3d + ext.translation - *out.contact_3d).norm(), 1e-9);
    }
}

TEST(Depth, LookupAndLift) {
    const Camera cam{100, 100, 2, 1.5, 4, 3};
    DepthMap depth{3, 4, std::vector<float>(12, 0.0f)};
    depth.values[1 * 4 + 2] = 2.0f;
    // Normalized (0.5, 0.5) -> pixel (2, 1.5) -> nearest (2, 2) after rounding.
    EXPECT_THROW(depth_at(depth, cam, Vec2(0.5, 0.5)), GeometryError);
    const Vec2 p(2.0 / 4, 1.0 / 3);
    EXPECT_EQ(depth_at(depth, cam, p), 2.0);
    EXPECT_LE((lift_point(cam, depth, p) - Vec3(0, -0.01, 2)).norm(), 1e-12);
    EXPECT_THROW(depth_at(depth, Camera{100, 100, 2, 1, 5, 3}, p), GeometryError);
}

namespace {

struct PlantedSetup {
    TempDir dir;
    fixtures::PipelineFixture fx;
    KnowledgeBase kb;
    Observation obs;

    explicit PlantedSetup(int k) {
        fx = fixtures::write_pipeline_fixture(dir.path(), k);
        kb = KnowledgeBase::build({fx.manifest});
        obs = load_observation(fx.obs_dir);
    }
};

}  // namespace

TEST(Refine, IdentityObservationPicksIdentity) {
    PlantedSetup s(0);
    const auto& ref = s.kb.get_example(s.fx.reference_id);
    const auto r = refine(ref, s.obs.features, *s.obs.mask, *s.obs.camera,
                          make_rotation_candidates(default_rotation_spec()));
    EXPECT_EQ(r.best_pose().candidate.index, 0);
    EXPECT_EQ(r.best_pose().imd_k.imd, 0.0);
    EXPECT_EQ(r.candidates.size(), 7u);
    EXPECT_LE((r.pivot - ref.gaussians().centroid()).norm(), 0.0);
    EXPECT_LE((r.best_pose().pose.contact_2d - *ref.record().contact_point).norm(), 1e-12);
}

TEST(Refine, RecoversPlantedCandidateThree) {
    PlantedSetup s(3);
    const auto& ref = s.kb.get_example(s.fx.reference_id);
    const auto r = refine(ref, s.obs.features, *s.obs.mask, *s.obs.camera,
                          make_rotation_candidates(default_rotation_spec()));
    EXPECT_EQ(r.best_pose().candidate.index, 3);
    EXPECT_EQ(r.best_pose().imd_k.imd, 0.0);
    for (const auto& c : r.candidates) {
        if (c.candidate.index != 3) EXPECT_GT(c.imd_k.imd_normalized, 0.0);
    }
}

TEST(Refine, SingleCandidateSweep) {
    PlantedSetup s(2);
    const auto& ref = s.kb.get_example(s.fx.reference_id);
    const auto r = refine(ref, s.obs.features, *s.obs.mask, *s.obs.camera, make_rotation_candidates({}));
    ASSERT_EQ(r.candidates.size(), 1u);
    EXPECT_EQ(r.best, 0u);
    EXPECT_GT(r.best_pose().imd_k.imd, 0.0);
    EXPECT_LE((r.best_pose().pose.contact_2d - *ref.record().contact_point).norm(), 1e-12);
}

TEST(Refine, ExternalFilesMode) {
    PlantedSetup s(4);
    const auto& ref = s.kb.get_example(s.fx.reference_id);
    const auto cands = make_rotation_candidates(default_rotation_spec());
    const Vec3 pivot = ref.gaussians().centroid();
    TempDir ext;
    for (const auto& c : cands) {
        const auto map = synthetic_candidate_features(ref.gaussians(), *s.obs.camera, c, pivot, {}, false);
        write_tensor_file(candidate_feature_path(ext.path(), ref.id(), c.index), to_tensor(map));
    }
    RefineOptions opts;
    opts.source = FeatureSource::external_files;
    opts.external_dir = ext.path();
    const auto r = refine(ref, s.obs.features, *s.obs.mask, *s.obs.camera, cands, opts);
    EXPECT_EQ(r.best_pose().candidate.index, 4);
    EXPECT_EQ(r.source, FeatureSource::external_files);
    EXPECT_LE((r.pivot - r.reference_contact_3d).norm(), 0.0);

    std::filesystem::remove(candidate_feature_path(ext.path(), ref.id(), 5));
    EXPECT_THROW(refine(ref, s.obs.features, *s.obs.mask, *s.obs.camera, cands, opts), NotFoundError);
}

TEST(Refine, KeepRendersAndClampFlag) {
    PlantedSetup s(1);
    const auto& ref = s.kb.get_example(s.fx.reference_id);
    RefineOptions opts;
    opts.keep_renders = true;
    const auto r = refine(ref, s.obs.features, *s.obs.mask, *s.obs.camera,
                          make_rotation_candidates(default_rotation_spec()), opts);
    for (const auto& c : r.candidates) {
        ASSERT_TRUE(c.rendered);
        EXPECT_FALSE(c.contact_clamped);
        EXPECT_NO_THROW(c.pose.validate());
    }
}
