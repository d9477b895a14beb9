#include <gtest/gtest.h>

#include "robmrag/error.hpp"
#include "robmrag/fixtures.hpp"
#include "robmrag/pipeline.hpp"
#include "test_support.hpp"

using namespace robmrag;
using robmrag::testkit::TempDir;

namespace {

struct Loaded {
    KnowledgeBase kb;
    Observation obs;
    Instruction instruction;
};

Loaded load(const fixtures::PipelineFixture& fx) {
    auto kb = KnowledgeBase::build({fx.manifest});
    auto obs = load_observation(fx.obs_dir);
    auto instr = Instruction::from_text(fx.instruction, obs.instruction_embedding);
    return {std::move(kb), std::move(obs), std::move(instr)};
}

}  // namespace

TEST(RunQuery, SelfConsistentFixture) {
    TempDir dir;
    const auto fx = fixtures::write_pipeline_fixture(dir.path(), 0);
    const auto in = load(fx);
    const auto r = run_query(in.kb, in.instruction, in.obs);
    EXPECT_TRUE(r.trace.priority_used == Priority::p1_sparse || r.trace.priority_used == Priority::p2_dense);
    EXPECT_EQ(r.matched.best_id, fx.reference_id);
    EXPECT_EQ(r.matched.best.imd, 0.0);
    EXPECT_EQ(r.matched.gate, Gate::accept);
    EXPECT_FALSE(r.refined);
    const auto& stored = in.kb.get_example(fx.reference_id).record();
    EXPECT_EQ(r.output_pose.contact_2d, *stored.contact_point);
    EXPECT_EQ(r.output_pose.dir_up, *stored.dir_up);
    EXPECT_EQ(r.output_pose.dir_forward, *stored.dir_forward);
    ASSERT_TRUE(r.output_pose.contact_3d);
    EXPECT_GT(r.output_pose.contact_3d->z(), 1.0);
    EXPECT_TRUE(r.warnings.empty());
}

TEST(RunQuery, PlantedRotationIsRefined) {
    TempDir dir;
    for (int k : {2, 5}) {
        const auto fx = fixtures::write_pipeline_fixture(dir / std::to_string(k), k);
        const auto in = load(fx);
        PipelineConfig cfg;
        cfg.tau_imd = fx.tau_imd;
        const auto r = run_query(in.kb, in.instruction, in.obs, cfg);
        EXPECT_EQ(r.matched.gate, Gate::needs_refinement);
        ASSERT_TRUE(r.refined);
        EXPECT_EQ(r.refined->best_pose().candidate.index, k);
        EXPECT_EQ(r.output_pose.dir_up, r.refined->best_pose().pose.dir_up);
        EXPECT_EQ(r.output_pose.contact_2d, r.refined->best_pose().pose.contact_2d);
    }
}

TEST(RunQuery, DefaultGateAcceptsSmallRotations) {
    TempDir dir;
    const auto fx = fixtures::write_pipeline_fixture(dir.path(), 1);
    const auto in = load(fx);
    const auto r = run_query(in.kb, in.instruction, in.obs);
    EXPECT_LT(r.matched.best.imd_normalized, kDefaultTauImd);
    EXPECT_EQ(r.matched.gate, Gate::accept);
}

TEST(RunQuery, EmptyKnowledgeBase) {
    KnowledgeBase kb;
    Observation obs;
    obs.features = DenseFeatureMap(2, 2, 1, 1.0f);
    obs.embedding = {1.0f};
    try {
        run_query(kb, Instruction::from_text("open the drawer"), obs);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_STREQ(e.what(), "retrieval: empty knowledge base");
        EXPECT_EQ(e.stage(), "retrieval");
    }
}

TEST(RunQuery, MissingDepthIsAWarning) {
    TempDir dir;
    const auto fx = fixtures::write_pipeline_fixture(dir.path(), 0);
    auto in = load(fx);
    in.obs.depth.reset();
    const auto r = run_query(in.kb, in.instruction, in.obs);
    EXPECT_FALSE(r.output_pose.contact_3d);
    EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(RunQuery, DeterministicAndJsonRoundtrips) {
    TempDir dir;
    const auto fx = fixtures::write_pipeline_fixture(dir.path(), 3);
    const auto in = load(fx);
    PipelineConfig cfg;
    cfg.tau_imd = fx.tau_imd;
    const auto a = to_json(run_query(in.kb, in.instruction, in.obs, cfg)).dump(2);
    const auto b = to_json(run_query(in.kb, in.instruction, in.obs, cfg)).dump(2);
    EXPECT_EQ(a, b);
    EXPECT_EQ(nlohmann::ordered_json::parse(a).dump(2), a);
    const auto j = nlohmann::ordered_json::parse(a);
    EXPECT_EQ(j["matching"]["gate"], "needs_refinement");
    EXPECT_EQ(j["refinement"]["best_index"], 3);
    EXPECT_EQ(j["refinement"]["candidates"].size(), 7u);
    EXPECT_EQ(j["output_pose"]["reference_id"], fx.reference_id);
}

TEST(Observation, WriteLoadRoundtrip) {
    TempDir dir;
    Observation obs;
    obs.features = DenseFeatureMap(2, 3, 2, 0.0f);
    obs.features.values = {3, 4, 0, 0, 1, 0, 0, 2, 5, 12, 1, 1};
    obs.embedding = {0.6f, 0.8f};
    obs.mask = InstanceMask::full(2, 3);
    obs.camera = Camera{50, 50, 1, 1, 3, 2};
    write_observation(dir.path(), obs);
    const auto raw = load_observation(dir.path(), false);
    EXPECT_EQ(raw.features.values, obs.features.values);
    EXPECT_EQ(raw.camera->fx, 50);
    EXPECT_FALSE(raw.depth);
    const auto norm = load_observation(dir.path());
    EXPECT_FLOAT_EQ(norm.features.values[0], 0.6f);
    EXPECT_EQ(norm.features.values[2], 0.0f);
    EXPECT_THROW(load_observation(dir / "missing"), NotFoundError);
}

TEST(Prompt, FormattingContract) {
    QueryResult r;
    r.instruction = "open the drawer";
    r.reference_id = "drawer_001";
    r.output_pose.contact_2d = Vec2(0.5, 0.5);
    r.output_pose.dir_up = Vec3(0, 0, 1);
    r.output_pose.dir_forward = Vec3(1, 0, 0);
    const auto text = emit_prompt(r);
    EXPECT_NE(text.find("contact: (0.5000, 0.5000)\n"), std::string::npos);
    EXPECT_NE(text.find("reference: drawer_001 (simulation)\n"), std::string::npos);
    EXPECT_NE(text.find("dir_up: (0.0000, 0.0000, 1.0000)\n"), std::string::npos);
    EXPECT_EQ(text, emit_prompt(r));
    const auto instr = text.find("instruction:"), ref = text.find("reference:"), contact = text.find("contact:"),
               up = text.find("dir_up:"), fwd = text.find("dir_forward:"), imd = text.find("imd:");
    EXPECT_LT(instr, ref);
    EXPECT_LT(ref, contact);
    EXPECT_LT(contact, up);
    EXPECT_LT(up, fwd);
    EXPECT_LT(fwd, imd);
}

TEST(Prompt, NoNegativeZero) {
    EXPECT_EQ(format_fixed4(-0.0), "0.0000");
    EXPECT_EQ(format_fixed4(-0.00001), "0.0000");
    EXPECT_EQ(format_fixed4(-0.5), "-0.5000");
    QueryResult r;
    r.output_pose.dir_up = Vec3(-0.0, -0.0, 1);
    r.output_pose.dir_forward = Vec3(0, -1, -0.0);
    const auto text = emit_prompt(r);
    EXPECT_EQ(text.find("-0.0000"), std::string::npos);
    EXPECT_NE(text.find("dir_forward: (0.0000, -1.0000, 0.0000)"), std::string::npos);
}

TEST(Raster, ResizeNearest) {
    InstanceMask m(2, 2);
    m.bits = {1, 0, 0, 1};
    const auto up = resize_nearest(m, 4, 4);
    const std::vector<std::uint8_t> expected{1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1};
    EXPECT_EQ(up.bits, expected);
    const auto down = resize_nearest(up, 2, 2);
    EXPECT_EQ(down.bits, m.bits);
    const auto odd = resize_nearest(m, 3, 1);
    // Row centres 0.5/3, 1.5/3, 2.5/3 of the source map onto rows 0, 1, 1; column centre onto column 1.
    EXPECT_EQ(odd.bits, (std::vector<std::uint8_t>{0, 1, 1}));
}

TEST(RunQuery, HighResolutionMaskIsResized) {
    TempDir dir;
    const auto fx = fixtures::write_pipeline_fixture(dir.path(), 0);
    auto in = load(fx);
    const auto base = *in.obs.mask;
    InstanceMask big(base.height * 2, base.width * 2);
    for (int r = 0; r < big.height; ++r) {
        for (int c = 0; c < big.width; ++c) big.bits[static_cast<std::size_t>(r) * big.width + c] = base.at(r / 2, c / 2);
    }
    in.obs.mask = big;
    const auto r = run_query(in.kb, in.instruction, in.obs);
    EXPECT_EQ(r.matched.best.mask_pixels, base.count());
    EXPECT_EQ(r.matched.best.imd, 0.0);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("resized"), std::string::npos);
}
