#include "robmrag/pose_refinement.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "robmrag/error.hpp"

namespace robmrag {
namespace fs = std::filesystem;

void GraspPose::validate() const {
    if (!(std::abs(dir_up.norm() - 1.0) <= 1e-6)) throw ValidationError("dir_up is not a unit vector");
    if (!(std::abs(dir_forward.norm() - 1.0) <= 1e-6)) throw ValidationError("dir_forward is not a unit vector");
    if (!(contact_2d.x() >= 0 && contact_2d.x() <= 1 && contact_2d.y() >= 0 && contact_2d.y() <= 1)) {
        throw ValidationError("contact_2d outside [0, 1]");
    }
}

GraspPose reference_pose(const ManifestRecord& record) {
    if (!record.contact_point || !record.dir_up || !record.dir_forward) {
        throw ValidationError("record '" + record.id + "' has no stored grasp pose");
    }
    GraspPose pose;
    pose.contact_2d = *record.contact_point;
    pose.dir_up = *record.dir_up;
    pose.dir_forward = *record.dir_forward;
    return pose;
}

std::vector<AxisAngle> default_rotation_spec(double angle_deg) {
    return {
        {Vec3::UnitX(), angle_deg}, {Vec3::UnitX(), -angle_deg},
        {Vec3::UnitY(), angle_deg}, {Vec3::UnitY(), -angle_deg},
        {Vec3::UnitZ(), angle_deg}, {Vec3::UnitZ(), -angle_deg},
    };
}

std::vector<RotationCandidate> make_rotation_candidates(std::span<const AxisAngle> spec) {
    std::vector<RotationCandidate> out;
    out.reserve(spec.size() + 1);
    out.push_back({0, Mat3::Identity(), Quat::identity()});
    for (const auto& entry : spec) {
        const Quat q = from_axis_angle(entry.axis, entry.degrees * std::numbers::pi / 180.0);
        out.push_back({static_cast<int>(out.size()), to_matrix(q), q});
    }
    return out;
}

GraspPose transform_pose(const GraspPose& ref, const RotationCandidate& candidate, const Vec3& pivot) {
    if (!ref.contact_3d) throw ValidationError("reference pose has no 3D contact point");
    GraspPose out = ref;
    const Extrinsics ext = candidate_extrinsics(candidate, pivot);
    out.contact_3d = ext.rotation * *ref.contact_3d + ext.translation;
    out.dir_up = rotate(candidate.rot_quat, ref.dir_up);
    out.dir_forward = rotate(candidate.rot_quat, ref.dir_forward);
    if (!(std::abs(out.dir_up.norm() - 1.0) <= 1e-6) || !(std::abs(out.dir_forward.norm() - 1.0) <= 1e-6)) {
        throw ValidationError("rotated gripper direction lost unit norm");
    }
    return out;
}

Extrinsics candidate_extrinsics(const RotationCandidate& candidate, const Vec3& pivot) {
    return {candidate.rot_matrix, pivot - candidate.rot_matrix * pivot};
}

double depth_at(const DepthMap& depth, const Camera& cam, const Vec2& normalized) {
    if (depth.height != cam.height || depth.width != cam.width) {
        throw GeometryError("depth map size does not match the camera");
    }
    const Vec2 pixel(normalized.x() * cam.width, normalized.y() * cam.height);
    if (!(pixel.x() >= 0 && pixel.x() <= cam.width && pixel.y() >= 0 && pixel.y() <= cam.height)) {
        throw GeometryError("contact point outside the image");
    }
    const int col = std::clamp(static_cast<int>(std::lround(pixel.x())), 0, cam.width - 1);
    const int row = std::clamp(static_cast<int>(std::lround(pixel.y())), 0, cam.height - 1);
    const double d = depth.at(row, col);
    if (!(d > 0)) {
        throw GeometryError("no depth at pixel (" + std::to_string(col) + ", " + std::to_string(row) + ")");
    }
    return d;
}

Vec3 lift_point(const Camera& cam, const DepthMap& depth, const Vec2& normalized) {
    const double d = depth_at(depth, cam, normalized);
    return backproject(cam, Vec2(normalized.x() * cam.width, normalized.y() * cam.height), d);
}

std::string_view to_string(FeatureSource source) {
    return source == FeatureSource::synthetic_render ? "synthetic_render" : "external_files";
}

fs::path candidate_feature_path(const fs::path& dir, const std::string& example_id, int k) {
    return dir / (example_id + ".cand" + std::to_string(k) + ".feat");
}

DenseFeatureMap synthetic_candidate_features(const GaussianSet& gaussians, const Camera& cam,
                                             const RotationCandidate& candidate, const Vec3& pivot,
                                             const SyntheticFeatureSettings& settings, bool normalize,
                                             const RenderOptions& render_options,
                                             std::shared_ptr<const RenderOutput>* keep) {
    const auto ext = candidate_extrinsics(candidate, pivot);
    auto image = render(gaussians, cam, ext.rotation, ext.translation, settings.background, render_options);
    auto map = to_features(image, settings.include_alpha);
    if (normalize) normalize_pixels(map);
    if (keep) *keep = std::make_shared<const RenderOutput>(std::move(image));
    return map;
}

RefineResult refine(const ManipulationExample& ref, const DenseFeatureMap& obs_features,
                    const InstanceMask& obs_mask, const Camera& cam,
                    const std::vector<RotationCandidate>& candidates, const RefineOptions& options) {
    cam.validate();
    if (candidates.empty()) throw ValidationError("no rotation candidates");

    RefineResult result;
    result.source = options.source;

    GraspPose base = reference_pose(ref.record());
    if (!ref.has_depth()) throw GeometryError("record '" + ref.id() + "' has no depth map");
    result.reference_contact_3d = lift_point(cam, ref.depth_map(), base.contact_2d);
    base.contact_3d = result.reference_contact_3d;

    const GaussianSet* gaussians = nullptr;
    fs::path external_dir = options.external_dir;
    if (options.source == FeatureSource::synthetic_render) {
        gaussians = &ref.gaussians();
        result.pivot = gaussians->centroid();
    } else {
        if (external_dir.empty()) external_dir = ref.record().manifest.parent_path();
        result.pivot = result.reference_contact_3d;
    }

    result.candidates.reserve(candidates.size());
    for (const auto& cand : candidates) {
        RefinedPose refined;
        refined.candidate = cand;
        refined.pose = transform_pose(base, cand, result.pivot);
        refined.contact_pixel = project_point(cam, *refined.pose.contact_3d);
        Vec2 normalized(refined.contact_pixel.x() / cam.width, refined.contact_pixel.y() / cam.height);
        const Vec2 clamped = normalized.cwiseMax(0.0).cwiseMin(1.0);
        refined.contact_clamped = clamped != normalized;
        refined.pose.contact_2d = clamped;

        DenseFeatureMap features;
        if (gaussians) {
            features = synthetic_candidate_features(*gaussians, cam, cand, result.pivot, options.synthetic,
                                                    options.normalize_features, options.render,
                                                    options.keep_renders ? &refined.rendered : nullptr);
        } else {
            const auto path = candidate_feature_path(external_dir, ref.id(), cand.index);
            if (!fs::exists(path)) throw NotFoundError("missing candidate feature file " + path.string());
            features = feature_map_from_tensor(read_tensor_file(path), options.normalize_features);
        }
        refined.imd_k = imd(obs_features, features, obs_mask, options.imd);
        result.candidates.push_back(std::move(refined));
    }

    for (std::size_t i = 1; i < result.candidates.size(); ++i) {
        const auto& c = result.candidates[i];
        const auto& b = result.candidates[result.best];
        const double a = c.imd_k.imd_normalized, bn = b.imd_k.imd_normalized;
        if (a < bn || (a == bn && c.candidate.index < b.candidate.index)) result.best = i;
    }
    return result;
}

}  // namespace robmrag
