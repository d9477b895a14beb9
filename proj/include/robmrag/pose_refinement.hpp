#pragma once

// Rotation-candidate pose refinement.
//
// The reference contact point is lifted to 3D with its depth map, then a set
// of small rotations R_k is swept. The object rotates about a pivot with the
// camera held fixed, which is the extrinsic [R_k | pivot - R_k pivot]. For
// each candidate the contact point and both gripper directions are rotated,
// the contact is reprojected, a contact frame is re-rendered (or loaded), and
// the candidate is scored by IMD against the observation. The lowest
// normalized IMD wins; ties go to the smallest index. Candidate 0 is always
// the identity.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robmrag/geometric_matching.hpp"
#include "robmrag/geometry.hpp"
#include "robmrag/knowledge_base.hpp"
#include "robmrag/raster.hpp"
#include "robmrag/splat_renderer.hpp"

namespace robmrag {

struct GraspPose {
    Vec2 contact_2d = Vec2::Zero();  // normalized to [0, 1]
    std::optional<Vec3> contact_3d;
    Vec3 dir_up = Vec3::UnitZ();
    Vec3 dir_forward = Vec3::UnitX();

    // Unit directions (1e-6) and contact_2d in [0, 1]^2. Throws ValidationError.
    void validate() const;
};

// Pose stored on a knowledge-base example. Throws ValidationError when the
// record lacks contact_point or either direction.
GraspPose reference_pose(const ManifestRecord& record);

struct AxisAngle {
    Vec3 axis;
    double degrees = 0;
};

struct RotationCandidate {
    int index = 0;
    Mat3 rot_matrix = Mat3::Identity();
    Quat rot_quat;
};

inline constexpr double kDefaultRefineAngleDeg = 10.0;

// {+-angle about camera x, +-angle about y, +-angle about z}.
std::vector<AxisAngle> default_rotation_spec(double angle_deg = kDefaultRefineAngleDeg);

// Identity at index 0 followed by one candidate per spec entry (1..K).
// Throws GeometryError for a zero axis.
std::vector<RotationCandidate> make_rotation_candidates(std::span<const AxisAngle> spec);

// contact_3d <- pivot + R (contact_3d - pivot); directions rotated by
// quaternion conjugation. contact_2d is left for the caller to reproject.
GraspPose transform_pose(const GraspPose& ref, const RotationCandidate& candidate, const Vec3& pivot);

struct Extrinsics {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
};

// [R_k | pivot - R_k pivot]: rotation of the scene about the pivot.
Extrinsics candidate_extrinsics(const RotationCandidate& candidate, const Vec3& pivot);

// Depth at a normalized image point (nearest pixel). The depth map must have
// the camera's size. Throws GeometryError when the depth is missing.
double depth_at(const DepthMap& depth, const Camera& cam, const Vec2& normalized);

// Backprojects a normalized image point through a depth map.
Vec3 lift_point(const Camera& cam, const DepthMap& depth, const Vec2& normalized);

enum class FeatureSource { synthetic_render, external_files };
std::string_view to_string(FeatureSource source);

// Settings for rendering contact frames as features. The observation for
// synthetic mode has to be produced with the same settings.
struct SyntheticFeatureSettings {
    std::vector<double> background = {0.5, 0.5, 0.5};
    bool include_alpha = true;
};

struct RefineOptions {
    FeatureSource source = FeatureSource::synthetic_render;
    SyntheticFeatureSettings synthetic;
    // L2-normalize candidate feature pixels, matching the knowledge base.
    bool normalize_features = true;
    // Directory holding <example_id>.cand<k>.feat; defaults to the record's
    // manifest directory.
    std::filesystem::path external_dir;
    bool keep_renders = false;
    ImdOptions imd;
    RenderOptions render;
};

struct RefinedPose {
    RotationCandidate candidate;
    GraspPose pose;
    ImdResult imd_k;
    std::shared_ptr<const RenderOutput> rendered;  // synthetic mode with keep_renders
    Vec2 contact_pixel = Vec2::Zero();
    bool contact_clamped = false;  // reprojection fell outside the image
};

struct RefineResult {
    std::size_t best = 0;  // position in candidates
    std::vector<RefinedPose> candidates;
    Vec3 pivot = Vec3::Zero();
    Vec3 reference_contact_3d = Vec3::Zero();
    FeatureSource source = FeatureSource::synthetic_render;

    const RefinedPose& best_pose() const { return candidates.at(best); }
};

inline constexpr std::string_view kMotionConvention = "object_rotates_about_pivot_camera_fixed";
inline constexpr std::string_view kDirectionConvention = "vector_conjugation";

std::filesystem::path candidate_feature_path(const std::filesystem::path& dir, const std::string& example_id,
                                             int k);

// Candidate feature map in synthetic mode: render, then normalize if asked.
DenseFeatureMap synthetic_candidate_features(const GaussianSet& gaussians, const Camera& cam,
                                             const RotationCandidate& candidate, const Vec3& pivot,
                                             const SyntheticFeatureSettings& settings, bool normalize,
                                             const RenderOptions& render = {},
                                             std::shared_ptr<const RenderOutput>* keep = nullptr);

RefineResult refine(const ManipulationExample& ref, const DenseFeatureMap& obs_features,
                    const InstanceMask& obs_mask, const Camera& cam,
                    const std::vector<RotationCandidate>& candidates, const RefineOptions& options = {});

}  // namespace robmrag
