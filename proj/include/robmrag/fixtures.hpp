#pragma once

// Synthetic, fully deterministic fixtures: a small Gaussian-splat object,
// knowledge bases with planted embeddings, and observation directories.
// `robmrag fixtures gen` writes them to disk so every end-to-end check runs
// from a clean checkout.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "robmrag/geometry.hpp"
#include "robmrag/pipeline.hpp"
#include "robmrag/pose_refinement.hpp"
#include "robmrag/splat_renderer.hpp"

namespace robmrag::fixtures {

// 128 x 96, fx = fy = 150, principal point at the image centre.
Camera default_camera();

// A compact asymmetric cluster of anisotropic Gaussians about 2 m in front of
// the camera. Different seeds give different objects.
GaussianSet object_scene(std::uint64_t seed = 7);

// Unit vector e_axis * cos + e_(axis+1) * sin, so that its cosine with the
// basis vector e_axis is exactly `cos_with_axis` up to f32 rounding.
std::vector<float> planted_embedding(std::size_t dim, std::size_t axis, double cos_with_axis);

// Alpha threshold used to derive observation masks from renders.
inline constexpr double kMaskAlpha = 0.5;

// Observation produced by rendering `scene` rotated by `candidate` about the
// scene centroid, with the synthetic feature settings refinement uses.
Observation render_observation(const GaussianSet& scene, const Camera& cam, const RotationCandidate& candidate,
                               const SyntheticFeatureSettings& settings = {});

// Gate used with the planted-rotation fixtures. A 10 degree turn of the
// fixture object moves the normalized IMD to roughly 0.01, well under the
// library default.
inline constexpr double kPlantedTauImd = 0.005;

struct PipelineFixture {
    std::filesystem::path dir;
    std::filesystem::path manifest;
    std::filesystem::path obs_dir;
    std::string instruction;
    std::string reference_id;
    int planted_index = 0;   // rotation candidate the observation was rendered with
    double tau_imd = kDefaultTauImd;
};

// Knowledge base with a reference drawer plus distractors. planted_index 0
// makes the observation identical to the reference contact frame; k > 0
// renders it under default candidate k.
PipelineFixture write_pipeline_fixture(const std::filesystem::path& dir, int planted_index);

struct RetrievalFixture {
    std::filesystem::path manifest;
    std::string instruction;
    std::vector<float> instruction_embedding;
    Priority expected = Priority::p1_sparse;
};

// Three-priority fixtures. The P2 fixture plants a best simulation cosine of
// 0.91, the P3 fixture one of 0.40.
RetrievalFixture write_retrieval_fixture(const std::filesystem::path& dir, Priority which);

struct VisualFixture {
    std::filesystem::path manifest;
    std::vector<float> obs_embedding;
    std::vector<std::string> candidates;         // in scrambled order
    std::vector<std::string> expected_top;       // best 5, in order
    std::vector<double> planted_cosines;         // parallel to candidates
};

// Eight candidates with planted visual cosines.
VisualFixture write_visual_fixture(const std::filesystem::path& dir);

// Writes every fixture under dir and returns a JSON summary (also written to
// dir/fixtures.json).
nlohmann::ordered_json write_all(const std::filesystem::path& dir);

}  // namespace robmrag::fixtures
