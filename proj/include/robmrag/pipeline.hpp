#pragma once

// End-to-end query: textual retrieval -> visual top-n -> minimum-IMD match ->
// pose refinement when the match is gated -> output pose and prompt payload.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "robmrag/geometric_matching.hpp"
#include "robmrag/knowledge_base.hpp"
#include "robmrag/pose_refinement.hpp"
#include "robmrag/retrieval.hpp"

namespace robmrag {

// Observation directory layout (all tensors in the tensor_store format):
//   features.tensor               [H, W, C] dense features (required)
//   embedding.tensor              [D] image embedding (required)
//   mask.tensor                   [H, W] instance mask, 0/1 (default: all ones)
//   depth.tensor                  [H, W] metres (optional)
//   instruction_embedding.tensor  [D'] text embedding (optional)
//   camera.json                   {"fx","fy","cx","cy","width","height"} (optional)
struct ObservationFiles {
    static constexpr const char* features = "features.tensor";
    static constexpr const char* embedding = "embedding.tensor";
    static constexpr const char* mask = "mask.tensor";
    static constexpr const char* depth = "depth.tensor";
    static constexpr const char* instruction_embedding = "instruction_embedding.tensor";
    static constexpr const char* camera = "camera.json";
};

struct Observation {
    DenseFeatureMap features;
    std::vector<float> embedding;
    std::optional<InstanceMask> mask;
    std::optional<DepthMap> depth;
    std::optional<Camera> camera;
    std::optional<std::vector<float>> instruction_embedding;
};

Observation load_observation(const std::filesystem::path& dir, bool normalize_features = true);
// Writes the raw (unnormalized) observation files.
void write_observation(const std::filesystem::path& dir, const Observation& obs);

enum class RefineMode { automatic, synthetic_render, external_files };

struct PipelineConfig {
    RetrievalConfig retrieval;
    double tau_imd = kDefaultTauImd;
    double refine_angle_deg = kDefaultRefineAngleDeg;
    // Empty means default_rotation_spec(refine_angle_deg).
    std::vector<AxisAngle> rotation_spec;
    RefineMode refine_mode = RefineMode::automatic;
    SyntheticFeatureSettings synthetic;
    ImdOptions imd;
    RenderOptions render;
};

struct QueryResult {
    std::string instruction;
    RetrievalTrace trace;
    VisualRanking visual;
    MatchResult matched;
    std::optional<RefineResult> refined;
    std::string reference_id;
    Source reference_source = Source::simulation;
    GraspPose output_pose;
    std::vector<std::string> warnings;
    std::string prompt_payload;
};

// Stage failures are rethrown as StageError("retrieval" | "visual" | "matching"
// | "refinement" | "output", ...).
QueryResult run_query(const KnowledgeBase& kb, const Instruction& instruction, const Observation& obs,
                      const PipelineConfig& config = {});

// Deterministic text block for a downstream generator.
std::string emit_prompt(const QueryResult& result);

// Fixed-point with 4 decimals; never emits "-0.0000".
std::string format_fixed4(double value);

nlohmann::ordered_json to_json(const QueryResult& result);
nlohmann::ordered_json to_json(const RetrievalTrace& trace);

}  // namespace robmrag
