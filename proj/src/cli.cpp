#include "robmrag/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "robmrag/error.hpp"
#include "robmrag/fixtures.hpp"
#include "robmrag/knowledge_base.hpp"
#include "robmrag/metrics.hpp"
#include "robmrag/pipeline.hpp"
#include "robmrag/splat_renderer.hpp"

namespace robmrag {
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct KbArgs {
    std::vector<std::string> manifests;
    std::string out;
    bool no_normalize = false;
};

struct QueryArgs {
    std::vector<std::string> manifests;
    std::string instruction;
    std::string instruction_embedding;
    std::string obs_dir;
    std::size_t top_n = 5;
    double tau_den = 0.75;
    double tau_imd = kDefaultTauImd;
    double refine_angle_deg = kDefaultRefineAngleDeg;
    std::string refine_mode = "auto";
    std::string trace;
    bool json = false;
};

struct RenderArgs {
    std::string asset;
    std::string camera;
    std::string out;
    std::string axis = "y";
    double degrees = 0;
    std::vector<double> background = {0.0, 0.0, 0.0};
};

struct PoseLossArgs {
    std::vector<double> pred;
    std::vector<double> gt;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
};

std::vector<fs::path> to_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

Camera read_camera(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        Camera cam{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                   j.at("cy").get<double>(), j.at("width").get<int>(), j.at("height").get<int>()};
        cam.validate();
        return cam;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

GraspPose pose_from(const std::vector<double>& v) {
    GraspPose p;
    p.contact_2d = Vec2(v[0], v[1]);
    p.dir_up = Vec3(v[2], v[3], v[4]);
    p.dir_forward = Vec3(v[5], v[6], v[7]);
    return p;
}

ojson kb_summary(const KnowledgeBase& kb) {
    ojson counts;
    for (auto s : {Source::simulation, Source::robotic, Source::internet}) {
        counts[std::string(to_string(s))] = kb.ids_for(s).size();
    }
    return {{"records", kb.size()}, {"sources", counts}, {"objects", kb.object_index().size()}};
}

int run_kb_build(const KbArgs& a, std::ostream& out) {
    KnowledgeBaseOptions opts;
    opts.normalize_features = !a.no_normalize;
    const auto kb = KnowledgeBase::build(to_paths(a.manifests), opts);
    if (!a.out.empty()) {
        const fs::path dest = a.out;
        const auto base = fs::absolute(dest).parent_path();
        std::string lines;
        for (const auto& id : kb.ids()) lines += manifest_line(kb.get_example(id).record(), base) + "\n";
        std::ofstream(dest, std::ios::binary) << lines;
    }
    out << kb_summary(kb).dump(2) << "\n";
    return kExitOk;
}

int run_kb_validate(const KbArgs& a, std::ostream& out, std::ostream& err) {
    KnowledgeBaseOptions opts;
    opts.normalize_features = !a.no_normalize;
    const auto kb = KnowledgeBase::build(to_paths(a.manifests), opts);
    const auto report = kb.validate();
    ojson records = ojson::array();
    for (const auto& r : report.records) {
        records.push_back({{"id", r.id}, {"ok", r.ok}, {"reasons", r.reasons}});
        if (!r.ok) {
            for (const auto& reason : r.reasons) err << "invalid record '" << r.id << "': " << reason << "\n";
        }
    }
    out << ojson{{"records", records}, {"failures", report.failures()}}.dump(2) << "\n";
    return report.ok() ? kExitOk : kExitData;
}

int run_query_cmd(const QueryArgs& a, std::ostream& out, std::ostream& err) {
    PipelineConfig cfg;
    cfg.retrieval.top_n = a.top_n;
    cfg.retrieval.tau_den = a.tau_den;
    cfg.retrieval.validate();
    cfg.tau_imd = a.tau_imd;
    cfg.refine_angle_deg = a.refine_angle_deg;
    if (a.refine_mode == "synthetic") {
        cfg.refine_mode = RefineMode::synthetic_render;
    } else if (a.refine_mode == "external") {
        cfg.refine_mode = RefineMode::external_files;
    }

    const auto kb = KnowledgeBase::build(to_paths(a.manifests));
    const auto obs = load_observation(a.obs_dir, kb.options().normalize_features);

    std::optional<std::vector<float>> text_embedding = obs.instruction_embedding;
    if (!a.instruction_embedding.empty()) {
        text_embedding = embedding_from_tensor(read_tensor_file(a.instruction_embedding));
    }
    const auto instruction = Instruction::from_text(a.instruction, text_embedding);
    const auto result = run_query(kb, instruction, obs, cfg);

    for (const auto& w : result.warnings) err << "warning: " << w << "\n";
    if (!a.trace.empty()) std::ofstream(a.trace) << to_json(result.trace).dump(2) << "\n";
    if (a.json) {
        out << to_json(result).dump(2) << "\n";
    } else {
        out << result.prompt_payload;
    }
    return kExitOk;
}

int run_render(const RenderArgs& a, std::ostream& out) {
    const auto set = gaussians_from_tensor(read_tensor_file(a.asset));
    const Camera cam = a.camera.empty() ? fixtures::default_camera() : read_camera(a.camera);
    cam.validate();
    if (a.background.size() != static_cast<std::size_t>(set.channels)) {
        throw ValidationError("background needs one value per color channel");
    }
    Vec3 axis = Vec3::UnitY();
    if (a.axis == "x") axis = Vec3::UnitX();
    if (a.axis == "z") axis = Vec3::UnitZ();
    const auto cand = make_rotation_candidates(std::vector<AxisAngle>{{axis, a.degrees}}).back();
    const auto ext = candidate_extrinsics(cand, set.centroid());
    const auto image = render(set, cam, ext.rotation, ext.translation, a.background);
    const auto ppm = encode_ppm(image);
    std::ofstream f(a.out, std::ios::binary);
    if (!f) throw NotFoundError("cannot write " + a.out);
    f.write(reinterpret_cast<const char*>(ppm.data()), static_cast<std::streamsize>(ppm.size()));
    out << "wrote " << a.out << " (" << image.width << "x" << image.height << ", " << set.size() << " gaussians)\n";
    return kExitOk;
}

int run_pose_loss(const PoseLossArgs& a, std::ostream& out) {
    const double loss = pose_loss(pose_from(a.pred), pose_from(a.gt), {a.lambda1, a.lambda2});
    out << ojson{{"pose_loss", loss}}.dump() << "\n";
    return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Retrieval-augmented manipulation pose engine", "robmrag"};
    app.require_subcommand(1);

    KbArgs kb_args;
    auto* kb = app.add_subcommand("kb", "Knowledge-base tooling");
    kb->require_subcommand(1);
    auto* kb_build = kb->add_subcommand("build", "Load and merge manifests, print a summary");
    kb_build->add_option("--manifest", kb_args.manifests, "Manifest file (repeatable)")->required();
    kb_build->add_option("--out", kb_args.out, "Write the merged manifest here");
    kb_build->add_flag("--no-normalize", kb_args.no_normalize, "Keep contact features unnormalized");
    auto* kb_validate = kb->add_subcommand("validate", "Read every referenced tensor and report failures");
    kb_validate->add_option("--manifest", kb_args.manifests, "Manifest file (repeatable)")->required();

    QueryArgs q;
    auto* query = app.add_subcommand("query", "Retrieve, match and refine a grasp pose");
    query->add_option("--manifest", q.manifests, "Manifest file (repeatable)")->required();
    query->add_option("--instruction", q.instruction, "Instruction text")->required();
    query->add_option("--obs-dir", q.obs_dir, "Observation directory")->required();
    query->add_option("--instruction-embedding", q.instruction_embedding,
                      "Instruction embedding tensor (default: <obs-dir>/instruction_embedding.tensor)");
    query->add_option("--top-n", q.top_n, "Visual filter size")->capture_default_str()->check(CLI::PositiveNumber);
    query->add_option("--tau-den", q.tau_den, "Dense acceptance threshold")->capture_default_str();
    query->add_option("--tau-imd", q.tau_imd, "Normalized IMD gate")->capture_default_str();
    query->add_option("--refine-angle-deg", q.refine_angle_deg, "Rotation candidate magnitude")
        ->capture_default_str();
    query->add_option("--refine-mode", q.refine_mode, "Candidate features source")
        ->check(CLI::IsMember({"auto", "synthetic", "external"}))
        ->capture_default_str();
    query->add_option("--trace", q.trace, "Write the retrieval trace JSON here");
    query->add_flag("--json", q.json, "Print the full result as JSON");

    RenderArgs r;
    auto* render_cmd = app.add_subcommand("render", "Render a Gaussian asset to PPM");
    render_cmd->add_option("--asset", r.asset, "Gaussian asset tensor [N, 14]")->required();
    render_cmd->add_option("--out", r.out, "Output PPM path")->required();
    render_cmd->add_option("--camera", r.camera, "Camera JSON (default: 128x96 fixture camera)");
    render_cmd->add_option("--axis", r.axis, "Rotation axis about the centroid")
        ->check(CLI::IsMember({"x", "y", "z"}))
        ->capture_default_str();
    render_cmd->add_option("--degrees", r.degrees, "Rotation angle")->capture_default_str();
    render_cmd->add_option("--background", r.background, "Background color")->expected(1, 16);

    PoseLossArgs pl;
    auto* metrics_cmd = app.add_subcommand("metrics", "Loss evaluators");
    metrics_cmd->require_subcommand(1);
    auto* pose_loss_cmd = metrics_cmd->add_subcommand("pose-loss", "Pose regression loss");
    pose_loss_cmd->add_option("--pred", pl.pred, "x y up_x up_y up_z fwd_x fwd_y fwd_z")->expected(8)->required();
    pose_loss_cmd->add_option("--gt", pl.gt, "x y up_x up_y up_z fwd_x fwd_y fwd_z")->expected(8)->required();
    pose_loss_cmd->add_option("--lambda1", pl.lambda1)->capture_default_str();
    pose_loss_cmd->add_option("--lambda2", pl.lambda2)->capture_default_str();

    std::string fixtures_out;
    auto* fixtures_cmd = app.add_subcommand("fixtures", "Synthetic fixtures");
    fixtures_cmd->require_subcommand(1);
    auto* gen = fixtures_cmd->add_subcommand("gen", "Write every synthetic fixture");
    gen->add_option("--out", fixtures_out, "Output directory")->required();

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.emplace_back("robmrag");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (kb_build->parsed()) return run_kb_build(kb_args, out);
        if (kb_validate->parsed()) return run_kb_validate(kb_args, out, err);
        if (query->parsed()) return run_query_cmd(q, out, err);
        if (render_cmd->parsed()) return run_render(r, out);
        if (pose_loss_cmd->parsed()) return run_pose_loss(pl, out);
        if (gen->parsed()) {
            const auto summary = fixtures::write_all(fixtures_out);
            out << summary.dump(2) << "\n";
            return kExitOk;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace robmrag
