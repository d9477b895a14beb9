#include "robmrag/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "robmrag/error.hpp"

namespace robmrag {
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

Camera camera_from(const Intrinsics& k) { return {k.fx, k.fy, k.cx, k.cy, k.width, k.height}; }

ojson vec_json(const auto& v) {
    ojson out = ojson::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

ojson scored_json(const std::vector<ScoredId>& scored) {
    ojson out = ojson::array();
    for (const auto& s : scored) out.push_back({{"id", s.id}, {"score", s.score}, {"kind", to_string(s.kind)}});
    return out;
}

ojson imd_json(const ImdResult& r) {
    return {{"imd", r.imd}, {"imd_normalized", r.imd_normalized}, {"mask_pixels", r.mask_pixels},
            {"empty_mask", r.empty_mask}};
}

ojson pose_json(const GraspPose& p) {
    ojson out;
    out["contact_2d"] = vec_json(p.contact_2d);
    out["contact_3d"] = p.contact_3d ? vec_json(*p.contact_3d) : ojson(nullptr);
    out["dir_up"] = vec_json(p.dir_up);
    out["dir_forward"] = vec_json(p.dir_forward);
    return out;
}

}  // namespace

Observation load_observation(const fs::path& dir, bool normalize_features) {
    if (!fs::is_directory(dir)) throw NotFoundError("observation directory " + dir.string() + " not found");
    Observation obs;
    obs.features = feature_map_from_tensor(read_tensor_file(dir / ObservationFiles::features), normalize_features);
    obs.embedding = embedding_from_tensor(read_tensor_file(dir / ObservationFiles::embedding));
    if (fs::exists(dir / ObservationFiles::mask)) {
        obs.mask = mask_from_tensor(read_tensor_file(dir / ObservationFiles::mask));
    }
    if (fs::exists(dir / ObservationFiles::depth)) {
        obs.depth = depth_from_tensor(read_tensor_file(dir / ObservationFiles::depth));
    }
    if (fs::exists(dir / ObservationFiles::instruction_embedding)) {
        obs.instruction_embedding = embedding_from_tensor(read_tensor_file(dir / ObservationFiles::instruction_embedding));
    }
    if (fs::exists(dir / ObservationFiles::camera)) {
        std::ifstream in(dir / ObservationFiles::camera);
        try {
            const auto j = nlohmann::json::parse(in);
            Camera cam{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                       j.at("cy").get<double>(), j.at("width").get<int>(), j.at("height").get<int>()};
            cam.validate();
            obs.camera = cam;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError((dir / ObservationFiles::camera).string() + ": " + e.what());
        }
    }
    return obs;
}

void write_observation(const fs::path& dir, const Observation& obs) {
    fs::create_directories(dir);
    write_tensor_file(dir / ObservationFiles::features, to_tensor(obs.features));
    write_tensor_file(dir / ObservationFiles::embedding, embedding_tensor(obs.embedding));
    if (obs.mask) write_tensor_file(dir / ObservationFiles::mask, to_tensor(*obs.mask));
    if (obs.depth) write_tensor_file(dir / ObservationFiles::depth, to_tensor(*obs.depth));
    if (obs.instruction_embedding) {
        write_tensor_file(dir / ObservationFiles::instruction_embedding, embedding_tensor(*obs.instruction_embedding));
    }
    if (obs.camera) {
        const auto& c = *obs.camera;
        ojson j = {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
        std::ofstream(dir / ObservationFiles::camera) << j.dump(2) << "\n";
    }
}

QueryResult run_query(const KnowledgeBase& kb, const Instruction& instruction, const Observation& obs,
                      const PipelineConfig& config) {
    QueryResult result;
    result.instruction = instruction.text;

    auto retrieved = stage("retrieval", [&] { return hybrid_retrieve(kb, instruction, config.retrieval); });
    result.trace = std::move(retrieved.trace);

    result.visual = stage("visual", [&] {
        return visual_rank(obs.embedding, retrieved.candidates, kb, config.retrieval);
    });

    const InstanceMask mask = stage("matching", [&] {
        if (!obs.mask) return InstanceMask::full(obs.features.height, obs.features.width);
        if (obs.mask->height != obs.features.height || obs.mask->width != obs.features.width) {
            result.warnings.push_back("observation mask resized to the feature grid (nearest neighbour)");
            return resize_nearest(*obs.mask, obs.features.height, obs.features.width);
        }
        return *obs.mask;
    });
    result.matched = stage("matching", [&] {
        return select_min_imd(obs.features, mask, result.visual.top, kb, config.tau_imd, config.imd);
    });
    if (result.matched.best.empty_mask) result.warnings.push_back("observation mask is empty; IMD forced to 0");

    const auto& reference = kb.get_example(result.matched.best_id);
    result.reference_id = reference.id();
    result.reference_source = reference.source();

    if (result.matched.gate == Gate::needs_refinement) {
        result.refined = stage("refinement", [&] {
            Camera cam;
            if (reference.record().intrinsics) {
                cam = camera_from(*reference.record().intrinsics);
            } else if (obs.camera) {
                cam = *obs.camera;
            } else {
                throw GeometryError("no camera: reference has no intrinsics and the observation has no camera.json");
            }
            RefineOptions options;
            options.synthetic = config.synthetic;
            options.normalize_features = kb.options().normalize_features;
            options.imd = config.imd;
            options.render = config.render;
            switch (config.refine_mode) {
                case RefineMode::automatic:
                    options.source = reference.has_gaussians() ? FeatureSource::synthetic_render
                                                               : FeatureSource::external_files;
                    break;
                case RefineMode::synthetic_render: options.source = FeatureSource::synthetic_render; break;
                case RefineMode::external_files: options.source = FeatureSource::external_files; break;
            }
            const auto spec = config.rotation_spec.empty() ? default_rotation_spec(config.refine_angle_deg)
                                                           : config.rotation_spec;
            return refine(reference, obs.features, mask, cam, make_rotation_candidates(spec), options);
        });
    }

    stage("output", [&] {
        if (result.refined) {
            result.output_pose = result.refined->best_pose().pose;
            if (result.refined->best_pose().contact_clamped) {
                result.warnings.push_back("refined contact point reprojected outside the image and was clamped");
            }
        } else {
            result.output_pose = reference_pose(reference.record());
        }
        result.output_pose.contact_3d.reset();

        std::optional<Camera> cam = obs.camera;
        if (!cam && reference.record().intrinsics) cam = camera_from(*reference.record().intrinsics);
        if (!obs.depth) {
            result.warnings.push_back("observation has no depth map; contact_3d not computed");
        } else if (!cam) {
            result.warnings.push_back("no camera for the observation; contact_3d not computed");
        } else {
            try {
                result.output_pose.contact_3d = lift_point(*cam, *obs.depth, result.output_pose.contact_2d);
            } catch (const GeometryError& e) {
                result.warnings.push_back(std::string("contact_3d not computed: ") + e.what());
            }
        }
        result.prompt_payload = emit_prompt(result);
        return 0;
    });
    return result;
}

std::string format_fixed4(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", value);
    std::string s = buf;
    if (s == "-0.0000") s = "0.0000";
    return s;
}

std::string emit_prompt(const QueryResult& r) {
    char buf[128];
    std::ostringstream out;
    const auto& p = r.output_pose;
    out << "[retrieved manipulation reference]\n";
    out << "instruction: " << r.instruction << "\n";
    out << "reference: " << r.reference_id << " (" << to_string(r.reference_source) << ")\n";
    out << "retrieval: " << to_string(r.trace.priority_used) << "\n";
    out << "contact: (" << format_fixed4(p.contact_2d.x()) << ", " << format_fixed4(p.contact_2d.y()) << ")\n";
    out << "dir_up: (" << format_fixed4(p.dir_up.x()) << ", " << format_fixed4(p.dir_up.y()) << ", "
        << format_fixed4(p.dir_up.z()) << ")\n";
    out << "dir_forward: (" << format_fixed4(p.dir_forward.x()) << ", " << format_fixed4(p.dir_forward.y()) << ", "
        << format_fixed4(p.dir_forward.z()) << ")\n";
    std::snprintf(buf, sizeof buf, "imd: %.6f (normalized %.6f, gate %s)\n", r.matched.best.imd,
                  r.matched.best.imd_normalized, std::string(to_string(r.matched.gate)).c_str());
    out << buf;
    if (r.refined) {
        const auto& best = r.refined->best_pose();
        std::snprintf(buf, sizeof buf, "refinement: candidate %d of %zu (imd_k %.6f, normalized %.6f)\n",
                      best.candidate.index, r.refined->candidates.size(), best.imd_k.imd,
                      best.imd_k.imd_normalized);
        out << buf;
    } else {
        out << "refinement: none\n";
    }
    return out.str();
}

ojson to_json(const RetrievalTrace& t) {
    ojson out;
    out["priority"] = to_string(t.priority_used);
    out["tau_den"] = t.tau_den;
    ojson sources = ojson::array();
    for (auto s : t.sources) sources.push_back(to_string(s));
    out["sources"] = sources;
    out["scored"] = scored_json(t.scored);
    out["rejected_dense"] = scored_json(t.rejected_dense);
    out["candidates"] = t.candidates;
    return out;
}

ojson to_json(const QueryResult& r) {
    ojson out;
    out["instruction"] = r.instruction;
    out["retrieval"] = to_json(r.trace);
    out["visual"] = {{"scored", scored_json(r.visual.ranked)}, {"top", r.visual.top}};

    ojson matching;
    matching["best_id"] = r.matched.best_id;
    matching["gate"] = to_string(r.matched.gate);
    matching["best"] = imd_json(r.matched.best);
    ojson evaluated = ojson::array();
    for (const auto& c : r.matched.evaluated) {
        ojson entry = {{"id", c.id}};
        entry.update(imd_json(c.result));
        evaluated.push_back(entry);
    }
    matching["candidates"] = evaluated;
    out["matching"] = matching;

    if (r.refined) {
        const auto& rf = *r.refined;
        ojson refined;
        refined["feature_source"] = to_string(rf.source);
        refined["motion_convention"] = kMotionConvention;
        refined["direction_convention"] = kDirectionConvention;
        refined["pivot"] = vec_json(rf.pivot);
        refined["reference_contact_3d"] = vec_json(rf.reference_contact_3d);
        refined["best_index"] = rf.best_pose().candidate.index;
        ojson cands = ojson::array();
        for (const auto& c : rf.candidates) {
            ojson entry;
            entry["index"] = c.candidate.index;
            const auto& q = c.candidate.rot_quat;
            entry["quat_wxyz"] = {q.w, q.x, q.y, q.z};
            entry["imd"] = imd_json(c.imd_k);
            entry["contact_pixel"] = vec_json(c.contact_pixel);
            entry["contact_clamped"] = c.contact_clamped;
            entry["pose"] = pose_json(c.pose);
            cands.push_back(entry);
        }
        refined["candidates"] = cands;
        out["refinement"] = refined;
    } else {
        out["refinement"] = nullptr;
    }

    ojson pose = {{"reference_id", r.reference_id}, {"reference_source", to_string(r.reference_source)}};
    pose.update(pose_json(r.output_pose));
    out["output_pose"] = pose;
    out["warnings"] = r.warnings;
    out["prompt"] = r.prompt_payload;
    return out;
}

}  // namespace robmrag
