#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <sstream>

#include "robmrag/error.hpp"
#include "robmrag/fixtures.hpp"
#include "robmrag/geometric_matching.hpp"
#include "robmrag/knowledge_base.hpp"
#include "robmrag/metrics.hpp"
#include "robmrag/pipeline.hpp"
#include "robmrag/pose_refinement.hpp"
#include "robmrag/retrieval.hpp"
#include "robmrag/splat_renderer.hpp"
#include "robmrag/tensor_store.hpp"

namespace py = pybind11;
using namespace robmrag;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::object to_python(const nlohmann::ordered_json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

TensorFile tensor_from_array(const FloatArray& a) {
    TensorFile t;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) t.dims.push_back(static_cast<std::uint64_t>(a.shape(i)));
    t.data.assign(a.data(), a.data() + a.size());
    return t;
}

FloatArray array_from_tensor(const TensorFile& t) {
    std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
    FloatArray out(shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

DenseFeatureMap features_from_array(const FloatArray& a) {
    return feature_map_from_tensor(tensor_from_array(a), false);
}

InstanceMask mask_from_array(const FloatArray& a) { return mask_from_tensor(tensor_from_array(a)); }

Camera camera_from_tuple(const std::vector<double>& v) {
    if (v.size() != 6) throw ValidationError("camera is (fx, fy, cx, cy, width, height)");
    Camera cam{v[0], v[1], v[2], v[3], static_cast<int>(v[4]), static_cast<int>(v[5])};
    cam.validate();
    return cam;
}

GraspPose pose_from_values(const std::vector<double>& v) {
    if (v.size() != 8) throw ValidationError("pose is (u, v, up_x, up_y, up_z, fwd_x, fwd_y, fwd_z)");
    GraspPose p;
    p.contact_2d = Vec2(v[0], v[1]);
    p.dir_up = Vec3(v[2], v[3], v[4]);
    p.dir_forward = Vec3(v[5], v[6], v[7]);
    return p;
}

py::dict retrieve(const KnowledgeBase& kb, const std::string& instruction,
                  std::optional<std::vector<float>> embedding, double tau_den, std::size_t top_n) {
    RetrievalConfig cfg;
    cfg.tau_den = tau_den;
    cfg.top_n = top_n;
    const auto r = hybrid_retrieve(kb, Instruction::from_text(instruction, std::move(embedding)), cfg);
    py::dict out;
    out["candidates"] = r.candidates;
    out["trace"] = to_python(to_json(r.trace));
    return out;
}

py::dict validate_kb(const KnowledgeBase& kb) {
    const auto report = kb.validate();
    py::list records;
    for (const auto& r : report.records) {
        py::dict d;
        d["id"] = r.id;
        d["ok"] = r.ok;
        d["reasons"] = r.reasons;
        records.append(d);
    }
    py::dict out;
    out["failures"] = report.failures();
    out["records"] = records;
    return out;
}

py::object query(const std::vector<std::filesystem::path>& manifests, const std::string& instruction,
                 const std::filesystem::path& obs_dir, std::optional<std::vector<float>> instruction_embedding,
                 double tau_den, std::size_t top_n, double tau_imd, double refine_angle_deg) {
    const auto kb = KnowledgeBase::build(manifests);
    const auto obs = load_observation(obs_dir);
    PipelineConfig cfg;
    cfg.retrieval.tau_den = tau_den;
    cfg.retrieval.top_n = top_n;
    cfg.tau_imd = tau_imd;
    cfg.refine_angle_deg = refine_angle_deg;
    auto embedding = instruction_embedding ? instruction_embedding : obs.instruction_embedding;
    const auto r = run_query(kb, Instruction::from_text(instruction, std::move(embedding)), obs, cfg);
    py::dict out = to_python(to_json(r));
    out["prompt"] = emit_prompt(r);
    return out;
}

py::tuple render_py(const FloatArray& gaussians, const std::vector<double>& camera, const Mat3& rotation,
                    const Vec3& translation, const std::vector<double>& background) {
    const auto set = gaussians_from_tensor(tensor_from_array(gaussians));
    const auto img = render(set, camera_from_tuple(camera), rotation, translation, background);
    FloatArray color({img.height, img.width, img.channels});
    FloatArray alpha({img.height, img.width});
    std::copy(img.color.begin(), img.color.end(), color.mutable_data());
    std::copy(img.alpha.begin(), img.alpha.end(), alpha.mutable_data());
    return py::make_tuple(color, alpha);
}

py::dict mask_py(const std::string& text, double fraction, std::uint64_t seed, const std::string& token) {
    const auto m = mask_pose_parameters(text, fraction, seed, token);
    py::dict out;
    out["masked_text"] = m.masked_text;
    out["positions"] = m.positions;
    out["targets"] = m.targets;
    out["mask_token"] = m.mask_token;
    return out;
}

std::string unmask_py(const py::dict& d) {
    MaskingResult m;
    m.masked_text = d["masked_text"].cast<std::string>();
    m.positions = d["positions"].cast<std::vector<std::size_t>>();
    m.targets = d["targets"].cast<std::vector<std::string>>();
    m.mask_token = d["mask_token"].cast<std::string>();
    return unmask(m);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Core bindings for the robmrag pipeline";

    static py::exception<Error> data_error(m, "DataError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(data_error, e.what());
        }
    });

    m.def("read_tensor", [](const std::filesystem::path& path) { return array_from_tensor(read_tensor_file(path)); },
          py::arg("path"));
    m.def("write_tensor",
          [](const std::filesystem::path& path, const FloatArray& a) {
              return write_tensor_file(path, tensor_from_array(a));
          },
          py::arg("path"), py::arg("array"), "Writes atomically; returns the byte count.");

    py::class_<KnowledgeBase, std::shared_ptr<KnowledgeBase>>(m, "KnowledgeBase")
        .def_static(
            "build",
            [](const std::vector<std::filesystem::path>& manifests, bool normalize) {
                KnowledgeBaseOptions opts;
                opts.normalize_features = normalize;
                return std::make_shared<KnowledgeBase>(KnowledgeBase::build(manifests, opts));
            },
            py::arg("manifests"), py::arg("normalize_features") = true)
        .def("__len__", &KnowledgeBase::size)
        .def("__contains__", &KnowledgeBase::contains)
        .def("ids", &KnowledgeBase::ids)
        .def("ids_for", [](const KnowledgeBase& kb, const std::string& source) {
            const auto s = parse_source(source);
            if (!s) throw ValidationError("unknown source '" + source + "'");
            return kb.ids_for(*s);
        })
        .def("validate", &validate_kb)
        .def("retrieve", &retrieve, py::arg("instruction"), py::arg("embedding") = py::none(),
             py::arg("tau_den") = 0.75, py::arg("top_n") = 5);

    m.def("tokenize", [](const std::string& text) { return tokenize(text); });

    m.def(
        "imd",
        [](const FloatArray& obs, const FloatArray& ctc, const FloatArray& mask) {
            const auto r = imd(features_from_array(obs), features_from_array(ctc), mask_from_array(mask));
            py::dict out;
            out["imd"] = r.imd;
            out["imd_normalized"] = r.imd_normalized;
            out["mask_pixels"] = r.mask_pixels;
            out["empty_mask"] = r.empty_mask;
            return out;
        },
        py::arg("obs"), py::arg("ctc"), py::arg("mask"));

    m.def("render", &render_py, py::arg("gaussians"), py::arg("camera"), py::arg("rotation") = Mat3::Identity(),
          py::arg("translation") = Vec3::Zero(), py::arg("background") = std::vector<double>{0.0, 0.0, 0.0},
          "Returns (color[H, W, C], alpha[H, W]).");

    m.def(
        "rotation_candidates",
        [](double angle_deg) {
            std::vector<Mat3> out;
            for (const auto& c : make_rotation_candidates(default_rotation_spec(angle_deg))) out.push_back(c.rot_matrix);
            return out;
        },
        py::arg("angle_deg") = kDefaultRefineAngleDeg);

    m.def("query", &query, py::arg("manifests"), py::arg("instruction"), py::arg("obs_dir"),
          py::arg("instruction_embedding") = py::none(), py::arg("tau_den") = 0.75, py::arg("top_n") = 5,
          py::arg("tau_imd") = kDefaultTauImd, py::arg("refine_angle_deg") = kDefaultRefineAngleDeg);

    m.def(
        "pose_loss",
        [](const std::vector<double>& pred, const std::vector<double>& gt, double lambda1, double lambda2) {
            return pose_loss(pose_from_values(pred), pose_from_values(gt), {lambda1, lambda2});
        },
        py::arg("pred"), py::arg("gt"), py::arg("lambda1") = 1.0, py::arg("lambda2") = 1.0);

    m.def("mask_pose_parameters", &mask_py, py::arg("text"), py::arg("fraction"), py::arg("seed"),
          py::arg("mask_token") = std::string(kDefaultMaskToken));
    m.def("unmask", &unmask_py, py::arg("masked"));

    m.def("write_fixtures", [](const std::filesystem::path& dir) { return to_python(fixtures::write_all(dir)); },
          py::arg("dir"));
}
