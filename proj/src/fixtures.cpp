#include "robmrag/fixtures.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "robmrag/error.hpp"

namespace robmrag::fixtures {
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::size_t kEmbeddingDim = 8;

double uniform(std::mt19937_64& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

std::vector<float> basis(std::size_t dim, std::size_t axis) {
    std::vector<float> v(dim, 0.0f);
    v[axis % dim] = 1.0f;
    return v;
}

class ManifestWriter {
public:
    explicit ManifestWriter(fs::path dir) : dir_(std::move(dir)) {
        fs::create_directories(dir_ / "assets");
    }

    fs::path asset(const std::string& id, const std::string& what, const TensorFile& t) {
        const auto path = dir_ / "assets" / (id + "." + what + ".tensor");
        write_tensor_file(path, t);
        return path;
    }

    // Minimal record: features and embedding; the caller fills the rest.
    ManifestRecord record(const std::string& id, Source source, const std::string& instruction,
                          const std::string& object, const DenseFeatureMap& features,
                          std::span<const float> embedding) {
        ManifestRecord r;
        r.id = id;
        r.source = source;
        r.instruction = instruction;
        r.object_name = object;
        r.contact_frame_features = asset(id, "features", to_tensor(features));
        r.contact_frame_embedding = asset(id, "embedding", embedding_tensor(embedding));
        return r;
    }

    void add(const ManifestRecord& r) { lines_ += manifest_line(r, dir_) + "\n"; }

    fs::path finish() const {
        const auto path = dir_ / "manifest.jsonl";
        std::ofstream(path, std::ios::binary) << lines_;
        return path;
    }

    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    std::string lines_;
};

DenseFeatureMap flat_features(float value) { return DenseFeatureMap(4, 4, 3, value); }

Intrinsics intrinsics_of(const Camera& c) { return {c.fx, c.fy, c.cx, c.cy, c.width, c.height}; }

// Reference record carrying everything refinement needs.
ManifestRecord reference_record(ManifestWriter& w, const std::string& id, const std::string& instruction,
                                const GaussianSet& scene, const Camera& cam, std::span<const float> embedding,
                                std::span<const float> instruction_embedding, std::size_t contact_gaussian) {
    const auto identity = make_rotation_candidates({}).front();
    const Observation obs = render_observation(scene, cam, identity);
    auto r = w.record(id, Source::simulation, instruction, "drawer", obs.features, embedding);
    r.instruction_embedding = w.asset(id, "instruction_embedding", embedding_tensor(instruction_embedding));
    r.mask = w.asset(id, "mask", to_tensor(*obs.mask));
    r.depth = w.asset(id, "depth", to_tensor(*obs.depth));
    r.gaussians = w.asset(id, "gaussians", to_tensor(scene));
    r.intrinsics = intrinsics_of(cam);
    const Vec2 px = project_point(cam, scene.means.at(contact_gaussian));
    r.contact_point = Vec2(px.x() / cam.width, px.y() / cam.height);
    r.dir_up = Vec3(0, -1, 0);
    r.dir_forward = Vec3(0, 0, 1);
    return r;
}

}  // namespace

Camera default_camera() { return {150.0, 150.0, 64.0, 48.0, 128, 96}; }

GaussianSet object_scene(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    GaussianSet set;
    set.channels = 3;
    const Vec3 centre(0.02, -0.01, 2.0);
    for (int i = 0; i < 24; ++i) {
        const Vec3 mean = centre + Vec3(uniform(rng, -0.35, 0.35), uniform(rng, -0.25, 0.25), uniform(rng, -0.15, 0.15));
        const Vec3 scale(uniform(rng, 0.03, 0.09), uniform(rng, 0.03, 0.09), uniform(rng, 0.03, 0.09));
        Quat q{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
        if (q.norm() < 1e-3) q = Quat::identity();
        const double color[3] = {uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95)};
        set.add(mean, scale, q.normalized(), uniform(rng, 0.6, 0.95), color);
    }
    // Handle: a small saturated blob off to one side, which breaks the symmetry.
    const double handle[3] = {0.95, 0.1, 0.1};
    set.add(centre + Vec3(0.25, 0.05, -0.18), Vec3(0.06, 0.025, 0.025), Quat::identity(), 0.95, handle);
    // Round to the stored f32 values so renders from memory and from disk agree.
    return gaussians_from_tensor(to_tensor(set));
}

std::vector<float> planted_embedding(std::size_t dim, std::size_t axis, double cos_with_axis) {
    if (dim < 2) throw ValidationError("planted embeddings need at least two dimensions");
    if (!(cos_with_axis >= -1 && cos_with_axis <= 1)) throw ValidationError("cosine outside [-1, 1]");
    std::vector<float> v(dim, 0.0f);
    v[axis % dim] = static_cast<float>(cos_with_axis);
    v[(axis + 1) % dim] = static_cast<float>(std::sqrt(1.0 - cos_with_axis * cos_with_axis));
    return v;
}

Observation render_observation(const GaussianSet& scene, const Camera& cam, const RotationCandidate& candidate,
                               const SyntheticFeatureSettings& settings) {
    const auto ext = candidate_extrinsics(candidate, scene.centroid());
    const auto image = render(scene, cam, ext.rotation, ext.translation, settings.background);
    Observation obs;
    obs.features = to_features(image, settings.include_alpha);
    InstanceMask mask(image.height, image.width);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] = image.alpha[i] > kMaskAlpha ? 1 : 0;
    obs.mask = std::move(mask);
    obs.depth = DepthMap{image.height, image.width, image.depth};
    obs.camera = cam;
    return obs;
}

PipelineFixture write_pipeline_fixture(const fs::path& dir, int planted_index) {
    const auto candidates = make_rotation_candidates(default_rotation_spec());
    if (planted_index < 0 || planted_index >= static_cast<int>(candidates.size())) {
        throw ValidationError("planted index out of range");
    }
    const Camera cam = default_camera();
    const GaussianSet drawer = object_scene(7);
    const GaussianSet other_drawer = object_scene(11);
    const GaussianSet cabinet = object_scene(23);

    ManifestWriter w(dir);
    const auto drawer_emb = basis(kEmbeddingDim, 0);
    const auto drawer_text = basis(kEmbeddingDim, 4);
    w.add(reference_record(w, "drawer_001", "open the drawer", drawer, cam, drawer_emb, drawer_text, 24));

    auto second = reference_record(w, "drawer_002", "pull the drawer out", other_drawer, cam,
                                   planted_embedding(kEmbeddingDim, 0, 0.8), planted_embedding(kEmbeddingDim, 4, 0.9),
                                   3);
    w.add(second);

    auto cab = reference_record(w, "cabinet_001", "open the cabinet door", cabinet, cam,
                                planted_embedding(kEmbeddingDim, 0, 0.3), basis(kEmbeddingDim, 6), 5);
    cab.object_name = "cabinet";
    w.add(cab);

    auto kettle = w.record("kettle_001", Source::robotic, "lift the kettle", "kettle", flat_features(0.3f),
                           planted_embedding(kEmbeddingDim, 0, 0.5));
    kettle.contact_point = Vec2(0.5, 0.4);
    kettle.dir_up = Vec3(0, 0, 1);
    kettle.dir_forward = Vec3(1, 0, 0);
    w.add(kettle);

    w.add(w.record("faucet_001", Source::internet, "turn on the faucet", "faucet", flat_features(0.6f),
                   basis(kEmbeddingDim, 2)));

    PipelineFixture fx;
    fx.dir = dir;
    fx.manifest = w.finish();
    fx.obs_dir = dir / "obs";
    fx.instruction = "open the drawer";
    fx.reference_id = "drawer_001";
    fx.planted_index = planted_index;
    fx.tau_imd = planted_index == 0 ? kDefaultTauImd : kPlantedTauImd;

    Observation obs = render_observation(drawer, cam, candidates[static_cast<std::size_t>(planted_index)]);
    obs.embedding = drawer_emb;
    obs.instruction_embedding = drawer_text;
    write_observation(fx.obs_dir, obs);
    return fx;
}

RetrievalFixture write_retrieval_fixture(const fs::path& dir, Priority which) {
    ManifestWriter w(dir);
    const auto feat = flat_features(0.5f);
    auto add = [&](const std::string& id, Source source, const std::string& instruction, const std::string& object,
                   const std::vector<float>& text) {
        auto r = w.record(id, source, instruction, object, feat, basis(kEmbeddingDim, 0));
        r.instruction_embedding = w.asset(id, "instruction_embedding", embedding_tensor(text));
        if (source == Source::simulation) {
            r.contact_point = Vec2(0.5, 0.5);
            r.dir_up = Vec3(0, 0, 1);
            r.dir_forward = Vec3(1, 0, 0);
        }
        w.add(r);
    };

    RetrievalFixture fx;
    fx.expected = which;
    fx.instruction_embedding = basis(kEmbeddingDim, 0);
    switch (which) {
        case Priority::p1_sparse:
            fx.instruction = "open the top drawer of the desk";
            add("sim_drawer", Source::simulation, "open the drawer", "drawer", planted_embedding(kEmbeddingDim, 0, 0.2));
            add("sim_desk_lamp", Source::simulation, "switch on the desk lamp", "desk lamp",
                planted_embedding(kEmbeddingDim, 0, 0.3));
            add("sim_mug", Source::simulation, "pick up the mug", "mug", planted_embedding(kEmbeddingDim, 0, 0.95));
            add("robot_drawer", Source::robotic, "open the drawer", "drawer", basis(kEmbeddingDim, 0));
            break;
        case Priority::p2_dense:
            fx.instruction = "grasp the shears by the handles";
            add("sim_scissors", Source::simulation, "pick up the scissors", "scissors",
                planted_embedding(kEmbeddingDim, 0, 0.91));
            add("sim_pliers", Source::simulation, "squeeze the pliers", "pliers",
                planted_embedding(kEmbeddingDim, 0, 0.6));
            add("sim_mug", Source::simulation, "pick up the mug", "mug", planted_embedding(kEmbeddingDim, 0, 0.1));
            add("robot_shears", Source::robotic, "grasp the shears", "shears", basis(kEmbeddingDim, 0));
            break;
        case Priority::p3_expanded:
            fx.instruction = "water the plant with the watering can";
            add("sim_kettle", Source::simulation, "lift the kettle", "kettle", planted_embedding(kEmbeddingDim, 0, 0.40));
            add("sim_mug", Source::simulation, "pick up the mug", "mug", planted_embedding(kEmbeddingDim, 0, 0.2));
            add("robot_can", Source::robotic, "tilt the watering can", "watering can",
                planted_embedding(kEmbeddingDim, 0, 0.8));
            add("web_can", Source::internet, "pour from the can", "can", planted_embedding(kEmbeddingDim, 0, 0.7));
            break;
    }
    fx.manifest = w.finish();
    return fx;
}

VisualFixture write_visual_fixture(const fs::path& dir) {
    ManifestWriter w(dir);
    VisualFixture fx;
    fx.obs_embedding = basis(kEmbeddingDim, 0);
    fx.planted_cosines = {0.50, 0.95, 0.10, 0.80, 0.30, 0.90, 0.60, 0.70};
    for (std::size_t i = 0; i < fx.planted_cosines.size(); ++i) {
        const std::string id = "cand_" + std::to_string(i);
        fx.candidates.push_back(id);
        auto r = w.record(id, Source::robotic, "open the box", "box", flat_features(0.5f),
                          planted_embedding(kEmbeddingDim, 0, fx.planted_cosines[i]));
        w.add(r);
    }
    fx.expected_top = {"cand_1", "cand_5", "cand_3", "cand_7", "cand_6"};
    fx.manifest = w.finish();
    return fx;
}

ojson write_all(const fs::path& dir) {
    fs::create_directories(dir);
    ojson summary;

    ojson pipelines = ojson::array();
    const auto count = make_rotation_candidates(default_rotation_spec()).size();
    for (std::size_t k = 0; k < count; ++k) {
        const auto name = k == 0 ? std::string("identity") : "planted_" + std::to_string(k);
        const auto fx = write_pipeline_fixture(dir / name, static_cast<int>(k));
        pipelines.push_back({{"name", name},
                             {"manifest", fs::relative(fx.manifest, dir).generic_string()},
                             {"obs_dir", fs::relative(fx.obs_dir, dir).generic_string()},
                             {"instruction", fx.instruction},
                             {"reference_id", fx.reference_id},
                             {"planted_index", fx.planted_index},
                             {"tau_imd", fx.tau_imd}});
    }
    summary["pipeline"] = pipelines;

    ojson retrieval = ojson::array();
    for (auto p : {Priority::p1_sparse, Priority::p2_dense, Priority::p3_expanded}) {
        const auto name = "retrieval_" + std::string(to_string(p));
        const auto fx = write_retrieval_fixture(dir / name, p);
        const auto emb_path = dir / name / "instruction_embedding.tensor";
        write_tensor_file(emb_path, embedding_tensor(fx.instruction_embedding));
        retrieval.push_back({{"name", name},
                             {"manifest", fs::relative(fx.manifest, dir).generic_string()},
                             {"instruction", fx.instruction},
                             {"instruction_embedding", fs::relative(emb_path, dir).generic_string()},
                             {"expected_priority", to_string(p)}});
    }
    summary["retrieval"] = retrieval;

    const auto vis = write_visual_fixture(dir / "visual_top_n");
    summary["visual"] = {{"manifest", fs::relative(vis.manifest, dir).generic_string()},
                         {"expected_top", vis.expected_top}};

    std::ofstream(dir / "fixtures.json") << summary.dump(2) << "\n";
    return summary;
}

}  // namespace robmrag::fixtures
