#include "robmrag/knowledge_base.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

#include "robmrag/error.hpp"

namespace robmrag {
namespace fs = std::filesystem;

namespace {

// Runs a loader and re-labels its failure with the owning record id.
template <typename T, typename Fn>
std::function<T(const fs::path&)> labelled(std::string id, Fn fn) {
    return [id = std::move(id), fn](const fs::path& path) -> T {
        try {
            return fn(read_tensor_file(path));
        } catch (const NotFoundError& e) {
            throw NotFoundError("record '" + id + "': " + e.what());
        } catch (const Error& e) {
            throw ValidationError("record '" + id + "': " +
                                  (std::string_view(e.what()).starts_with(path.string())
                                       ? std::string(e.what())
                                       : path.string() + ": " + e.what()));
        }
    };
}

template <typename T, typename Fn>
std::unique_ptr<detail::LazyArtifact<T>> make_handle(const std::optional<fs::path>& path,
                                                     const std::string& id, Fn fn) {
    if (!path) return nullptr;
    return std::make_unique<detail::LazyArtifact<T>>(*path, labelled<T>(id, fn));
}

}  // namespace

ManipulationExample::ManipulationExample(ManifestRecord record, const KnowledgeBaseOptions& options)
    : record_(std::move(record)) {
    const auto& id = record_.id;
    const bool normalize = options.normalize_features;
    contact_features_ = make_handle<DenseFeatureMap>(
        record_.contact_frame_features, id,
        [normalize](const TensorFile& t) { return feature_map_from_tensor(t, normalize); });
    contact_embedding_ = make_handle<std::vector<float>>(record_.contact_frame_embedding, id, embedding_from_tensor);
    instruction_embedding_ = make_handle<std::vector<float>>(record_.instruction_embedding, id, embedding_from_tensor);
    depth_ = make_handle<DepthMap>(record_.depth, id, depth_from_tensor);
    mask_ = make_handle<InstanceMask>(record_.mask, id, mask_from_tensor);
    gaussians_ = make_handle<GaussianSet>(record_.gaussians, id, gaussians_from_tensor);
}

template <typename T>
const T& ManipulationExample::resolve(const std::unique_ptr<detail::LazyArtifact<T>>& handle,
                                      const char* field) const {
    if (!handle) throw NotFoundError("record '" + record_.id + "' has no " + field);
    return handle->get();
}

const DenseFeatureMap& ManipulationExample::contact_features() const {
    return resolve(contact_features_, "contact_frame_features");
}
const std::vector<float>& ManipulationExample::contact_embedding() const {
    return resolve(contact_embedding_, "contact_frame_embedding");
}
const std::vector<float>& ManipulationExample::instruction_embedding() const {
    return resolve(instruction_embedding_, "instruction_embedding");
}
const DepthMap& ManipulationExample::depth_map() const { return resolve(depth_, "depth"); }
const InstanceMask& ManipulationExample::instance_mask() const { return resolve(mask_, "mask"); }
const GaussianSet& ManipulationExample::gaussians() const { return resolve(gaussians_, "gaussians"); }

std::size_t ManipulationExample::load_count() const {
    std::size_t n = 0;
    auto add = [&n](const auto& h) { if (h) n += h->load_count(); };
    add(contact_features_);
    add(contact_embedding_);
    add(instruction_embedding_);
    add(depth_);
    add(mask_);
    add(gaussians_);
    return n;
}

std::string normalize_object_name(std::string_view name) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : name) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::size_t ValidationReport::failures() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.ok; }));
}

KnowledgeBase::KnowledgeBase(std::vector<ManifestRecord> records, KnowledgeBaseOptions options, fs::path root)
    : options_(options), root_(std::move(root)) {
    for (auto& record : records) {
        validate_record(record);
        const std::string id = record.id;
        if (records_.contains(id)) {
            const auto& prior = records_.at(id)->record();
            throw ValidationError("duplicate id '" + id + "' in " + prior.manifest.string() + ":" +
                                  std::to_string(prior.line) + " and " + record.manifest.string() + ":" +
                                  std::to_string(record.line));
        }
        by_source_[record.source].push_back(id);
        object_index_[normalize_object_name(record.object_name)].push_back(id);
        records_.emplace(id, std::make_unique<ManipulationExample>(std::move(record), options_));
    }
    for (auto& [source, ids] : by_source_) std::sort(ids.begin(), ids.end());
    for (auto& [name, ids] : object_index_) std::sort(ids.begin(), ids.end());
}

KnowledgeBase KnowledgeBase::build(const std::vector<fs::path>& manifests, KnowledgeBaseOptions options) {
    std::vector<ManifestRecord> all;
    for (const auto& path : manifests) {
        auto records = load_manifest_file(path);
        all.insert(all.end(), std::make_move_iterator(records.begin()), std::make_move_iterator(records.end()));
    }
    return KnowledgeBase(std::move(all), options, manifests.empty() ? fs::path{} : manifests.front().parent_path());
}

const ManipulationExample& KnowledgeBase::get_example(const std::string& id) const {
    auto it = records_.find(id);
    if (it == records_.end()) throw NotFoundError("unknown example id '" + id + "'");
    return *it->second;
}

std::vector<std::string> KnowledgeBase::ids() const {
    std::vector<std::string> out;
    out.reserve(records_.size());
    for (const auto& [id, _] : records_) out.push_back(id);
    return out;
}

const std::vector<std::string>& KnowledgeBase::ids_for(Source source) const {
    static const std::vector<std::string> kEmpty;
    auto it = by_source_.find(source);
    return it == by_source_.end() ? kEmpty : it->second;
}

ValidationReport KnowledgeBase::validate() const {
    ValidationReport report;
    std::optional<std::size_t> contact_dim, text_dim;

    for (const auto& [id, example] : records_) {
        const auto& r = example->record();
        RecordReport entry{id, true, {}};
        auto check = [&](const std::optional<fs::path>& path, const char* field, auto&& use) {
            if (!path) return;
            try {
                use(read_tensor_file(*path));
            } catch (const std::exception& e) {
                entry.ok = false;
                entry.reasons.push_back(std::string(field) + ": " + e.what());
            }
        };
        auto dims_of = [](const DenseFeatureMap& m) { return std::pair{m.height, m.width}; };
        std::optional<std::pair<int, int>> feature_dims, mask_dims, depth_dims;

        check(r.contact_frame_features, "contact_frame_features", [&](const TensorFile& t) {
            feature_dims = dims_of(feature_map_from_tensor(t, false));
        });
        check(r.contact_frame_embedding, "contact_frame_embedding", [&](const TensorFile& t) {
            const auto n = embedding_from_tensor(t).size();
            if (!contact_dim) contact_dim = n;
            if (n != *contact_dim) {
                throw ValidationError("dimension " + std::to_string(n) + " differs from " + std::to_string(*contact_dim));
            }
        });
        check(r.instruction_embedding, "instruction_embedding", [&](const TensorFile& t) {
            const auto n = embedding_from_tensor(t).size();
            if (!text_dim) text_dim = n;
            if (n != *text_dim) {
                throw ValidationError("dimension " + std::to_string(n) + " differs from " + std::to_string(*text_dim));
            }
        });
        check(r.success_frame_embedding, "success_frame_embedding",
              [&](const TensorFile& t) { embedding_from_tensor(t); });
        check(r.mask, "mask", [&](const TensorFile& t) {
            const auto m = mask_from_tensor(t);
            mask_dims = std::pair{m.height, m.width};
        });
        check(r.depth, "depth", [&](const TensorFile& t) {
            const auto d = depth_from_tensor(t);
            depth_dims = std::pair{d.height, d.width};
        });
        check(r.gaussians, "gaussians", [&](const TensorFile& t) { gaussians_from_tensor(t); });

        if (feature_dims && mask_dims && *feature_dims != *mask_dims) {
            entry.ok = false;
            entry.reasons.emplace_back("mask size does not match contact_frame_features");
        }
        if (depth_dims && r.intrinsics &&
            *depth_dims != std::pair{r.intrinsics->height, r.intrinsics->width}) {
            entry.ok = false;
            entry.reasons.emplace_back("depth size does not match intrinsics");
        }
        report.records.push_back(std::move(entry));
    }
    return report;
}

}  // namespace robmrag
