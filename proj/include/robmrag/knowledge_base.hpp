#pragma once

// In-memory knowledge base of manipulation examples built from manifests.
// Immutable after build. Tensor artifacts load lazily on first access; each
// file is read at most once even under concurrent first access.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "robmrag/raster.hpp"
#include "robmrag/splat_renderer.hpp"
#include "robmrag/tensor_store.hpp"

namespace robmrag {

struct KnowledgeBaseOptions {
    // L2-normalize every feature pixel as contact features load.
    bool normalize_features = true;
};

namespace detail {

// Loads a T from a path once; later calls return the cached value or rethrow
// the cached failure.
template <typename T>
class LazyArtifact {
public:
    using Loader = std::function<T(const std::filesystem::path&)>;

    LazyArtifact() = default;
    LazyArtifact(std::filesystem::path path, Loader loader)
        : path_(std::move(path)), loader_(std::move(loader)) {}

    const std::filesystem::path& path() const noexcept { return path_; }

    const T& get() const {
        std::lock_guard lock(mutex_);
        if (value_) return *value_;
        if (error_) std::rethrow_exception(error_);
        try {
            value_ = std::make_unique<const T>(loader_(path_));
        } catch (...) {
            error_ = std::current_exception();
            throw;
        }
        ++loads_;
        return *value_;
    }

    std::size_t load_count() const {
        std::lock_guard lock(mutex_);
        return loads_;
    }

private:
    std::filesystem::path path_;
    Loader loader_;
    mutable std::mutex mutex_;
    mutable std::unique_ptr<const T> value_;
    mutable std::exception_ptr error_;
    mutable std::size_t loads_ = 0;
};

}  // namespace detail

class ManipulationExample {
public:
    ManipulationExample(ManifestRecord record, const KnowledgeBaseOptions& options);

    const ManifestRecord& record() const noexcept { return record_; }
    const std::string& id() const noexcept { return record_.id; }
    Source source() const noexcept { return record_.source; }
    const std::string& instruction() const noexcept { return record_.instruction; }

    // Lazy handles. Each throws ValidationError naming the id and path when the
    // file fails validation, or NotFoundError when the field is absent.
    const DenseFeatureMap& contact_features() const;
    const std::vector<float>& contact_embedding() const;
    const std::vector<float>& instruction_embedding() const;
    const DepthMap& depth_map() const;
    const InstanceMask& instance_mask() const;
    const GaussianSet& gaussians() const;

    bool has_instruction_embedding() const noexcept { return record_.instruction_embedding.has_value(); }
    bool has_depth() const noexcept { return record_.depth.has_value(); }
    bool has_gaussians() const noexcept { return record_.gaussians.has_value(); }

    // Total number of tensor files read through the handles so far.
    std::size_t load_count() const;

private:
    template <typename T>
    const T& resolve(const std::unique_ptr<detail::LazyArtifact<T>>& handle, const char* field) const;

    ManifestRecord record_;
    std::unique_ptr<detail::LazyArtifact<DenseFeatureMap>> contact_features_;
    std::unique_ptr<detail::LazyArtifact<std::vector<float>>> contact_embedding_;
    std::unique_ptr<detail::LazyArtifact<std::vector<float>>> instruction_embedding_;
    std::unique_ptr<detail::LazyArtifact<DepthMap>> depth_;
    std::unique_ptr<detail::LazyArtifact<InstanceMask>> mask_;
    std::unique_ptr<detail::LazyArtifact<GaussianSet>> gaussians_;
};

// Lowercase, trim, collapse inner whitespace runs to one space.
std::string normalize_object_name(std::string_view name);

struct RecordReport {
    std::string id;
    bool ok = true;
    std::vector<std::string> reasons;
};

struct ValidationReport {
    std::vector<RecordReport> records;  // sorted by id

    std::size_t failures() const;
    bool ok() const { return failures() == 0; }
};

class KnowledgeBase {
public:
    KnowledgeBase() = default;
    KnowledgeBase(std::vector<ManifestRecord> records, KnowledgeBaseOptions options = {},
                  std::filesystem::path root = {});

    // Loads and merges manifests. Throws ValidationError on a cross-manifest
    // duplicate id and NotFoundError/FormatError on unreadable manifests.
    static KnowledgeBase build(const std::vector<std::filesystem::path>& manifests,
                               KnowledgeBaseOptions options = {});

    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    bool contains(const std::string& id) const { return records_.contains(id); }

    // Throws NotFoundError for an unknown id.
    const ManipulationExample& get_example(const std::string& id) const;

    // Ids sorted lexicographically.
    std::vector<std::string> ids() const;
    const std::vector<std::string>& ids_for(Source source) const;
    const std::map<std::string, std::vector<std::string>>& object_index() const noexcept {
        return object_index_;
    }
    const std::filesystem::path& root() const noexcept { return root_; }
    const KnowledgeBaseOptions& options() const noexcept { return options_; }

    // Reads every referenced tensor directly (bypassing the lazy caches) and
    // reports per-record failures. Also flags embedding dimension mismatches
    // across records.
    ValidationReport validate() const;

private:
    KnowledgeBaseOptions options_;
    std::filesystem::path root_;
    std::map<std::string, std::unique_ptr<ManipulationExample>> records_;
    std::map<Source, std::vector<std::string>> by_source_;
    std::map<std::string, std::vector<std::string>> object_index_;
};

}  // namespace robmrag
