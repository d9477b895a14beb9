#pragma once

// Binary tensor files and JSON-lines manifests.
//
// Tensor layout (all integers little-endian):
//
//   offset  size        field
//   0       8           magic "MRAGTENS"
//   8       4           u32 version (1)
//   12      4           u32 dtype (1 = f32)
//   16      4           u32 ndim
//   20      8*ndim      u64 extents
//   ...     4*prod      f32 payload, row-major, little-endian
//
// Manifests are UTF-8 JSON-lines, one ManifestRecord per line. Relative
// paths are resolved against the manifest's directory.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace robmrag {

inline constexpr std::array<char, 8> kTensorMagic = {'M', 'R', 'A', 'G', 'T', 'E', 'N', 'S'};
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 1;

struct TensorFile {
    std::vector<std::uint64_t> dims;
    std::vector<float> data;

    std::size_t element_count() const noexcept { return data.size(); }
};

// Serialized size of a tensor with the given extents.
std::size_t tensor_byte_size(std::span<const std::uint64_t> dims);

std::size_t write_tensor(std::span<const std::uint64_t> dims, std::span<const float> data,
                         std::ostream& dest);
std::size_t write_tensor(const TensorFile& tensor, std::ostream& dest);

// Throws FormatError on bad magic, unsupported version/dtype, truncation or
// trailing bytes; ValidationError on empty dims, zero extents or non-finite values.
TensorFile read_tensor(std::istream& src);

// File variants. write_tensor_file writes to a temporary sibling and renames.
std::size_t write_tensor_file(const std::filesystem::path& path, const TensorFile& tensor);
TensorFile read_tensor_file(const std::filesystem::path& path);

enum class Source { simulation, robotic, internet };

std::string_view to_string(Source source);
std::optional<Source> parse_source(std::string_view text);

struct Intrinsics {
    double fx = 0;
    double fy = 0;
    double cx = 0;
    double cy = 0;
    int width = 0;
    int height = 0;
};

struct ManifestRecord {
    std::string id;
    Source source = Source::simulation;
    std::string instruction;
    std::string object_name;
    std::filesystem::path contact_frame_features;
    std::filesystem::path contact_frame_embedding;
    std::optional<std::filesystem::path> instruction_embedding;
    std::optional<std::filesystem::path> success_frame_embedding;
    std::optional<std::filesystem::path> mask;
    std::optional<std::filesystem::path> depth;
    std::optional<Intrinsics> intrinsics;
    std::optional<Eigen::Vector2d> contact_point;
    std::optional<Eigen::Vector3d> dir_up;
    std::optional<Eigen::Vector3d> dir_forward;
    std::optional<std::filesystem::path> gaussians;

    // 1-based line in the manifest it came from (0 when built in memory).
    std::size_t line = 0;
    std::filesystem::path manifest;
};

// Parses a JSON-lines manifest. Blank lines are skipped. Relative paths are
// resolved against base_dir. Throws FormatError (malformed line, with its
// line number) or ValidationError (duplicate id, broken invariant).
std::vector<ManifestRecord> load_manifest(std::istream& src,
                                          const std::filesystem::path& base_dir = {},
                                          const std::filesystem::path& origin = {});
std::vector<ManifestRecord> load_manifest_file(const std::filesystem::path& path);

// Checks one record's field invariants; throws ValidationError.
void validate_record(const ManifestRecord& record);

// Inverse of load_manifest for one record. Paths are written relative to
// base_dir when they live under it.
std::string manifest_line(const ManifestRecord& record, const std::filesystem::path& base_dir = {});

}  // namespace robmrag
