#include "robmrag/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "robmrag/error.hpp"

namespace robmrag {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kHeaderFixed = 8 + 4 + 4 + 4;
constexpr std::uint32_t kMaxDims = 16;
// Payloads are read in bounded chunks so a hostile header cannot force a
// huge allocation before truncation is detected.
constexpr std::size_t kReadChunk = 1 << 16;

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    }
    out.write(bytes, sizeof(T));
}

template <typename T>
bool get_le(std::istream& in, T& value) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
    value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(bytes[i]) << (8 * i);
    }
    return true;
}

std::uint64_t checked_product(std::span<const std::uint64_t> dims) {
    std::uint64_t count = 1;
    for (auto extent : dims) {
        if (extent != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / extent) {
            throw FormatError("tensor extents overflow");
        }
        count *= extent;
    }
    return count;
}

void check_shape(std::span<const std::uint64_t> dims) {
    if (dims.empty()) throw ValidationError("tensor has no dimensions");
    if (dims.size() > kMaxDims) throw FormatError("tensor has too many dimensions");
    for (auto extent : dims) {
        if (extent == 0) throw ValidationError("tensor extent is zero");
    }
}

}  // namespace

std::size_t tensor_byte_size(std::span<const std::uint64_t> dims) {
    return kHeaderFixed + 8 * dims.size() + 4 * static_cast<std::size_t>(checked_product(dims));
}

std::size_t write_tensor(std::span<const std::uint64_t> dims, std::span<const float> data,
                         std::ostream& dest) {
    check_shape(dims);
    if (checked_product(dims) != data.size()) {
        throw ValidationError("tensor dims describe " + std::to_string(checked_product(dims)) +
                              " values but data has " + std::to_string(data.size()));
    }
    for (float v : data) {
        if (!std::isfinite(v)) throw ValidationError("tensor contains a non-finite value");
    }

    dest.write(kTensorMagic.data(), kTensorMagic.size());
    put_le<std::uint32_t>(dest, kTensorVersion);
    put_le<std::uint32_t>(dest, kDtypeF32);
    put_le<std::uint32_t>(dest, static_cast<std::uint32_t>(dims.size()));
    for (auto extent : dims) put_le<std::uint64_t>(dest, extent);
    for (float v : data) put_le<std::uint32_t>(dest, std::bit_cast<std::uint32_t>(v));
    if (!dest) throw Error("failed writing tensor");
    return tensor_byte_size(dims);
}

std::size_t write_tensor(const TensorFile& tensor, std::ostream& dest) {
    return write_tensor(tensor.dims, tensor.data, dest);
}

TensorFile read_tensor(std::istream& src) {
    std::array<char, 8> magic{};
    if (!src.read(magic.data(), magic.size())) throw FormatError("truncated tensor header");
    if (magic != kTensorMagic) throw FormatError("bad tensor magic");

    std::uint32_t version = 0, dtype = 0, ndim = 0;
    if (!get_le(src, version) || !get_le(src, dtype) || !get_le(src, ndim)) {
        throw FormatError("truncated tensor header");
    }
    if (version != kTensorVersion) {
        throw FormatError("unsupported tensor version " + std::to_string(version));
    }
    if (dtype != kDtypeF32) throw FormatError("unsupported tensor dtype " + std::to_string(dtype));
    if (ndim > kMaxDims) throw FormatError("tensor has too many dimensions");

    TensorFile out;
    out.dims.resize(ndim);
    for (auto& extent : out.dims) {
        if (!get_le(src, extent)) throw FormatError("truncated tensor header");
    }
    check_shape(out.dims);

    const std::uint64_t count = checked_product(out.dims);
    std::vector<char> chunk;
    while (out.data.size() < count) {
        const std::size_t want =
            static_cast<std::size_t>(std::min<std::uint64_t>(count - out.data.size(), kReadChunk));
        chunk.resize(want * 4);
        if (!src.read(chunk.data(), static_cast<std::streamsize>(chunk.size()))) {
            throw FormatError("truncated tensor payload: expected " + std::to_string(count) +
                              " values");
        }
        for (std::size_t i = 0; i < want; ++i) {
            std::uint32_t bits = 0;
            for (std::size_t b = 0; b < 4; ++b) {
                bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(chunk[4 * i + b]))
                        << (8 * b);
            }
            const float v = std::bit_cast<float>(bits);
            if (!std::isfinite(v)) throw ValidationError("tensor contains a non-finite value");
            out.data.push_back(v);
        }
    }
    if (src.peek() != std::char_traits<char>::eof()) {
        throw FormatError("trailing bytes after tensor payload");
    }
    return out;
}

std::size_t write_tensor_file(const fs::path& path, const TensorFile& tensor) {
    // Serialize first so a validation failure leaves nothing behind.
    std::ostringstream buffer(std::ios::binary);
    const auto size = write_tensor(tensor, buffer);
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        const auto bytes = buffer.str();
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
    return size;
}

TensorFile read_tensor_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open tensor file " + path.string());
    try {
        return read_tensor(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string_view to_string(Source source) {
    switch (source) {
        case Source::simulation: return "simulation";
        case Source::robotic: return "robotic";
        case Source::internet: return "internet";
    }
    return "unknown";
}

std::optional<Source> parse_source(std::string_view text) {
    if (text == "simulation") return Source::simulation;
    if (text == "robotic") return Source::robotic;
    if (text == "internet") return Source::internet;
    return std::nullopt;
}

void validate_record(const ManifestRecord& r) {
    auto fail = [&](const std::string& what) {
        throw ValidationError("record '" + r.id + "': " + what);
    };
    if (r.id.empty()) throw ValidationError("record has an empty id");
    if (r.contact_frame_features.empty()) fail("missing contact_frame_features");
    if (r.contact_frame_embedding.empty()) fail("missing contact_frame_embedding");
    if (r.source == Source::simulation) {
        if (!r.contact_point) fail("simulation record missing contact_point");
        if (!r.dir_up) fail("simulation record missing dir_up");
        if (!r.dir_forward) fail("simulation record missing dir_forward");
    }
    for (const auto& [name, dir] : {std::pair{"dir_up", &r.dir_up}, {"dir_forward", &r.dir_forward}}) {
        if (*dir && !(std::abs((*dir)->norm() - 1.0) <= 1e-6)) {
            fail(std::string(name) + " is not a unit vector");
        }
    }
    if (r.contact_point) {
        const auto& p = *r.contact_point;
        if (!(p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0)) {
            fail("contact_point outside [0,1]");
        }
    }
    if (r.intrinsics) {
        const auto& k = *r.intrinsics;
        if (!(k.fx > 0 && k.fy > 0) || k.width < 1 || k.height < 1 || !(k.cx >= 0 && k.cx < k.width) ||
            !(k.cy >= 0 && k.cy < k.height)) {
            fail("invalid intrinsics");
        }
    }
}

namespace {

template <int N>
Eigen::Matrix<double, N, 1> vector_field(const json& value, const char* name) {
    if (!value.is_array() || value.size() != N) {
        throw FormatError(std::string(name) + " must be an array of " + std::to_string(N) + " numbers");
    }
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) {
        if (!value[i].is_number()) throw FormatError(std::string(name) + " must contain numbers");
        v[i] = value[i].get<double>();
    }
    return v;
}

std::string string_field(const json& obj, const char* name) {
    auto it = obj.find(name);
    if (it == obj.end() || it->is_null()) throw FormatError(std::string("missing field '") + name + "'");
    if (!it->is_string()) throw FormatError(std::string("field '") + name + "' must be a string");
    return it->get<std::string>();
}

std::optional<fs::path> optional_path(const json& obj, const char* name, const fs::path& base) {
    auto it = obj.find(name);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw FormatError(std::string("field '") + name + "' must be a string");
    fs::path p = it->get<std::string>();
    return p.is_relative() && !base.empty() ? base / p : p;
}

const json* optional_value(const json& obj, const char* name) {
    auto it = obj.find(name);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
}

ManifestRecord parse_record(const json& obj, const fs::path& base) {
    if (!obj.is_object()) throw FormatError("line is not a JSON object");
    ManifestRecord r;
    r.id = string_field(obj, "id");
    const auto source_text = string_field(obj, "source");
    const auto source = parse_source(source_text);
    if (!source) throw FormatError("unknown source '" + source_text + "'");
    r.source = *source;
    r.instruction = string_field(obj, "instruction");
    r.object_name = string_field(obj, "object_name");

    auto features = optional_path(obj, "contact_frame_features", base);
    auto embedding = optional_path(obj, "contact_frame_embedding", base);
    if (!features) throw FormatError("missing field 'contact_frame_features'");
    if (!embedding) throw FormatError("missing field 'contact_frame_embedding'");
    r.contact_frame_features = *features;
    r.contact_frame_embedding = *embedding;
    r.instruction_embedding = optional_path(obj, "instruction_embedding", base);
    r.success_frame_embedding = optional_path(obj, "success_frame_embedding", base);
    r.mask = optional_path(obj, "mask", base);
    r.depth = optional_path(obj, "depth", base);
    r.gaussians = optional_path(obj, "gaussians", base);

    if (const auto* k = optional_value(obj, "intrinsics")) {
        if (!k->is_object()) throw FormatError("intrinsics must be an object");
        Intrinsics in;
        try {
            in.fx = k->at("fx").get<double>();
            in.fy = k->at("fy").get<double>();
            in.cx = k->at("cx").get<double>();
            in.cy = k->at("cy").get<double>();
            in.width = k->at("width").get<int>();
            in.height = k->at("height").get<int>();
        } catch (const json::exception&) {
            throw FormatError("intrinsics needs numeric fx, fy, cx, cy, width, height");
        }
        r.intrinsics = in;
    }
    if (const auto* v = optional_value(obj, "contact_point")) r.contact_point = vector_field<2>(*v, "contact_point");
    if (const auto* v = optional_value(obj, "dir_up")) r.dir_up = vector_field<3>(*v, "dir_up");
    if (const auto* v = optional_value(obj, "dir_forward")) r.dir_forward = vector_field<3>(*v, "dir_forward");
    return r;
}

bool blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(),
                       [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

}  // namespace

std::vector<ManifestRecord> load_manifest(std::istream& src, const fs::path& base_dir,
                                          const fs::path& origin) {
    std::vector<ManifestRecord> records;
    std::map<std::string, std::size_t> seen;  // id -> line
    const std::string where = origin.empty() ? std::string("manifest") : origin.string();

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(src, line)) {
        ++line_no;
        if (blank(line)) continue;
        const auto prefix = where + ":" + std::to_string(line_no) + ": ";

        ManifestRecord record;
        try {
            record = parse_record(json::parse(line), base_dir);
        } catch (const json::parse_error& e) {
            throw FormatError(prefix + "malformed JSON (" + e.what() + ")");
        } catch (const FormatError& e) {
            throw FormatError(prefix + e.what());
        }
        try {
            validate_record(record);
        } catch (const ValidationError& e) {
            throw ValidationError(prefix + e.what());
        }
        if (auto [it, inserted] = seen.emplace(record.id, line_no); !inserted) {
            throw ValidationError(where + ": duplicate id '" + record.id + "' on lines " +
                                  std::to_string(it->second) + " and " + std::to_string(line_no));
        }
        record.line = line_no;
        record.manifest = origin;
        records.push_back(std::move(record));
    }
    return records;
}

std::vector<ManifestRecord> load_manifest_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open manifest " + path.string());
    return load_manifest(in, path.parent_path(), path);
}

std::string manifest_line(const ManifestRecord& r, const fs::path& base_dir) {
    auto rel = [&](const fs::path& p) {
        if (base_dir.empty()) return p.generic_string();
        auto relative = p.lexically_relative(base_dir);
        return relative.empty() || *relative.begin() == ".." ? p.generic_string()
                                                              : relative.generic_string();
    };
    nlohmann::ordered_json obj;
    obj["id"] = r.id;
    obj["source"] = to_string(r.source);
    obj["instruction"] = r.instruction;
    obj["object_name"] = r.object_name;
    obj["contact_frame_features"] = rel(r.contact_frame_features);
    obj["contact_frame_embedding"] = rel(r.contact_frame_embedding);
    if (r.instruction_embedding) obj["instruction_embedding"] = rel(*r.instruction_embedding);
    if (r.success_frame_embedding) obj["success_frame_embedding"] = rel(*r.success_frame_embedding);
    if (r.mask) obj["mask"] = rel(*r.mask);
    if (r.depth) obj["depth"] = rel(*r.depth);
    if (r.intrinsics) {
        const auto& k = *r.intrinsics;
        obj["intrinsics"] = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx},
                             {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
    }
    if (r.contact_point) obj["contact_point"] = {r.contact_point->x(), r.contact_point->y()};
    if (r.dir_up) obj["dir_up"] = {r.dir_up->x(), r.dir_up->y(), r.dir_up->z()};
    if (r.dir_forward) obj["dir_forward"] = {r.dir_forward->x(), r.dir_forward->y(), r.dir_forward->z()};
    if (r.gaussians) obj["gaussians"] = rel(*r.gaussians);
    return obj.dump();
}

}  // namespace robmrag
