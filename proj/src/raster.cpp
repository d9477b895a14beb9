#include "robmrag/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "robmrag/error.hpp"

namespace robmrag {
namespace {

int extent(std::uint64_t v, const char* what) {
    if (v > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
        throw ValidationError(std::string(what) + " extent too large");
    }
    return static_cast<int>(v);
}

}  // namespace

std::size_t InstanceMask::count() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

void normalize_pixels(DenseFeatureMap& map) {
    for (std::size_t i = 0; i < map.pixel_count(); ++i) {
        auto px = map.pixel(i);
        double sq = 0;
        for (float v : px) sq += static_cast<double>(v) * v;
        if (sq == 0) continue;
        const double inv = 1.0 / std::sqrt(sq);
        for (float& v : px) v = static_cast<float>(v * inv);
    }
}

DenseFeatureMap feature_map_from_tensor(const TensorFile& tensor, bool normalize) {
    if (tensor.dims.size() != 2 && tensor.dims.size() != 3) {
        throw ValidationError("feature map must have shape [H, W, C] or [H, W]");
    }
    DenseFeatureMap map;
    map.height = extent(tensor.dims[0], "feature map");
    map.width = extent(tensor.dims[1], "feature map");
    map.channels = tensor.dims.size() == 3 ? extent(tensor.dims[2], "feature map") : 1;
    map.values = tensor.data;
    if (normalize) normalize_pixels(map);
    return map;
}

TensorFile to_tensor(const DenseFeatureMap& map) {
    return {{static_cast<std::uint64_t>(map.height), static_cast<std::uint64_t>(map.width),
             static_cast<std::uint64_t>(map.channels)},
            map.values};
}

InstanceMask mask_from_tensor(const TensorFile& tensor) {
    if (tensor.dims.size() != 2) throw ValidationError("mask must have shape [H, W]");
    InstanceMask mask(extent(tensor.dims[0], "mask"), extent(tensor.dims[1], "mask"));
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
        const float v = tensor.data[i];
        if (v != 0.0f && v != 1.0f) {
            throw ValidationError("mask value at index " + std::to_string(i) + " is not 0 or 1");
        }
        mask.bits[i] = v == 1.0f ? 1 : 0;
    }
    return mask;
}

TensorFile to_tensor(const InstanceMask& mask) {
    TensorFile t{{static_cast<std::uint64_t>(mask.height), static_cast<std::uint64_t>(mask.width)}, {}};
    t.data.reserve(mask.bits.size());
    for (auto b : mask.bits) t.data.push_back(b ? 1.0f : 0.0f);
    return t;
}

InstanceMask resize_nearest(const InstanceMask& mask, int height, int width) {
    if (mask.height == height && mask.width == width) return mask;
    InstanceMask out(height, width);
    for (int r = 0; r < height; ++r) {
        const int sr = std::min(mask.height - 1, static_cast<int>((r + 0.5) * mask.height / height));
        for (int c = 0; c < width; ++c) {
            const int sc = std::min(mask.width - 1, static_cast<int>((c + 0.5) * mask.width / width));
            out.bits[static_cast<std::size_t>(r) * width + c] = mask.at(sr, sc) ? 1 : 0;
        }
    }
    return out;
}

DepthMap depth_from_tensor(const TensorFile& tensor) {
    if (tensor.dims.size() != 2) throw ValidationError("depth map must have shape [H, W]");
    DepthMap depth{extent(tensor.dims[0], "depth"), extent(tensor.dims[1], "depth"), tensor.data};
    for (float v : depth.values) {
        if (!(v >= 0.0f)) throw ValidationError("depth map contains a negative value");
    }
    return depth;
}

TensorFile to_tensor(const DepthMap& depth) {
    return {{static_cast<std::uint64_t>(depth.height), static_cast<std::uint64_t>(depth.width)},
            depth.values};
}

std::vector<float> embedding_from_tensor(const TensorFile& tensor) {
    const bool flat = tensor.dims.size() == 1;
    const bool row = tensor.dims.size() == 2 && tensor.dims[0] == 1;
    if (!flat && !row) throw ValidationError("embedding must have shape [D] or [1, D]");
    double sq = 0;
    for (float v : tensor.data) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    if (!(std::abs(norm - 1.0) <= 1e-6)) {
        throw ValidationError("embedding is not unit-norm (norm " + std::to_string(norm) + ")");
    }
    return tensor.data;
}

TensorFile embedding_tensor(std::span<const float> embedding) {
    return {{static_cast<std::uint64_t>(embedding.size())}, {embedding.begin(), embedding.end()}};
}

}  // namespace robmrag
