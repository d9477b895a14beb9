#pragma once

// Per-pixel image containers: dense feature maps, instance masks, depth maps,
// plus their conversions from tensor files.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "robmrag/tensor_store.hpp"

namespace robmrag {

// H x W x C features, row-major with channels innermost.
struct DenseFeatureMap {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> values;

    DenseFeatureMap() = default;
    DenseFeatureMap(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c), values(static_cast<std::size_t>(h) * w * c, fill) {}

    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(height) * width; }
    std::span<const float> pixel(std::size_t index) const {
        return {values.data() + index * channels, static_cast<std::size_t>(channels)};
    }
    std::span<float> pixel(std::size_t index) {
        return {values.data() + index * channels, static_cast<std::size_t>(channels)};
    }
    std::span<const float> at(int row, int col) const {
        return pixel(static_cast<std::size_t>(row) * width + col);
    }
};

struct InstanceMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bits;

    InstanceMask() = default;
    InstanceMask(int h, int w, bool fill = false)
        : height(h), width(w), bits(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

    static InstanceMask full(int h, int w) { return {h, w, true}; }

    bool at(int row, int col) const { return bits[static_cast<std::size_t>(row) * width + col] != 0; }
    std::size_t count() const;
};

// Metres; 0 means no measurement.
struct DepthMap {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    float at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

// [H, W, C] or [H, W] (C = 1). With normalize, every nonzero pixel vector is
// scaled to unit L2 norm; all-zero pixels stay zero.
DenseFeatureMap feature_map_from_tensor(const TensorFile& tensor, bool normalize);
void normalize_pixels(DenseFeatureMap& map);
TensorFile to_tensor(const DenseFeatureMap& map);

// [H, W] with values exactly 0 or 1.
InstanceMask mask_from_tensor(const TensorFile& tensor);
TensorFile to_tensor(const InstanceMask& mask);
// Nearest-neighbour resampling to a new grid.
InstanceMask resize_nearest(const InstanceMask& mask, int height, int width);

// [H, W] with finite values >= 0.
DepthMap depth_from_tensor(const TensorFile& tensor);
TensorFile to_tensor(const DepthMap& depth);

// [D] or [1, D]; L2 norm must be within 1e-6 of 1.
std::vector<float> embedding_from_tensor(const TensorFile& tensor);
TensorFile embedding_tensor(std::span<const float> embedding);

}  // namespace robmrag
