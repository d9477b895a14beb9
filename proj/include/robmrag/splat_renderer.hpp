#pragma once

// CPU forward rasterizer for 3D Gaussian splats.
//
// Each Gaussian is moved into the camera frame by [R|t], its covariance
// R(q) diag(s^2) R(q)^T is pushed through the projection Jacobian, and the
// resulting 2D splats are composited front to back in a global depth order.

#include <cstddef>
#include <span>
#include <vector>

#include "robmrag/geometry.hpp"
#include "robmrag/raster.hpp"
#include "robmrag/tensor_store.hpp"

namespace robmrag {

// Column layout of a Gaussian asset tensor of shape [N, 14].
inline constexpr std::size_t kGaussianRowWidth = 14;

struct GaussianSet {
    int channels = 3;
    std::vector<Vec3> means;      // metres, camera frame
    std::vector<Vec3> scales;     // per-axis std dev, > 0
    std::vector<Quat> rotations;  // unit
    std::vector<double> opacities;
    std::vector<double> colors;   // N x channels, each in [0, 1]

    std::size_t size() const noexcept { return means.size(); }
    void add(const Vec3& mean, const Vec3& scale, const Quat& rot, double opacity,
             std::span<const double> color);
    std::span<const double> color(std::size_t i) const {
        return {colors.data() + i * channels, static_cast<std::size_t>(channels)};
    }
    Mat3 covariance(std::size_t i) const;
    Vec3 centroid() const;

    // Throws ValidationError on the first broken invariant.
    void validate() const;
};

// [N, 14] rows of (mu:3, scale:3, rot:4 (w,x,y,z), opacity:1, rgb:3).
GaussianSet gaussians_from_tensor(const TensorFile& tensor);
TensorFile to_tensor(const GaussianSet& set);

// The same scene with every Gaussian rigidly moved by [R|t].
GaussianSet transformed(const GaussianSet& set, const Mat3& rotation, const Vec3& translation);

struct RenderOutput {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> color;  // H x W x C
    std::vector<float> alpha;  // H x W, in [0, 1]
    std::vector<float> depth;  // H x W, alpha-weighted mean depth, 0 where alpha == 0
};

struct RenderOptions {
    // Row bands rendered concurrently; the output does not depend on it.
    int threads = 0;  // 0 = hardware concurrency
};

inline constexpr double kSplatSigmaCutoff = 3.0;
inline constexpr double kMinSplatAlpha = 1.0 / 255.0;
inline constexpr double kNearPlane = 1e-4;

RenderOutput render(const GaussianSet& set, const Camera& cam, const Mat3& rotation,
                    const Vec3& translation, std::span<const double> background,
                    const RenderOptions& options = {});

// Rendered color (and optionally alpha) as a per-pixel feature map.
DenseFeatureMap to_features(const RenderOutput& image, bool include_alpha);
DenseFeatureMap render_as_features(const GaussianSet& set, const Camera& cam, const Mat3& rotation,
                                   const Vec3& translation, std::span<const double> background,
                                   bool include_alpha, const RenderOptions& options = {});

// Binary PPM (P6, maxval 255) of the first three color channels.
std::vector<unsigned char> encode_ppm(const RenderOutput& image);

}  // namespace robmrag
