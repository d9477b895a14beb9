#include "robmrag/splat_renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "parallel.hpp"
#include "robmrag/error.hpp"

namespace robmrag {

void GaussianSet::add(const Vec3& mean, const Vec3& scale, const Quat& rot, double opacity,
                      std::span<const double> color) {
    if (static_cast<int>(color.size()) != channels) {
        throw ValidationError("gaussian color has " + std::to_string(color.size()) +
                              " channels, set expects " + std::to_string(channels));
    }
    means.push_back(mean);
    scales.push_back(scale);
    rotations.push_back(rot);
    opacities.push_back(opacity);
    colors.insert(colors.end(), color.begin(), color.end());
}

Mat3 GaussianSet::covariance(std::size_t i) const {
    const Mat3 r = to_matrix(rotations[i]);
    return r * scales[i].cwiseProduct(scales[i]).asDiagonal() * r.transpose();
}

Vec3 GaussianSet::centroid() const {
    Vec3 sum = Vec3::Zero();
    for (const auto& m : means) sum += m;
    return means.empty() ? sum : Vec3(sum / static_cast<double>(means.size()));
}

void GaussianSet::validate() const {
    const std::size_t n = means.size();
    if (channels < 1) throw ValidationError("gaussian set needs at least one color channel");
    if (scales.size() != n || rotations.size() != n || opacities.size() != n ||
        colors.size() != n * static_cast<std::size_t>(channels)) {
        throw ValidationError("gaussian set attribute arrays have inconsistent lengths");
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto where = "gaussian " + std::to_string(i) + ": ";
        if (!means[i].allFinite()) throw ValidationError(where + "non-finite center");
        if (!(scales[i].minCoeff() > 0) || !scales[i].allFinite()) {
            throw ValidationError(where + "scales must be positive");
        }
        if (!(std::abs(rotations[i].norm() - 1.0) <= 1e-6)) {
            throw ValidationError(where + "rotation quaternion is not unit");
        }
        if (!(opacities[i] >= 0 && opacities[i] <= 1)) throw ValidationError(where + "opacity outside [0,1]");
        for (double c : color(i)) {
            if (!(c >= 0 && c <= 1)) throw ValidationError(where + "color outside [0,1]");
        }
    }
}

GaussianSet gaussians_from_tensor(const TensorFile& tensor) {
    if (tensor.dims.size() != 2 || tensor.dims[1] != kGaussianRowWidth) {
        throw ValidationError("gaussian asset must have shape [N, 14]");
    }
    GaussianSet set;
    for (std::size_t row = 0; row < tensor.dims[0]; ++row) {
        const float* v = tensor.data.data() + row * kGaussianRowWidth;
        const double rgb[3] = {v[11], v[12], v[13]};
        set.add({v[0], v[1], v[2]}, {v[3], v[4], v[5]}, Quat{v[6], v[7], v[8], v[9]}, v[10], rgb);
    }
    set.validate();
    return set;
}

TensorFile to_tensor(const GaussianSet& set) {
    if (set.channels != 3) throw ValidationError("gaussian asset files store exactly 3 color channels");
    TensorFile t{{set.size(), kGaussianRowWidth}, {}};
    t.data.reserve(set.size() * kGaussianRowWidth);
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& m = set.means[i];
        const auto& s = set.scales[i];
        const auto& q = set.rotations[i];
        for (double v : {m.x(), m.y(), m.z(), s.x(), s.y(), s.z(), q.w, q.x, q.y, q.z, set.opacities[i]}) {
            t.data.push_back(static_cast<float>(v));
        }
        for (double c : set.color(i)) t.data.push_back(static_cast<float>(c));
    }
    return t;
}

GaussianSet transformed(const GaussianSet& set, const Mat3& rotation, const Vec3& translation) {
    GaussianSet out = set;
    const Quat qr = from_matrix(rotation);
    for (std::size_t i = 0; i < set.size(); ++i) {
        out.means[i] = rotation * set.means[i] + translation;
        out.rotations[i] = quat_mul(qr, set.rotations[i]).normalized();
    }
    return out;
}

namespace {

struct Splat {
    double u = 0, v = 0;            // projected center, pixels
    double ia = 0, ib = 0, ic = 0;  // inverse 2D covariance [[ia, ib], [ib, ic]]
    double opacity = 0;
    double depth = 0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds
    std::size_t index = 0;
};

std::vector<Splat> project_splats(const GaussianSet& set, const Camera& cam, const Mat3& rotation,
                                  const Vec3& translation) {
    std::vector<Splat> splats;
    splats.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.opacities[i] < kMinSplatAlpha) continue;
        const Vec3 p = rotation * set.means[i] + translation;
        if (!(p.z() > kNearPlane)) continue;

        const double z = p.z();
        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx / z, 0, -cam.fx * p.x() / (z * z),
               0, cam.fy / z, -cam.fy * p.y() / (z * z);
        const Mat3 cov_cam = rotation * set.covariance(i) * rotation.transpose();
        const Eigen::Matrix2d cov = jac * cov_cam * jac.transpose();

        const double a = cov(0, 0), b = 0.5 * (cov(0, 1) + cov(1, 0)), c = cov(1, 1);
        const double det = a * c - b * b;
        if (!(det > 0) || !std::isfinite(det)) continue;

        Splat s;
        s.u = cam.fx * p.x() / z + cam.cx;
        s.v = cam.fy * p.y() / z + cam.cy;
        s.ia = c / det;
        s.ib = -b / det;
        s.ic = a / det;
        s.opacity = set.opacities[i];
        s.depth = z;
        s.index = i;

        const double rx = kSplatSigmaCutoff * std::sqrt(a);
        const double ry = kSplatSigmaCutoff * std::sqrt(c);
        const double fx0 = std::max(0.0, std::ceil(s.u - rx));
        const double fx1 = std::min(cam.width - 1.0, std::floor(s.u + rx));
        const double fy0 = std::max(0.0, std::ceil(s.v - ry));
        const double fy1 = std::min(cam.height - 1.0, std::floor(s.v + ry));
        if (!(fx0 <= fx1 && fy0 <= fy1)) continue;
        s.x0 = static_cast<int>(fx0);
        s.x1 = static_cast<int>(fx1);
        s.y0 = static_cast<int>(fy0);
        s.y1 = static_cast<int>(fy1);
        splats.push_back(s);
    }
    std::stable_sort(splats.begin(), splats.end(), [](const Splat& l, const Splat& r) {
        return l.depth < r.depth || (l.depth == r.depth && l.index < r.index);
    });
    return splats;
}

}  // namespace

RenderOutput render(const GaussianSet& set, const Camera& cam, const Mat3& rotation,
                    const Vec3& translation, std::span<const double> background,
                    const RenderOptions& options) {
    cam.validate();
    set.validate();
    if (static_cast<int>(background.size()) != set.channels) {
        throw ValidationError("background has " + std::to_string(background.size()) +
                              " channels, scene has " + std::to_string(set.channels));
    }

    const int w = cam.width, h = cam.height, nc = set.channels;
    const auto splats = project_splats(set, cam, rotation, translation);

    RenderOutput out;
    out.height = h;
    out.width = w;
    out.channels = nc;
    out.color.assign(static_cast<std::size_t>(h) * w * nc, 0.0f);
    out.alpha.assign(static_cast<std::size_t>(h) * w, 0.0f);
    out.depth.assign(static_cast<std::size_t>(h) * w, 0.0f);

    detail::parallel_chunks(static_cast<std::size_t>(h), options.threads, [&](std::size_t r0, std::size_t r1) {
        const int row0 = static_cast<int>(r0), row1 = static_cast<int>(r1);
        const std::size_t band = static_cast<std::size_t>(row1 - row0) * w;
        std::vector<double> transmit(band, 1.0);
        std::vector<double> color(band * nc, 0.0);
        std::vector<double> depth(band, 0.0);

        for (const auto& s : splats) {
            const int y0 = std::max(s.y0, row0), y1 = std::min(s.y1, row1 - 1);
            if (y0 > y1) continue;
            const auto c = set.color(s.index);
            for (int y = y0; y <= y1; ++y) {
                const double dy = y - s.v;
                for (int x = s.x0; x <= s.x1; ++x) {
                    const double dx = x - s.u;
                    const double d2 = s.ia * dx * dx + 2 * s.ib * dx * dy + s.ic * dy * dy;
                    if (d2 > kSplatSigmaCutoff * kSplatSigmaCutoff) continue;
                    const double a = s.opacity * std::exp(-0.5 * d2);
                    if (a < kMinSplatAlpha) continue;
                    const std::size_t p = static_cast<std::size_t>(y - row0) * w + x;
                    const double weight = transmit[p] * a;
                    for (int k = 0; k < nc; ++k) color[p * nc + k] += weight * c[k];
                    depth[p] += weight * s.depth;
                    transmit[p] *= 1.0 - a;
                }
            }
        }

        for (std::size_t p = 0; p < band; ++p) {
            const std::size_t out_p = static_cast<std::size_t>(row0) * w + p;
            const double alpha = std::clamp(1.0 - transmit[p], 0.0, 1.0);
            out.alpha[out_p] = static_cast<float>(alpha);
            out.depth[out_p] = alpha > 0 ? static_cast<float>(depth[p] / alpha) : 0.0f;
            for (int k = 0; k < nc; ++k) {
                out.color[out_p * nc + k] = static_cast<float>(color[p * nc + k] + transmit[p] * background[k]);
            }
        }
    });
    return out;
}

DenseFeatureMap to_features(const RenderOutput& image, bool include_alpha) {
    const int nc = image.channels + (include_alpha ? 1 : 0);
    DenseFeatureMap map(image.height, image.width, nc);
    for (std::size_t p = 0; p < map.pixel_count(); ++p) {
        auto px = map.pixel(p);
        for (int k = 0; k < image.channels; ++k) px[k] = image.color[p * image.channels + k];
        if (include_alpha) px[image.channels] = image.alpha[p];
    }
    return map;
}

DenseFeatureMap render_as_features(const GaussianSet& set, const Camera& cam, const Mat3& rotation,
                                   const Vec3& translation, std::span<const double> background,
                                   bool include_alpha, const RenderOptions& options) {
    return to_features(render(set, cam, rotation, translation, background, options), include_alpha);
}

std::vector<unsigned char> encode_ppm(const RenderOutput& image) {
    const std::string header =
        "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<unsigned char> bytes(header.begin(), header.end());
    bytes.reserve(bytes.size() + static_cast<std::size_t>(image.width) * image.height * 3);
    for (std::size_t p = 0; p < static_cast<std::size_t>(image.width) * image.height; ++p) {
        for (int k = 0; k < 3; ++k) {
            const float v = k < image.channels ? image.color[p * image.channels + k] : 0.0f;
            bytes.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
        }
    }
    return bytes;
}

}  // namespace robmrag
