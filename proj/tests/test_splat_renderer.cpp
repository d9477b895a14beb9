#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "robmrag/error.hpp"
#include "robmrag/fixtures.hpp"
#include "robmrag/splat_renderer.hpp"
#include "test_support.hpp"

using namespace robmrag;
using robmrag::testkit::Rng;

namespace {

const Camera kCam{100, 100, 32, 24, 64, 48};
const std::vector<double> kBg{0.2, 0.4, 0.6};

GaussianSet random_scene(Rng& rng, int n) {
    GaussianSet set;
    for (int i = 0; i < n; ++i) {
        const double color[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
        set.add(Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.4, 0.4), rng.uniform(1.5, 3.0)),
                Vec3(rng.uniform(0.01, 0.15), rng.uniform(0.01, 0.15), rng.uniform(0.01, 0.15)), rng.unit_quat(),
                rng.uniform(0.0, 1.0), color);
    }
    return set;
}

void expect_background(const RenderOutput& img) {
    for (std::size_t p = 0; p < img.alpha.size(); ++p) {
        ASSERT_EQ(img.alpha[p], 0.0f);
        ASSERT_EQ(img.depth[p], 0.0f);
        for (int k = 0; k < 3; ++k) ASSERT_EQ(img.color[p * 3 + k], static_cast<float>(kBg[k]));
    }
}

}  // namespace

TEST(Render, EmptySceneIsBackground) {
    const auto img = render(GaussianSet{}, kCam, Mat3::Identity(), Vec3::Zero(), kBg);
    EXPECT_EQ(img.width, 64);
    EXPECT_EQ(img.height, 48);
    expect_background(img);
}

TEST(Render, TransparentSceneIsBackground) {
    Rng rng(1);
    auto set = random_scene(rng, 20);
    for (auto& o : set.opacities) o = 0.0;
    expect_background(render(set, kCam, Mat3::Identity(), Vec3::Zero(), kBg));
}

TEST(Render, GaussiansBehindCameraAreCulled) {
    GaussianSet set;
    const double c[3] = {1, 0, 0};
    set.add(Vec3(0, 0, -1), Vec3(0.1, 0.1, 0.1), Quat::identity(), 1.0, c);
    set.add(Vec3(0, 0, 0), Vec3(0.1, 0.1, 0.1), Quat::identity(), 1.0, c);
    expect_background(render(set, kCam, Mat3::Identity(), Vec3::Zero(), kBg));
}

TEST(Render, SingleGaussianMatchesExactDensity) {
    GaussianSet set;
    const double c[3] = {1, 1, 1};
    const double s = 0.04;
    set.add(Vec3(0, 0, 1), Vec3(s, s, s), Quat::identity(), 1.0, c);
    const auto img = render(set, kCam, Mat3::Identity(), Vec3::Zero(), kBg);
    // Image-plane std dev is fx * s / z pixels.
    const double sigma = kCam.fx * s;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double d2 = ((x - kCam.cx) * (x - kCam.cx) + (y - kCam.cy) * (y - kCam.cy)) / (sigma * sigma);
            double expected = std::exp(-0.5 * d2);
            if (d2 > 9.0 || expected < 1.0 / 255.0) expected = 0.0;
            ASSERT_NEAR(img.alpha[static_cast<std::size_t>(y) * img.width + x], expected, 1e-6) << x << "," << y;
        }
    }
    const auto at = [&](int x, int y) { return img.alpha[static_cast<std::size_t>(y) * img.width + x]; };
    EXPECT_EQ(at(32, 24), 1.0f);
    for (int d = 1; d <= 12 && at(32 + d, 24) > 0; ++d) {
        EXPECT_LT(at(32 + d, 24), at(32 + d - 1, 24));
        EXPECT_LT(at(32, 24 + d), at(32, 24 + d - 1));
    }
    EXPECT_NEAR(img.depth[24 * 64 + 32], 1.0, 1e-6);
}

TEST(Render, FrontGaussianOccludes) {
    GaussianSet set;
    const double red[3] = {1, 0, 0}, blue[3] = {0, 0, 1};
    set.add(Vec3(0, 0, 3), Vec3(0.2, 0.2, 0.2), Quat::identity(), 1.0, blue);
    set.add(Vec3(0, 0, 2), Vec3(0.1, 0.1, 0.1), Quat::identity(), 1.0, red);
    const auto img = render(set, kCam, Mat3::Identity(), Vec3::Zero(), kBg);
    const std::size_t p = 24 * 64 + 32;
    EXPECT_NEAR(img.color[p * 3 + 0], 1.0, 1e-6);
    EXPECT_NEAR(img.color[p * 3 + 2], 0.0, 1e-6);
    EXPECT_NEAR(img.depth[p], 2.0, 1e-6);
}

TEST(Render, DeterministicAcrossThreadCounts) {
    Rng rng(2);
    const auto set = random_scene(rng, 60);
    const auto a = render(set, kCam, Mat3::Identity(), Vec3::Zero(), kBg, {1});
    const auto b = render(set, kCam, Mat3::Identity(), Vec3::Zero(), kBg, {4});
    const auto c = render(set, kCam, Mat3::Identity(), Vec3::Zero(), kBg, {1});
    EXPECT_EQ(a.color, b.color);
    EXPECT_EQ(a.alpha, b.alpha);
    EXPECT_EQ(a.depth, b.depth);
    EXPECT_EQ(a.color, c.color);
}

TEST(Render, DifferentPosesDifferOnFootprint) {
    GaussianSet set;
    const double c[3] = {0.9, 0.1, 0.1};
    set.add(Vec3(0.2, 0.1, 2), Vec3(0.08, 0.03, 0.03), Quat::identity(), 0.9, c);
    const auto a = render_as_features(set, kCam, Mat3::Identity(), Vec3::Zero(), kBg, true);
    const auto b = render_as_features(set, kCam, testkit::rodrigues(Vec3::UnitY(), 0.1), Vec3::Zero(), kBg, true);
    EXPECT_NE(a.values, b.values);
    EXPECT_EQ(a.channels, 4);
}

TEST(Render, BackgroundChannelMismatch) {
    EXPECT_THROW(render(GaussianSet{}, kCam, Mat3::Identity(), Vec3::Zero(), std::vector<double>{0.0}),
                 ValidationError);
}

TEST(RenderProperty, AlphaInUnitInterval) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto img = render(random_scene(rng, rng.integer(0, 40)), kCam, Mat3::Identity(), Vec3::Zero(), kBg);
        for (float a : img.alpha) ASSERT_TRUE(a >= 0.0f && a <= 1.0f);
        for (float v : img.color) ASSERT_TRUE(v >= 0.0f && v <= 1.0f + 1e-6f);
    }
}

TEST(RenderProperty, PreRotatedSceneMatchesRotatedRender) {
    Rng rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        const auto set = random_scene(rng, 25);
        const Mat3 r = testkit::rodrigues(rng.unit_vector(), rng.uniform(-0.3, 0.3));
        const Vec3 t(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0, 0.3));
        const auto a = render(set, kCam, r, t, kBg);
        const auto b = render(transformed(set, r, t), kCam, Mat3::Identity(), Vec3::Zero(), kBg);
        for (std::size_t i = 0; i < a.color.size(); ++i) ASSERT_NEAR(a.color[i], b.color[i], 1e-5);
        for (std::size_t i = 0; i < a.alpha.size(); ++i) ASSERT_NEAR(a.alpha[i], b.alpha[i], 1e-5);
    }
}

TEST(Gaussians, TensorRoundtrip) {
    const auto set = fixtures::object_scene(7);
    const auto t = to_tensor(set);
    EXPECT_EQ(t.dims, (std::vector<std::uint64_t>{set.size(), kGaussianRowWidth}));
    const auto back = gaussians_from_tensor(t);
    ASSERT_EQ(back.size(), set.size());
    EXPECT_EQ(to_tensor(back).data, t.data);
}

TEST(Gaussians, Validation) {
    GaussianSet set;
    const double c[3] = {0.5, 0.5, 0.5};
    set.add(Vec3(0, 0, 1), Vec3(0.1, 0.1, 0.1), Quat::identity(), 0.5, c);
    EXPECT_NO_THROW(set.validate());
    auto bad = set;
    bad.scales[0].x() = 0;
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = set;
    bad.opacities[0] = 1.5;
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = set;
    bad.rotations[0] = Quat{2, 0, 0, 0};
    EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Gaussians, CovarianceIsRotatedDiagonal) {
    GaussianSet set;
    const double c[3] = {0.5, 0.5, 0.5};
    const Quat q = from_axis_angle(Vec3(1, 2, 3), 0.7);
    set.add(Vec3(0, 0, 1), Vec3(0.1, 0.2, 0.3), q, 0.5, c);
    const Mat3 r = testkit::oracle_quat_matrix(q);
    const Mat3 expected = r * Vec3(0.01, 0.04, 0.09).asDiagonal() * r.transpose();
    EXPECT_LE((set.covariance(0) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ppm, Header) {
    const auto img = render(GaussianSet{}, kCam, Mat3::Identity(), Vec3::Zero(), kBg);
    const auto ppm = encode_ppm(img);
    const std::string header = "P6\n64 48\n255\n";
    ASSERT_EQ(ppm.size(), header.size() + 64 * 48 * 3);
    EXPECT_EQ(std::string(ppm.begin(), ppm.begin() + static_cast<long>(header.size())), header);
    EXPECT_EQ(ppm[header.size()], static_cast<unsigned char>(std::lround(0.2 * 255)));
}
