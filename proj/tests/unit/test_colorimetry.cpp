#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sanet/colorimetry.hpp"
#include "support/oracles.hpp"

using namespace sanet;
using color::Vec3;

namespace {

double max_abs_diff(const Vec3& a, const Vec3& b) {
    double m = 0;
    for (int i = 0; i < 3; ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

ImageRGB solid(std::size_t w, std::size_t h, Vec3 c) {
    ImageRGB img(w, h);
    for (std::size_t i = 0; i < img.pixels(); ++i)
        for (int k = 0; k < 3; ++k) img.data[3 * i + k] = c[k];
    return img;
}

}  // namespace

TEST(Colorimetry, WhiteMapsToL100) {
    const Vec3 lab = color::srgb_to_lab({1, 1, 1});
    EXPECT_NEAR(lab[0], 100.0, 1e-6);
    EXPECT_NEAR(lab[1], 0.0, 1e-6);
    EXPECT_NEAR(lab[2], 0.0, 1e-6);
}

TEST(Colorimetry, BlackMapsToOrigin) {
    const Vec3 lab = color::srgb_to_lab({0, 0, 0});
    EXPECT_EQ(lab[0], 0.0);
    EXPECT_EQ(lab[1], 0.0);
    EXPECT_EQ(lab[2], 0.0);
}

TEST(Colorimetry, PureRedGoldenValues) {
    const Vec3 lab = color::srgb_to_lab({1, 0, 0});
    EXPECT_NEAR(lab[0], 53.24, 0.05);
    EXPECT_NEAR(lab[1], 80.09, 0.05);
    EXPECT_NEAR(lab[2], 67.20, 0.05);
    const auto ref = oracle::srgb_to_lab(1, 0, 0);
    EXPECT_LT(max_abs_diff(lab, {ref[0], ref[1], ref[2]}), 1e-4);
}

TEST(Colorimetry, AgreesWithReferenceOnRandomColors) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 2000; ++i) {
        const double r = u(gen), g = u(gen), b = u(gen);
        const auto ref = oracle::srgb_to_lab(r, g, b);
        EXPECT_LT(max_abs_diff(color::srgb_to_lab({r, g, b}), {ref[0], ref[1], ref[2]}), 1e-4);
    }
}

TEST(Colorimetry, InverseOfWhite) {
    const Vec3 rgb = color::lab_to_srgb({100, 0, 0});
    for (double c : rgb) EXPECT_NEAR(c, 1.0, 1e-6);
}

TEST(Colorimetry, RoundTripGrid17) {
    double worst = 0;
    for (int r = 0; r <= 16; ++r)
        for (int g = 0; g <= 16; ++g)
            for (int b = 0; b <= 16; ++b) {
                const Vec3 x{r / 16.0, g / 16.0, b / 16.0};
                worst = std::max(worst, max_abs_diff(color::lab_to_srgb(color::srgb_to_lab(x)), x));
            }
    EXPECT_LT(worst, 1e-6);
}

TEST(Colorimetry, OutOfGamutIsClamped) {
    const Vec3 raw = color::lab_to_srgb_unclamped({50, 200, 0});
    EXPECT_GT(raw[0], 1.0);
    const Vec3 rgb = color::lab_to_srgb({50, 200, 0});
    for (int i = 0; i < 3; ++i) {
        EXPECT_GE(rgb[i], 0.0);
        EXPECT_LE(rgb[i], 1.0);
        EXPECT_EQ(rgb[i], std::clamp(raw[i], 0.0, 1.0));
    }
}

TEST(Colorimetry, LightnessStaysInRange) {
    std::mt19937_64 gen(3);
    const ImageLAB lab = color::rgb_to_lab(oracle::random_image(gen, 20, 20));
    for (std::size_t i = 0; i < lab.pixels(); ++i) {
        EXPECT_GE(lab.data[3 * i], 0.0);
        EXPECT_LE(lab.data[3 * i], 100.0 + 1e-9);
    }
}

TEST(ChannelStats, ConstantImage) {
    ImageLAB img(3, 2);
    for (std::size_t i = 0; i < img.pixels(); ++i) img.data[3 * i] = 50;
    const auto s = color::channel_stats(img);
    EXPECT_EQ(s.mean[0], 50.0);
    EXPECT_EQ(s.std[0], 0.0);
}

TEST(ChannelStats, TwoPixelPopulationStd) {
    ImageLAB img(2, 1);
    img.data[0] = 0;
    img.data[3] = 100;
    const auto s = color::channel_stats(img);
    EXPECT_DOUBLE_EQ(s.mean[0], 50.0);
    EXPECT_DOUBLE_EQ(s.std[0], 50.0);
}

TEST(ChannelStats, SinglePixelHasZeroStd) {
    ImageLAB img(1, 1);
    img.data = {12, -3, 40};
    const auto s = color::channel_stats(img);
    for (double v : s.std) EXPECT_EQ(v, 0.0);
}

TEST(ColorExchange, SelfExchangeIsIdentity) {
    std::mt19937_64 gen(11);
    const ImageRGB a = oracle::random_image(gen, 16, 12);
    const auto [x, y] = color::color_exchange(a, a);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        EXPECT_NEAR(x.data[i], a.data[i], 1e-5);
        EXPECT_NEAR(y.data[i], a.data[i], 1e-5);
    }
}

TEST(ColorExchange, ConstantImageTakesPartnerMean) {
    std::mt19937_64 gen(5);
    const ImageRGB a = solid(8, 8, {0.3, 0.5, 0.4});
    const ImageRGB b = oracle::random_image(gen, 8, 8, 0.4, 0.6);
    const auto out = color::color_exchange(a, b).first;
    const auto so = color::channel_stats(color::rgb_to_lab(out));
    const auto sb = oracle::image_lab_stats(b);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(so.mean[c], sb.mean[c], 1e-3);
    for (std::size_t i = 3; i < out.data.size(); ++i) EXPECT_EQ(out.data[i], out.data[i % 3]);
}

TEST(ColorExchange, StatisticsTransferWithoutClamping) {
    std::mt19937_64 gen(21);
    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const ImageRGB a = oracle::random_image(gen, 10, 10, 0.3, 0.7);
        const ImageRGB b = oracle::random_image(gen, 12, 9, 0.35, 0.65);
        // Skip pairs where the unclamped inverse would leave the gamut.
        const auto la = color::rgb_to_lab(a);
        const auto moved =
            color::transfer_stats(la, color::channel_stats(la), color::channel_stats(color::rgb_to_lab(b)));
        bool clamps = false;
        for (std::size_t i = 0; i < moved.pixels(); ++i)
            for (double c : color::lab_to_srgb_unclamped({moved.data[3 * i], moved.data[3 * i + 1], moved.data[3 * i + 2]}))
                clamps = clamps || c < 0 || c > 1;
        if (clamps) continue;
        ++checked;
        const auto [out1, out2] = color::color_exchange(a, b);
        const auto s1 = oracle::image_lab_stats(out1), sb = oracle::image_lab_stats(b);
        for (int c = 0; c < 3; ++c) {
            EXPECT_NEAR(s1.mean[c], sb.mean[c], 1e-3);
            EXPECT_NEAR(s1.sd[c], sb.sd[c], 1e-3);
        }
    }
    EXPECT_GT(checked, 20);
}

TEST(ColorExchange, DegenerateStdIsFinite) {
    const auto [x, y] = color::color_exchange(solid(4, 4, {0.2, 0.2, 0.2}), solid(3, 5, {0.9, 0.1, 0.1}));
    for (double v : x.data) EXPECT_TRUE(std::isfinite(v));
    for (double v : y.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(ColorExchange, Deterministic) {
    std::mt19937_64 gen(9);
    const ImageRGB a = oracle::random_image(gen, 9, 7), b = oracle::random_image(gen, 5, 6);
    EXPECT_EQ(color::color_exchange(a, b), color::color_exchange(a, b));
}

TEST(ColorExchange, RejectsEmpty) {
    EXPECT_THROW(color::color_exchange(ImageRGB{}, solid(2, 2, {0, 0, 0})), std::invalid_argument);
}
