#pragma once

// sRGB <-> CIE L*a*b* (D65) and mean/std color exchange between two images.
// All arithmetic is done in double precision.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "sanet/image.hpp"

namespace sanet::color {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

inline constexpr double kWhiteX = 0.95047;
inline constexpr double kWhiteY = 1.0;
inline constexpr double kWhiteZ = 1.08883;

// Lower bound applied to a channel std before it is used as a divisor.
inline constexpr double kStdEpsilon = 1e-6;

namespace detail {

// IEC 61966-2-1 transfer function. The decode threshold 0.04045 maps to
// 0.04045/12.92 in linear light; using that exact value for the encode
// branch makes encode(decode(c)) continuous and invertible.
inline constexpr double kDecodeKnee = 0.04045;
inline constexpr double kEncodeKnee = 0.04045 / 12.92;

inline double srgb_decode(double c) {
    return c <= kDecodeKnee ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double srgb_encode(double c) {
    return c <= kEncodeKnee ? c * 12.92 : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

inline constexpr double kDelta = 6.0 / 29.0;
inline constexpr double kDelta3 = kDelta * kDelta * kDelta;

inline double lab_f(double t) {
    return t > kDelta3 ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

// 116 / (3 delta^2), the slope of L* in the linear segment.
inline constexpr double kKappa = 24389.0 / 27.0;

inline double lab_f_inv(double t) {
    return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

// Linear sRGB -> XYZ (D65). The published Y row sums to 1.0000001; it is
// rescaled so that RGB white lands exactly on the reference white below.
inline Mat3 make_rgb_to_xyz() {
    Mat3 m{{{0.4124564, 0.3575761, 0.1804375},
            {0.2126729, 0.7151522, 0.0721750},
            {0.0193339, 0.1191920, 0.9503041}}};
    const Vec3 white{kWhiteX, kWhiteY, kWhiteZ};
    for (int r = 0; r < 3; ++r) {
        const double s = m[r][0] + m[r][1] + m[r][2];
        for (int c = 0; c < 3; ++c) m[r][c] *= white[r] / s;
    }
    return m;
}

inline Mat3 invert(const Mat3& m) {
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    Mat3 inv{};
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return inv;
}

inline const Mat3& rgb_to_xyz_matrix() {
    static const Mat3 m = make_rgb_to_xyz();
    return m;
}

inline const Mat3& xyz_to_rgb_matrix() {
    static const Mat3 m = invert(rgb_to_xyz_matrix());
    return m;
}

inline Vec3 apply(const Mat3& m, const Vec3& v) {
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

}  // namespace detail

// One sRGB triple in [0,1] to (L*, a*, b*).
inline Vec3 srgb_to_lab(const Vec3& rgb) {
    const Vec3 lin{detail::srgb_decode(rgb[0]), detail::srgb_decode(rgb[1]), detail::srgb_decode(rgb[2])};
    const Vec3 xyz = detail::apply(detail::rgb_to_xyz_matrix(), lin);
    const double fx = detail::lab_f(xyz[0] / kWhiteX);
    const double fy = detail::lab_f(xyz[1] / kWhiteY);
    const double fz = detail::lab_f(xyz[2] / kWhiteZ);
    const double yr = xyz[1] / kWhiteY;
    const double L = yr > detail::kDelta3 ? 116.0 * fy - 16.0 : detail::kKappa * yr;
    return {L, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

// Inverse of srgb_to_lab without gamut clamping; components may leave [0,1].
inline Vec3 lab_to_srgb_unclamped(const Vec3& lab) {
    const double fy = (lab[0] + 16.0) / 116.0;
    const double fx = fy + lab[1] / 500.0;
    const double fz = fy - lab[2] / 200.0;
    const Vec3 xyz{kWhiteX * detail::lab_f_inv(fx), kWhiteY * detail::lab_f_inv(fy),
                   kWhiteZ * detail::lab_f_inv(fz)};
    const Vec3 lin = detail::apply(detail::xyz_to_rgb_matrix(), xyz);
    return {detail::srgb_encode(lin[0]), detail::srgb_encode(lin[1]), detail::srgb_encode(lin[2])};
}

inline Vec3 lab_to_srgb(const Vec3& lab) {
    Vec3 rgb = lab_to_srgb_unclamped(lab);
    for (double& c : rgb) c = std::clamp(c, 0.0, 1.0);
    return rgb;
}

inline ImageLAB rgb_to_lab(const ImageRGB& img) {
    ImageLAB out(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels(); ++i) {
        const Vec3 lab = srgb_to_lab({img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]});
        std::copy(lab.begin(), lab.end(), out.data.begin() + 3 * i);
    }
    return out;
}

inline ImageRGB lab_to_rgb(const ImageLAB& img) {
    ImageRGB out(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels(); ++i) {
        const Vec3 rgb = lab_to_srgb({img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]});
        std::copy(rgb.begin(), rgb.end(), out.data.begin() + 3 * i);
    }
    return out;
}

struct ChannelStats {
    Vec3 mean{};
    Vec3 std{};  // population (divide by N)
};

inline ChannelStats channel_stats(const ImageLAB& img) {
    if (img.empty()) throw std::invalid_argument("channel_stats: empty image");
    const double n = static_cast<double>(img.pixels());
    ChannelStats s;
    for (std::size_t i = 0; i < img.pixels(); ++i)
        for (int c = 0; c < 3; ++c) s.mean[c] += img.data[3 * i + c];
    for (double& m : s.mean) m /= n;
    Vec3 var{};
    for (std::size_t i = 0; i < img.pixels(); ++i)
        for (int c = 0; c < 3; ++c) {
            const double d = img.data[3 * i + c] - s.mean[c];
            var[c] += d * d;
        }
    for (int c = 0; c < 3; ++c) s.std[c] = std::sqrt(var[c] / n);
    return s;
}

// Re-express `lab` with the statistics of `target`: standardize each channel
// by `source` (std clamped at kStdEpsilon), then scale and shift by `target`.
inline ImageLAB transfer_stats(const ImageLAB& lab, const ChannelStats& source, const ChannelStats& target) {
    ImageLAB out = lab;
    for (std::size_t i = 0; i < lab.pixels(); ++i)
        for (int c = 0; c < 3; ++c) {
            const double z = (lab.data[3 * i + c] - source.mean[c]) / std::max(source.std[c], kStdEpsilon);
            out.data[3 * i + c] = z * target.std[c] + target.mean[c];
        }
    return out;
}

// Swaps the LAB channel statistics of two images. Each output keeps its own
// content and takes the other's color distribution.
inline std::pair<ImageRGB, ImageRGB> color_exchange(const ImageRGB& img1, const ImageRGB& img2) {
    if (img1.empty() || img2.empty()) throw std::invalid_argument("color_exchange: empty image");
    const ImageLAB lab1 = rgb_to_lab(img1);
    const ImageLAB lab2 = rgb_to_lab(img2);
    const ChannelStats s1 = channel_stats(lab1);
    const ChannelStats s2 = channel_stats(lab2);
    return {lab_to_rgb(transfer_stats(lab1, s1, s2)), lab_to_rgb(transfer_stats(lab2, s2, s1))};
}

}  // namespace sanet::color
