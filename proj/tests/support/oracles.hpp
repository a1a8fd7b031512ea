#pragma once

// Reference implementations used as test oracles. They are written
// independently of the library code paths they check: plain loops, textbook
// constants, no shared helpers.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sanet/gradcore.hpp"
#include "sanet/image.hpp"

namespace oracle {

// Direct six-loop cross-correlation, N x C x H x W input, O x C x K x K weights.
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t n, std::size_t c, std::size_t h,
                                  std::size_t w, const std::vector<double>& wt, const std::vector<double>& bias,
                                  std::size_t o, std::size_t k, std::size_t stride, std::size_t pad,
                                  std::size_t& oh, std::size_t& ow) {
    oh = (h + 2 * pad - k) / stride + 1;
    ow = (w + 2 * pad - k) / stride + 1;
    std::vector<double> y(n * o * oh * ow, 0.0);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t oc = 0; oc < o; ++oc)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double acc = bias[oc];
                    for (std::size_t ic = 0; ic < c; ++ic)
                        for (std::size_t ki = 0; ki < k; ++ki)
                            for (std::size_t kj = 0; kj < k; ++kj) {
                                const long yi = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                                const long xj = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                                if (yi < 0 || xj < 0 || yi >= static_cast<long>(h) || xj >= static_cast<long>(w))
                                    continue;
                                acc += x[((b * c + ic) * h + yi) * w + xj] * wt[((oc * c + ic) * k + ki) * k + kj];
                            }
                    y[((b * o + oc) * oh + i) * ow + j] = acc;
                }
    return y;
}

// sRGB -> CIE L*a*b* (D65) with the published IEC matrix. X/Xn, Y/Yn, Z/Zn
// are taken relative to the matrix image of RGB white, so white lands on the
// origin of a*b* exactly.
inline std::array<double, 3> srgb_to_lab(double r, double g, double b) {
    auto lin = [](double u) { return u <= 0.04045 ? u / 12.92 : std::pow((u + 0.055) / 1.055, 2.4); };
    const double R = lin(r), G = lin(g), B = lin(b);
    const double M[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                            {0.2126729, 0.7151522, 0.0721750},
                            {0.0193339, 0.1191920, 0.9503041}};
    double xyz[3], white[3];
    for (int i = 0; i < 3; ++i) {
        xyz[i] = M[i][0] * R + M[i][1] * G + M[i][2] * B;
        white[i] = M[i][0] + M[i][1] + M[i][2];
    }
    auto f = [](double t) {
        const double d = 6.0 / 29.0;
        return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
    };
    double ft[3];
    for (int i = 0; i < 3; ++i) ft[i] = f(xyz[i] / white[i]);
    return {116 * ft[1] - 16, 500 * (ft[0] - ft[1]), 200 * (ft[1] - ft[2])};
}

struct Stats {
    double mean[3] = {0, 0, 0};
    double sd[3] = {0, 0, 0};
};

inline Stats lab_stats(const std::vector<std::array<double, 3>>& px) {
    Stats s;
    for (const auto& p : px)
        for (int c = 0; c < 3; ++c) s.mean[c] += p[c];
    for (double& m : s.mean) m /= static_cast<double>(px.size());
    for (const auto& p : px)
        for (int c = 0; c < 3; ++c) s.sd[c] += (p[c] - s.mean[c]) * (p[c] - s.mean[c]);
    for (double& v : s.sd) v = std::sqrt(v / static_cast<double>(px.size()));
    return s;
}

inline Stats image_lab_stats(const sanet::ImageRGB& img) {
    std::vector<std::array<double, 3>> px;
    for (std::size_t i = 0; i < img.pixels(); ++i)
        px.push_back(srgb_to_lab(img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]));
    return lab_stats(px);
}

// Hard Dice by direct counting, pred = prob > t.
inline double dice_at(const std::vector<double>& prob, const std::vector<std::uint8_t>& gt, double t) {
    long tp = 0, p = 0, g = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const bool on = prob[i] > t;
        tp += on && gt[i];
        p += on;
        g += gt[i];
    }
    return p + g == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(p + g);
}

inline sanet::ImageRGB random_image(std::mt19937_64& gen, std::size_t w, std::size_t h, double lo = 0.0,
                                    double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    sanet::ImageRGB img(w, h);
    for (double& v : img.data) v = u(gen);
    return img;
}

inline sanet::grad::Tensor<double> random_tensor(std::mt19937_64& gen, sanet::grad::Shape s, double lo = -1.0,
                                                 double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    sanet::grad::Tensor<double> t(std::move(s));
    for (double& v : t.data) v = u(gen);
    return t;
}

// Values bounded away from zero so relu/clamp kinks stay outside +-h.
inline sanet::grad::Tensor<double> random_tensor_off_zero(std::mt19937_64& gen, sanet::grad::Shape s,
                                                          double margin = 1e-3) {
    auto t = random_tensor(gen, std::move(s));
    for (double& v : t.data)
        if (std::abs(v) < margin) v = v < 0 ? -margin - 0.1 : margin + 0.1;
    return t;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("sanet_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace oracle
