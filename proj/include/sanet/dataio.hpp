#pragma once

// Image/mask datasets: directory loading, resizing, geometric and color
// augmentation, and a synthetic blob generator standing in for polyp data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <tuple>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sanet/colorimetry.hpp"
#include "sanet/image.hpp"
#include "sanet/png_io.hpp"
#include "sanet/random.hpp"

namespace sanet::data {

namespace fs = std::filesystem;

struct Sample {
    ImageRGB image;
    Mask mask;
    std::string id;
};

using Dataset = std::vector<Sample>;

class DataError : public std::runtime_error {
public:
    explicit DataError(std::vector<std::string> items)
        : std::runtime_error(join(items)), items_(std::move(items)) {}
    const std::vector<std::string>& items() const { return items_; }

private:
    static std::string join(const std::vector<std::string>& items) {
        std::string s;
        for (const auto& i : items) s += (s.empty() ? "" : "; ") + i;
        return s;
    }
    std::vector<std::string> items_;
};

struct LoadResult {
    Dataset samples;
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
};

// Reads root/images/*.png and root/masks/*.png paired by file name, in
// sorted order. Problems are collected per item; with `strict` any problem
// rejects the whole load.
inline LoadResult load_dataset(const fs::path& root, bool strict = true) {
    LoadResult out;
    const fs::path img_dir = root / "images", mask_dir = root / "masks";
    if (!fs::is_directory(img_dir) || !fs::is_directory(mask_dir)) {
        out.errors.push_back(root.string() + ": expected images/ and masks/ subdirectories");
        if (strict) throw DataError(out.errors);
        return out;
    }
    auto list_png = [](const fs::path& dir) {
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().filename().string());
        std::sort(names.begin(), names.end());
        return names;
    };
    const auto images = list_png(img_dir);
    const auto masks = list_png(mask_dir);
    for (const auto& m : masks)
        if (!std::binary_search(images.begin(), images.end(), m)) out.errors.push_back(m + ": mask without image");

    for (const auto& name : images) {
        if (!std::binary_search(masks.begin(), masks.end(), name)) {
            out.errors.push_back(name + ": image without mask");
            continue;
        }
        try {
            Sample s{png::read_rgb(img_dir / name), png::read_mask(mask_dir / name), fs::path(name).stem().string()};
            if (s.image.width != s.mask.width || s.image.height != s.mask.height) {
                out.errors.push_back(name + ": image " + std::to_string(s.image.width) + "x" +
                                     std::to_string(s.image.height) + " but mask " + std::to_string(s.mask.width) +
                                     "x" + std::to_string(s.mask.height));
                continue;
            }
            out.samples.push_back(std::move(s));
        } catch (const png::PngError& e) {
            out.errors.push_back(name + ": " + e.what());
        }
    }
    if (images.empty() && masks.empty()) out.warnings.push_back(root.string() + ": dataset is empty");
    if (strict && !out.errors.empty()) throw DataError(out.errors);
    return out;
}

inline void write_dataset(const fs::path& root, const Dataset& ds) {
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    for (const auto& s : ds) {
        png::write_rgb(root / "images" / (s.id + ".png"), s.image);
        png::write_mask(root / "masks" / (s.id + ".png"), s.mask);
    }
}

// ---------------------------------------------------------------------------
// Resampling

// Bilinear, half-pixel centers, edge clamped.
inline ImageRGB resize_image(const ImageRGB& img, std::size_t h, std::size_t w) {
    if (h == 0 || w == 0) throw std::invalid_argument("resize: zero target size");
    if (h == img.height && w == img.width) return img;
    ImageRGB out(w, h);
    auto coord = [](std::size_t i, std::size_t in, std::size_t outn) {
        const double s = std::max(0.0, (i + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5);
        const std::size_t i0 = std::min(static_cast<std::size_t>(s), in - 1);
        return std::tuple{i0, std::min(i0 + 1, in - 1), s - static_cast<double>(i0)};
    };
    for (std::size_t y = 0; y < h; ++y) {
        const auto [y0, y1, fy] = coord(y, img.height, h);
        for (std::size_t x = 0; x < w; ++x) {
            const auto [x0, x1, fx] = coord(x, img.width, w);
            for (std::size_t c = 0; c < 3; ++c)
                out.at(y, x, c) = (1 - fy) * ((1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c)) +
                                  fy * ((1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c));
        }
    }
    return out;
}

// Nearest neighbour, so the result stays binary.
inline Mask resize_mask(const Mask& m, std::size_t h, std::size_t w) {
    if (h == 0 || w == 0) throw std::invalid_argument("resize: zero target size");
    if (h == m.height && w == m.width) return m;
    Mask out(w, h);
    for (std::size_t y = 0; y < h; ++y) {
        const auto sy = std::min(static_cast<std::size_t>((y + 0.5) * m.height / h), m.height - 1);
        for (std::size_t x = 0; x < w; ++x) {
            const auto sx = std::min(static_cast<std::size_t>((x + 0.5) * m.width / w), m.width - 1);
            out.at(y, x) = m.at(sy, sx);
        }
    }
    return out;
}

inline Sample resize(const Sample& s, std::size_t h, std::size_t w) {
    return {resize_image(s.image, h, w), resize_mask(s.mask, h, w), s.id};
}

// ---------------------------------------------------------------------------
// Geometric transforms shared by image and mask

inline void copy_pixel(const ImageRGB& s, std::size_t sy, std::size_t sx, ImageRGB& d, std::size_t dy, std::size_t dx) {
    for (std::size_t c = 0; c < 3; ++c) d.at(dy, dx, c) = s.at(sy, sx, c);
}
inline void copy_pixel(const Mask& s, std::size_t sy, std::size_t sx, Mask& d, std::size_t dy, std::size_t dx) {
    d.at(dy, dx) = s.at(sy, sx);
}

template <class Img>
Img flip_horizontal(const Img& src) {
    Img out = src;
    for (std::size_t y = 0; y < src.height; ++y)
        for (std::size_t x = 0; x < src.width; ++x) copy_pixel(src, y, src.width - 1 - x, out, y, x);
    return out;
}

template <class Img>
Img flip_vertical(const Img& src) {
    Img out = src;
    for (std::size_t y = 0; y < src.height; ++y)
        for (std::size_t x = 0; x < src.width; ++x) copy_pixel(src, src.height - 1 - y, x, out, y, x);
    return out;
}

// Counter-clockwise rotation by quarter turns.
template <class Img>
Img rotate90(const Img& src, int quarter_turns) {
    const int q = ((quarter_turns % 4) + 4) % 4;
    if (q == 0) return src;
    Img out = src;
    if (q != 2) std::swap(out.width, out.height);
    for (std::size_t y = 0; y < out.height; ++y)
        for (std::size_t x = 0; x < out.width; ++x) {
            std::size_t sy, sx;
            if (q == 1) {  // out(y,x) = src(x, W-1-y)
                sy = x;
                sx = src.width - 1 - y;
            } else if (q == 2) {
                sy = src.height - 1 - y;
                sx = src.width - 1 - x;
            } else {
                sy = src.height - 1 - x;
                sx = y;
            }
            copy_pixel(src, sy, sx, out, y, x);
        }
    return out;
}

struct AugmentConfig {
    double flip_prob = 0.5;     // applied independently to each axis
    double rotate_prob = 0.5;   // chance of drawing an angle from `angles`
    std::vector<int> angles{0, 90, 180, 270};
    std::vector<double> scales{0.75, 1.0, 1.25};
    bool color_exchange = false;
    std::uint64_t seed = 0;
    // Scaled extents are rounded to a multiple of this (the network's
    // downsampling factor during training).
    std::size_t size_multiple = 1;

    std::vector<std::string> validate() const {
        std::vector<std::string> errs;
        if (!(flip_prob >= 0 && flip_prob <= 1)) errs.push_back("flip_prob must lie in [0,1]");
        if (!(rotate_prob >= 0 && rotate_prob <= 1)) errs.push_back("rotate_prob must lie in [0,1]");
        for (int a : angles)
            if (a % 90 != 0) errs.push_back("rotation angles must be multiples of 90, got " + std::to_string(a));
        if (scales.empty()) errs.push_back("scales must not be empty");
        for (double s : scales)
            if (!(s > 0)) errs.push_back("scales must be positive");
        if (size_multiple == 0) errs.push_back("size_multiple must be positive");
        return errs;
    }
};

inline std::size_t scaled_extent(std::size_t n, double s, std::size_t multiple) {
    const double units = std::round(static_cast<double>(n) * s / static_cast<double>(multiple));
    return std::max<std::size_t>(1, static_cast<std::size_t>(units)) * multiple;
}

// Color exchange with `partner` (first output only; the mask is untouched),
// then horizontal/vertical flips, a right-angle rotation, and rescaling to
// one of the configured multipliers. The result depends only on the inputs
// and the state of `rng`.
inline Sample augment(const Sample& sample, const Sample* partner, const AugmentConfig& cfg, Rng& rng) {
    Sample out = sample;
    if (cfg.color_exchange && partner) out.image = color::color_exchange(sample.image, partner->image).first;

    if (rng.bernoulli(cfg.flip_prob)) {
        out.image = flip_horizontal(out.image);
        out.mask = flip_horizontal(out.mask);
    }
    if (rng.bernoulli(cfg.flip_prob)) {
        out.image = flip_vertical(out.image);
        out.mask = flip_vertical(out.mask);
    }
    if (rng.bernoulli(cfg.rotate_prob) && !cfg.angles.empty()) {
        const int turns = cfg.angles[rng.index(cfg.angles.size())] / 90;
        out.image = rotate90(out.image, turns);
        out.mask = rotate90(out.mask, turns);
    }
    const double s = cfg.scales.size() == 1 ? cfg.scales[0] : cfg.scales[rng.index(cfg.scales.size())];
    const std::size_t h = scaled_extent(out.image.height, s, cfg.size_multiple);
    const std::size_t w = scaled_extent(out.image.width, s, cfg.size_multiple);
    return resize(out, h, w);
}

// ---------------------------------------------------------------------------
// Synthetic blobs

// Plain: per-image random palette, blob darker and redder than the tissue.
// ConfoundTrain: two acquisition palettes, each tied to its own blob
// contrast (dark blob on light tissue vs light blob on dark bluish tissue).
// ConfoundTest: the same contrasts rendered in the other palette, so color
// no longer predicts which region is the target.
enum class ColorMode { Plain, ConfoundTrain, ConfoundTest };

inline const char* to_string(ColorMode m) {
    switch (m) {
        case ColorMode::Plain: return "plain";
        case ColorMode::ConfoundTrain: return "confound-train";
        case ColorMode::ConfoundTest: return "confound-test";
    }
    return "?";
}

inline ColorMode parse_color_mode(const std::string& s) {
    if (s == "plain") return ColorMode::Plain;
    if (s == "confound-train") return ColorMode::ConfoundTrain;
    if (s == "confound-test") return ColorMode::ConfoundTest;
    throw std::invalid_argument("color mode must be plain, confound-train or confound-test, got '" + s + "'");
}

struct SynthConfig {
    std::size_t count = 0;
    std::size_t height = 64;
    std::size_t width = 64;
    double min_area = 0.01;  // blob area as a fraction of the image
    double max_area = 0.15;
    std::uint64_t seed = 0;
    ColorMode color_mode = ColorMode::Plain;
    std::string id_prefix = "blob";

    std::vector<std::string> validate() const {
        std::vector<std::string> errs;
        if (!(min_area > 0 && min_area < max_area && max_area < 1))
            errs.push_back("area range must satisfy 0 < min_area < max_area < 1");
        if (height < 8 || width < 8) errs.push_back("synthetic images must be at least 8x8");
        return errs;
    }
};

namespace detail {

struct Palette {
    color::Vec3 tissue;  // L*, a*, b*
    color::Vec3 offset;  // blob minus tissue
};

inline Palette plain_palette(Rng& rng) {
    return {{rng.uniform(50, 75), rng.uniform(8, 28), rng.uniform(5, 25)},
            {rng.uniform(-22, -10), rng.uniform(8, 20), rng.uniform(-4, 8)}};
}

inline color::Vec3 confound_tissue(int mode, Rng& rng) {
    return mode == 0 ? color::Vec3{rng.uniform(62, 72), rng.uniform(14, 24), rng.uniform(8, 16)}
                     : color::Vec3{rng.uniform(38, 48), rng.uniform(-14, -6), rng.uniform(-26, -16)};
}

inline color::Vec3 confound_offset(int mode, Rng& rng) {
    return mode == 0 ? color::Vec3{rng.uniform(-22, -14), rng.uniform(6, 12), rng.uniform(-3, 3)}
                     : color::Vec3{rng.uniform(14, 22), rng.uniform(-3, 3), rng.uniform(6, 12)};
}

// Low-frequency tissue texture: a few random plane waves.
struct Waves {
    struct Wave {
        double kx, ky, phase, amp;
    };
    std::vector<Wave> waves;

    explicit Waves(Rng& rng, int n = 3) {
        for (int i = 0; i < n; ++i) {
            const double theta = rng.uniform(0, 2 * std::numbers::pi);
            const double freq = rng.uniform(0.08, 0.35);
            waves.push_back({freq * std::cos(theta), freq * std::sin(theta), rng.uniform(0, 2 * std::numbers::pi),
                             rng.uniform(0.5, 1.0)});
        }
    }
    double operator()(double y, double x) const {
        double v = 0;
        for (const auto& w : waves) v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
        return v / static_cast<double>(waves.size());
    }
};

}  // namespace detail

// One elliptical blob per image; the mask is the blob support and its area
// fraction always lies within [min_area, max_area].
inline Dataset synth_blobs(const SynthConfig& cfg) {
    if (auto errs = cfg.validate(); !errs.empty()) throw std::invalid_argument("synth_blobs: " + errs.front());
    Dataset ds;
    ds.reserve(cfg.count);
    const double H = static_cast<double>(cfg.height), W = static_cast<double>(cfg.width);
    const std::size_t digits = std::to_string(cfg.count).size();
    for (std::size_t n = 0; n < cfg.count; ++n) {
        Rng rng(derive_seed(cfg.seed, n, 0xb10b));

        detail::Palette pal;
        if (cfg.color_mode == ColorMode::Plain) {
            pal = detail::plain_palette(rng);
        } else {
            const int content = static_cast<int>(rng.index(2));
            const int colors = cfg.color_mode == ColorMode::ConfoundTrain ? content : 1 - content;
            pal.tissue = detail::confound_tissue(colors, rng);
            pal.offset = detail::confound_offset(content, rng);
        }

        // Rasterized area must land inside the requested range; redraw the
        // geometry until it does.
        Mask mask(cfg.width, cfg.height);
        double cy = 0, cx = 0, ra = 1, rb = 1, ct = 1, st = 0;
        for (int attempt = 0;; ++attempt) {
            // log-uniform: most blobs are small, as in clinical polyp sets
            const double area = std::exp(rng.uniform(std::log(cfg.min_area), std::log(cfg.max_area))) * H * W;
            const double aspect = rng.uniform(0.55, 1.0);
            ra = std::sqrt(area / (std::numbers::pi * aspect));
            rb = ra * aspect;
            const double theta = rng.uniform(0, std::numbers::pi);
            ct = std::cos(theta);
            st = std::sin(theta);
            const double margin = ra + 1.0;
            cy = margin < H - margin ? rng.uniform(margin, H - margin) : H / 2;
            cx = margin < W - margin ? rng.uniform(margin, W - margin) : W / 2;
            for (std::size_t y = 0; y < cfg.height; ++y)
                for (std::size_t x = 0; x < cfg.width; ++x) {
                    const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
                    const double u = (dx * ct + dy * st) / ra, v = (-dx * st + dy * ct) / rb;
                    mask.at(y, x) = u * u + v * v <= 1.0 ? 1 : 0;
                }
            const double frac = static_cast<double>(mask.count()) / (H * W);
            if (frac >= cfg.min_area && frac <= cfg.max_area) break;
            if (attempt > 1000) throw std::runtime_error("synth_blobs: cannot realize the requested area range");
        }

        const detail::Waves tissue_tex(rng), blob_tex(rng);
        ImageLAB lab(cfg.width, cfg.height);
        for (std::size_t y = 0; y < cfg.height; ++y)
            for (std::size_t x = 0; x < cfg.width; ++x) {
                const double yy = y + 0.5, xx = x + 0.5;
                const double t = tissue_tex(yy, xx);
                color::Vec3 c{pal.tissue[0] + 7.0 * t + rng.normal(0, 2.0), pal.tissue[1] + 3.0 * t + rng.normal(0, 1.5),
                              pal.tissue[2] + 2.0 * t + rng.normal(0, 1.5)};
                if (mask.at(y, x)) {
                    const double dy = yy - cy, dx = xx - cx;
                    const double u = (dx * ct + dy * st) / ra, v = (-dx * st + dy * ct) / rb;
                    const double dome = 1.0 - std::min(1.0, u * u + v * v);
                    const double shade = 0.6 + 0.4 * dome;
                    const double bt = blob_tex(yy, xx);
                    for (int k = 0; k < 3; ++k) c[k] += pal.offset[k] * shade;
                    c[0] += 4.0 * bt;
                }
                for (int k = 0; k < 3; ++k) lab.at(y, x, k) = c[k];
            }
        std::string id = std::to_string(n);
        id = cfg.id_prefix + "_" + std::string(digits - std::min(digits, id.size()), '0') + id;
        ds.push_back({color::lab_to_rgb(lab), std::move(mask), std::move(id)});
    }
    return ds;
}

inline nlohmann::json to_json(const SynthConfig& c) {
    return {{"count", c.count},       {"height", c.height},     {"width", c.width},
            {"min_area", c.min_area}, {"max_area", c.max_area}, {"seed", c.seed},
            {"color_mode", to_string(c.color_mode)}, {"id_prefix", c.id_prefix}};
}

// Writes images/, masks/ and meta.json describing the generator parameters.
inline void write_synthetic(const fs::path& root, const SynthConfig& cfg, const Dataset& ds) {
    write_dataset(root, ds);
    nlohmann::json meta = to_json(cfg);
    meta["generator"] = "synth_blobs";
    meta["version"] = 1;
    std::ofstream(root / "meta.json") << meta.dump(2) << '\n';
}

}  // namespace sanet::data
