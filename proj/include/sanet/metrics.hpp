#pragma once

// Overlap metrics and the dataset evaluation report: per-image Dice and IoU,
// their means, Dice-versus-threshold curves and the foreground-size histogram.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sanet/dataio.hpp"
#include "sanet/image.hpp"
#include "sanet/pcs.hpp"

namespace sanet::metrics {

struct Overlap {
    std::size_t intersection = 0;
    std::size_t pred = 0;
    std::size_t gt = 0;
};

inline Overlap overlap(const Mask& pred, const Mask& gt) {
    require_same_size(pred, gt, "overlap");
    Overlap o;
    for (std::size_t i = 0; i < gt.data.size(); ++i) {
        o.intersection += pred.data[i] & gt.data[i];
        o.pred += pred.data[i];
        o.gt += gt.data[i];
    }
    return o;
}

// 2|P n G| / (|P| + |G|); two empty masks score 1.
inline double dice(const Mask& pred, const Mask& gt) {
    const Overlap o = overlap(pred, gt);
    if (o.pred + o.gt == 0) return 1.0;
    return 2.0 * static_cast<double>(o.intersection) / static_cast<double>(o.pred + o.gt);
}

// |P n G| / |P u G|; two empty masks score 1.
inline double iou(const Mask& pred, const Mask& gt) {
    const Overlap o = overlap(pred, gt);
    const std::size_t uni = o.pred + o.gt - o.intersection;
    if (uni == 0) return 1.0;
    return static_cast<double>(o.intersection) / static_cast<double>(uni);
}

// Foreground where value > threshold (strict).
inline Mask binarize(const std::vector<double>& values, std::size_t width, std::size_t height, double threshold) {
    if (values.size() != width * height) throw ShapeError("binarize: value count does not match extent");
    Mask m(width, height);
    for (std::size_t i = 0; i < values.size(); ++i) m.data[i] = values[i] > threshold ? 1 : 0;
    return m;
}

// 0.00, 0.01, ..., 0.99
inline std::vector<double> default_thresholds() {
    std::vector<double> t(100);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) / 100.0;
    return t;
}

using Curve = std::vector<std::pair<double, double>>;

inline Curve dice_curve(const std::vector<double>& prob, const Mask& gt,
                        const std::vector<double>& thresholds = default_thresholds()) {
    if (prob.size() != gt.pixels()) throw ShapeError("dice_curve: probability map and mask sizes differ");
    Curve c;
    c.reserve(thresholds.size());
    for (double t : thresholds) c.emplace_back(t, dice(binarize(prob, gt.width, gt.height, t), gt));
    return c;
}

// Soft Dice on probabilities, 2 sum(pg) / (sum(p) + sum(g)); 1 when both vanish.
inline double soft_dice(const std::vector<double>& prob, const Mask& gt) {
    if (prob.size() != gt.pixels()) throw ShapeError("soft_dice: probability map and mask sizes differ");
    double inter = 0, total = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        inter += prob[i] * gt.data[i];
        total += prob[i] + gt.data[i];
    }
    return total == 0 ? 1.0 : 2.0 * inter / total;
}

inline constexpr std::size_t kHistogramBins = 10;

// Share of images whose foreground fraction falls in each of 10 equal bins
// on [0,1]; the last bin is closed.
inline std::vector<double> size_histogram(const std::vector<Mask>& masks) {
    std::vector<double> hist(kHistogramBins, 0.0);
    if (masks.empty()) return hist;
    for (const Mask& m : masks) {
        const double frac = m.pixels() ? static_cast<double>(m.count()) / static_cast<double>(m.pixels()) : 0.0;
        const auto bin = std::min(kHistogramBins - 1, static_cast<std::size_t>(frac * kHistogramBins));
        hist[bin] += 1.0;
    }
    for (double& h : hist) h /= static_cast<double>(masks.size());
    return hist;
}

inline std::vector<double> size_histogram(const data::Dataset& ds) {
    std::vector<Mask> masks;
    masks.reserve(ds.size());
    for (const auto& s : ds) masks.push_back(s.mask);
    return size_histogram(masks);
}

struct ImageScore {
    std::string id;
    double dice = 0;
    double iou = 0;
    double soft_dice = 0;
    double fg_fraction = 0;
};

struct EvalReport {
    static constexpr int kVersion = 1;

    std::string dataset_id;
    bool pcs = false;
    double threshold = 0.5;
    std::vector<ImageScore> images;
    double mean_dice = 0;
    double mean_iou = 0;
    double mean_soft_dice = 0;
    Curve curve;            // (threshold, mean Dice over images)
    double max_curve_dice = 0;
    std::vector<double> size_histogram;
    std::vector<std::string> errors;
};

// Produces the logit map for one image at the image's own resolution.
using Predictor = std::function<pcs::LogitMap(const ImageRGB&)>;

// Hard masks come from the logit sign (probability > 0.5 exactly when
// logit > 0), which keeps the 0.5 decision independent of sigmoid rounding.
inline EvalReport evaluate(const data::Dataset& ds, const Predictor& predict, bool pcs_on,
                           std::string dataset_id = {}) {
    if (ds.empty()) throw std::invalid_argument("evaluate: empty dataset");
    EvalReport r;
    r.dataset_id = std::move(dataset_id);
    r.pcs = pcs_on;
    const auto thresholds = default_thresholds();
    std::vector<double> curve_sum(thresholds.size(), 0.0);
    std::vector<Mask> masks;

    for (const auto& s : ds) {
        if (s.image.width != s.mask.width || s.image.height != s.mask.height) {
            r.errors.push_back(s.id + ": image and mask sizes differ");
            continue;
        }
        pcs::LogitMap logits = predict(s.image);
        if (logits.width != s.mask.width || logits.height != s.mask.height) {
            r.errors.push_back(s.id + ": prediction size differs from mask");
            continue;
        }
        if (pcs_on) logits = pcs::correct(logits);
        const auto prob = pcs::to_probability(logits);
        const Mask hard = binarize(logits.logits, logits.width, logits.height, 0.0);

        ImageScore sc;
        sc.id = s.id;
        sc.dice = dice(hard, s.mask);
        sc.iou = iou(hard, s.mask);
        sc.soft_dice = soft_dice(prob, s.mask);
        sc.fg_fraction = static_cast<double>(s.mask.count()) / static_cast<double>(s.mask.pixels());
        r.images.push_back(sc);
        masks.push_back(s.mask);

        const Curve c = dice_curve(prob, s.mask, thresholds);
        for (std::size_t k = 0; k < c.size(); ++k) curve_sum[k] += c[k].second;
    }

    const double n = static_cast<double>(r.images.size());
    if (n > 0) {
        for (const auto& sc : r.images) {
            r.mean_dice += sc.dice;
            r.mean_iou += sc.iou;
            r.mean_soft_dice += sc.soft_dice;
        }
        r.mean_dice /= n;
        r.mean_iou /= n;
        r.mean_soft_dice /= n;
        for (std::size_t k = 0; k < thresholds.size(); ++k) {
            r.curve.emplace_back(thresholds[k], curve_sum[k] / n);
            r.max_curve_dice = std::max(r.max_curve_dice, curve_sum[k] / n);
        }
    }
    r.size_histogram = size_histogram(masks);
    return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["version"] = EvalReport::kVersion;
    j["dataset"] = r.dataset_id;
    j["flags"] = {{"pcs", r.pcs}, {"threshold", r.threshold}};
    j["mDice"] = r.mean_dice;
    j["mIoU"] = r.mean_iou;
    j["mSoftDice"] = r.mean_soft_dice;
    j["max_curve_dice"] = r.max_curve_dice;
    nlohmann::json ids = nlohmann::json::array(), d = nlohmann::json::array(), u = nlohmann::json::array(),
                   sd = nlohmann::json::array(), fg = nlohmann::json::array();
    for (const auto& s : r.images) {
        ids.push_back(s.id);
        d.push_back(s.dice);
        u.push_back(s.iou);
        sd.push_back(s.soft_dice);
        fg.push_back(s.fg_fraction);
    }
    j["images"] = {{"id", ids}, {"dice", d}, {"iou", u}, {"soft_dice", sd}, {"fg_fraction", fg}};
    nlohmann::json ct = nlohmann::json::array(), cd = nlohmann::json::array();
    for (const auto& [t, v] : r.curve) {
        ct.push_back(t);
        cd.push_back(v);
    }
    j["curve"] = {{"threshold", ct}, {"dice", cd}};
    j["size_histogram"] = r.size_histogram;
    j["errors"] = r.errors;
    return j;
}

inline std::string format_real(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

// report.json, per_image.csv and curve.csv in `dir`.
inline void write_report(const std::filesystem::path& dir, const EvalReport& r) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "report.json") << to_json(r).dump(2) << '\n';
    std::ofstream img(dir / "per_image.csv");
    img << "id,dice,iou,soft_dice,fg_fraction\n";
    for (const auto& s : r.images)
        img << s.id << ',' << format_real(s.dice) << ',' << format_real(s.iou) << ',' << format_real(s.soft_dice)
            << ',' << format_real(s.fg_fraction) << '\n';
    std::ofstream curve(dir / "curve.csv");
    curve << "threshold,mean_dice\n";
    for (const auto& [t, v] : r.curve) curve << format_real(t) << ',' << format_real(v) << '\n';
}

}  // namespace sanet::metrics
