#pragma once

// Mini-batch SGD over an image/mask dataset, plus the inference wrapper that
// turns a trained model into a per-image logit predictor.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "sanet/dataio.hpp"
#include "sanet/network.hpp"
#include "sanet/pcs.hpp"
#include "sanet/random.hpp"

namespace sanet {

enum class LrSchedule { Constant, Cosine };

struct TrainConfig {
    NetworkConfig network;
    data::AugmentConfig augment;
    double lr = 0.04;
    double momentum = 0.9;
    LrSchedule schedule = LrSchedule::Cosine;
    std::size_t warmup_steps = 50;
    std::size_t steps = 800;
    std::size_t batch = 8;
    double max_grad_norm = 5.0;  // 0 disables clipping
    LossWeights loss;
    std::uint64_t seed = 0;

    std::vector<std::string> validate() const {
        auto errs = network.validate();
        for (auto& e : augment.validate()) errs.push_back(std::move(e));
        if (!(lr > 0) || !std::isfinite(lr)) errs.push_back("lr must be positive");
        if (!(momentum >= 0 && momentum < 1)) errs.push_back("momentum must lie in [0,1)");
        if (steps == 0) errs.push_back("steps must be positive");
        if (batch == 0) errs.push_back("batch must be positive");
        if (!(max_grad_norm >= 0) || !std::isfinite(max_grad_norm)) errs.push_back("max_grad_norm must be non-negative");
        if (loss.bce < 0 || loss.dice < 0) errs.push_back("loss weights must be non-negative");
        return errs;
    }
};

// Linear warmup, then constant or cosine decay to zero.
inline double learning_rate(const TrainConfig& c, std::size_t step) {
    if (step < c.warmup_steps) return c.lr * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
    if (c.schedule == LrSchedule::Constant) return c.lr;
    const double span = static_cast<double>(std::max<std::size_t>(1, c.steps - std::min(c.steps, c.warmup_steps)));
    const double t = static_cast<double>(step - c.warmup_steps) / span;
    return 0.5 * c.lr * (1.0 + std::cos(std::numbers::pi * std::min(1.0, t)));
}

inline constexpr double kInputMean = 0.5;
inline constexpr double kInputScale = 4.0;  // (v - 0.5) * 4

template <class T>
void write_image(const ImageRGB& img, Tensor<T>& dst, std::size_t n) {
    const std::size_t hw = img.pixels();
    T* base = dst.data.data() + n * 3 * hw;
    for (std::size_t i = 0; i < hw; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            base[c * hw + i] = static_cast<T>((img.data[3 * i + c] - kInputMean) * kInputScale);
}

// Stacks equally sized samples into network tensors.
template <class T>
Batch<T> make_batch(const std::vector<data::Sample>& samples) {
    const std::size_t h = samples.front().image.height, w = samples.front().image.width;
    Batch<T> b{Tensor<T>({samples.size(), 3, h, w}), Tensor<T>({samples.size(), 1, h, w})};
    for (std::size_t n = 0; n < samples.size(); ++n) {
        const auto& s = samples[n];
        if (s.image.height != h || s.image.width != w || s.mask.height != h || s.mask.width != w)
            throw ShapeMismatch("make_batch: samples differ in size");
        write_image(s.image, b.images, n);
        for (std::size_t i = 0; i < h * w; ++i) b.masks.data[n * h * w + i] = static_cast<T>(s.mask.data[i]);
    }
    return b;
}

// Deterministic batch stream: per-epoch shuffles, one scale per batch, and a
// private RNG per (step, slot) for augmentation and color-exchange partners.
class BatchSampler {
public:
    BatchSampler(const data::Dataset& ds, const TrainConfig& cfg) : ds_(ds), cfg_(cfg) {
        if (ds_.empty()) throw std::invalid_argument("training dataset is empty");
    }

    std::vector<data::Sample> batch(std::size_t step) {
        const std::size_t n = ds_.size();
        data::AugmentConfig aug = cfg_.augment;
        Rng scale_rng(derive_seed(cfg_.seed, step, 0x5ca1e));
        aug.scales = {aug.scales[scale_rng.index(aug.scales.size())]};
        aug.size_multiple = cfg_.network.reduction();

        std::vector<data::Sample> out;
        out.reserve(cfg_.batch);
        for (std::size_t j = 0; j < cfg_.batch; ++j) {
            const std::size_t pos = step * cfg_.batch + j;
            const std::size_t idx = order(pos / n)[pos % n];
            Rng rng(derive_seed(cfg_.seed, step, j + 1));
            const data::Sample* partner = nullptr;
            if (aug.color_exchange) partner = &ds_[rng.index(n)];
            out.push_back(data::augment(ds_[idx], partner, aug, rng));
        }
        return out;
    }

private:
    const std::vector<std::size_t>& order(std::size_t epoch) {
        if (epoch != epoch_ || perm_.empty()) {
            perm_.resize(ds_.size());
            std::iota(perm_.begin(), perm_.end(), std::size_t{0});
            Rng rng(derive_seed(cfg_.seed, epoch, 0xe90c));
            for (std::size_t i = perm_.size(); i > 1; --i) std::swap(perm_[i - 1], perm_[rng.index(i)]);
            epoch_ = epoch;
        }
        return perm_;
    }

    const data::Dataset& ds_;
    const TrainConfig& cfg_;
    std::vector<std::size_t> perm_;
    std::size_t epoch_ = 0;
};

inline data::Dataset resize_all(const data::Dataset& ds, std::size_t size) {
    data::Dataset out;
    out.reserve(ds.size());
    for (const auto& s : ds) out.push_back(data::resize(s, size, size));
    return out;
}

struct StepLog {
    std::size_t step;
    double lr;
    double loss;
};

// Runs cfg.steps updates from a fresh initialization. `on_step` sees every
// logged step; a non-finite loss throws NonFiniteLoss.
template <class T>
Model<T> train(const TrainConfig& cfg, const data::Dataset& train_set,
               const std::function<void(const StepLog&)>& on_step = {}) {
    if (auto errs = cfg.validate(); !errs.empty()) throw std::invalid_argument("TrainConfig: " + errs.front());
    NetworkConfig net = cfg.network;
    Model<T> model = init_model<T>(net);
    const data::Dataset ds = resize_all(train_set, net.input_size);
    BatchSampler sampler(ds, cfg);
    Sgd<T> opt(cfg.momentum);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const Batch<T> b = make_batch<T>(sampler.batch(step));
        const double lr = learning_rate(cfg, step);
        double loss = 0;
        try {
            loss = train_step(model, opt, b, lr, cfg.loss, cfg.max_grad_norm);
        } catch (const NonFiniteLoss& e) {
            throw NonFiniteLoss(std::string(e.what()) + " at step " + std::to_string(step));
        }
        if (on_step) on_step({step, lr, loss});
    }
    return model;
}

// Bilinear resampling of a single-channel map (half-pixel centers).
inline std::vector<double> resize_plane(const std::vector<double>& src, std::size_t w, std::size_t h,
                                        std::size_t out_w, std::size_t out_h) {
    if (w == out_w && h == out_h) return src;
    std::vector<double> out(out_w * out_h);
    auto coord = [](std::size_t i, std::size_t in, std::size_t n) {
        const double s = std::max(0.0, (i + 0.5) * static_cast<double>(in) / static_cast<double>(n) - 0.5);
        const std::size_t i0 = std::min(static_cast<std::size_t>(s), in - 1);
        return std::tuple{i0, std::min(i0 + 1, in - 1), s - static_cast<double>(i0)};
    };
    for (std::size_t y = 0; y < out_h; ++y) {
        const auto [y0, y1, fy] = coord(y, h, out_h);
        for (std::size_t x = 0; x < out_w; ++x) {
            const auto [x0, x1, fx] = coord(x, w, out_w);
            out[y * out_w + x] = (1 - fy) * ((1 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1]) +
                                 fy * ((1 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1]);
        }
    }
    return out;
}

// Logits at the image's own resolution: the image is resized to the network
// input size, and the logit map is resized back.
template <class T>
pcs::LogitMap predict(const Model<T>& model, const ImageRGB& img) {
    const std::size_t s = model.config.input_size;
    const ImageRGB in = data::resize_image(img, s, s);
    Tensor<T> x({1, 3, s, s});
    write_image(in, x, 0);
    const Tensor<T> y = predict_logits(model, x);
    std::vector<double> logits(y.data.begin(), y.data.end());
    return pcs::LogitMap(img.width, img.height, resize_plane(logits, s, s, img.width, img.height));
}

}  // namespace sanet
