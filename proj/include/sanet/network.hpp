#pragma once

// Shallow-attention segmentation network at desk scale: a plain strided
// convolutional encoder with one feature block per resolution, shallow
// attention fusion from the deepest block up to the shallowest, and a small
// prediction head. Trained with BCE + soft Dice under SGD with momentum.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sanet/gradcore.hpp"
#include "sanet/random.hpp"

namespace sanet {

using grad::Graph;
using grad::Shape;
using grad::ShapeMismatch;
using grad::Tensor;
using grad::Var;

enum class Attention { Relu, Sigmoid };
enum class Fusion { Sam, None };

inline const char* to_string(Attention a) { return a == Attention::Relu ? "relu" : "sigmoid"; }
inline const char* to_string(Fusion f) { return f == Fusion::Sam ? "sam" : "none"; }

inline Attention parse_attention(const std::string& s) {
    if (s == "relu") return Attention::Relu;
    if (s == "sigmoid") return Attention::Sigmoid;
    throw std::invalid_argument("attention must be relu or sigmoid, got '" + s + "'");
}

inline Fusion parse_fusion(const std::string& s) {
    if (s == "sam") return Fusion::Sam;
    if (s == "none") return Fusion::None;
    throw std::invalid_argument("fusion must be sam or none, got '" + s + "'");
}

struct NetworkConfig {
    // One entry per encoder block, shallow to deep. Each block halves the
    // resolution of its input except the first, which uses first_stride.
    std::vector<std::size_t> widths{16, 32, 64};
    std::size_t first_stride = 2;
    std::size_t input_size = 64;
    std::uint64_t seed = 0;
    Attention attention = Attention::Relu;
    // Fusion::None is the backbone-only baseline: the head reads the deepest
    // block directly and no shallow features are used.
    Fusion fusion = Fusion::Sam;

    std::size_t blocks() const { return widths.size(); }

    // Total downsampling factor of the deepest block.
    std::size_t reduction() const {
        std::size_t r = first_stride;
        for (std::size_t b = 1; b < blocks(); ++b) r *= 2;
        return r;
    }

    std::vector<std::string> validate() const {
        std::vector<std::string> errs;
        if (widths.size() < 2) errs.push_back("network needs at least two blocks");
        for (auto w : widths)
            if (w == 0) errs.push_back("block widths must be positive");
        if (first_stride != 1 && first_stride != 2) errs.push_back("first_stride must be 1 or 2");
        if (input_size == 0) errs.push_back("input_size must be positive");
        else if (!widths.empty() && input_size % reduction() != 0)
            errs.push_back("input_size " + std::to_string(input_size) + " is not divisible by the encoder reduction " +
                           std::to_string(reduction()));
        return errs;
    }

    bool operator==(const NetworkConfig&) const = default;
};

struct LossWeights {
    double bce = 1.0;
    double dice = 1.0;
};

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDiceSmooth = 1.0;

// Named parameter arrays, kept in creation order.
template <class T>
struct Parameters {
    std::vector<std::pair<std::string, Tensor<T>>> entries;

    Tensor<T>& operator[](const std::string& name) {
        for (auto& [n, t] : entries)
            if (n == name) return t;
        throw std::out_of_range("no parameter named " + name);
    }
    const Tensor<T>& operator[](const std::string& name) const {
        for (const auto& [n, t] : entries)
            if (n == name) return t;
        throw std::out_of_range("no parameter named " + name);
    }
    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.second.numel();
        return n;
    }
};

template <class T>
struct Model {
    NetworkConfig config;
    Parameters<T> params;
};

namespace detail {

inline std::size_t head_width(const NetworkConfig& c) {
    return c.fusion == Fusion::Sam ? c.widths.front() : c.widths.back();
}

template <class T>
void add_conv(Parameters<T>& p, Rng& rng, const std::string& name, std::size_t cout, std::size_t cin,
              std::size_t k, double bias_init = 0.0) {
    Tensor<T> w({cout, cin, k, k});
    const double std = std::sqrt(2.0 / static_cast<double>(cin * k * k));
    for (auto& v : w.data) v = static_cast<T>(rng.normal(0.0, std));
    p.entries.emplace_back(name + ".weight", std::move(w));
    p.entries.emplace_back(name + ".bias", Tensor<T>({cout}, static_cast<T>(bias_init)));
}

}  // namespace detail

// He-normal weights from the config seed; attention reducers start with bias
// 1 so the initial gate is open rather than dead under ReLU.
template <class T>
Model<T> init_model(const NetworkConfig& cfg) {
    if (auto errs = cfg.validate(); !errs.empty()) throw std::invalid_argument("NetworkConfig: " + errs.front());
    Model<T> m{cfg, {}};
    Rng rng(derive_seed(cfg.seed, 0x5a4e4554));
    std::size_t cin = 3;
    for (std::size_t b = 0; b < cfg.blocks(); ++b) {
        const std::string name = "enc" + std::to_string(b);
        detail::add_conv(m.params, rng, name + ".conv1", cfg.widths[b], cin, 3);
        detail::add_conv(m.params, rng, name + ".conv2", cfg.widths[b], cfg.widths[b], 3);
        cin = cfg.widths[b];
    }
    if (cfg.fusion == Fusion::Sam)
        for (std::size_t i = cfg.blocks() - 1; i-- > 0;)
            detail::add_conv(m.params, rng, "sam" + std::to_string(i) + ".reduce", 1, cfg.widths[i + 1], 1, 1.0);
    const std::size_t hw = detail::head_width(cfg);
    detail::add_conv(m.params, rng, "head.conv", hw, hw, 3);
    detail::add_conv(m.params, rng, "head.out", 1, hw, 1);
    return m;
}

template <class U, class T>
Model<U> cast_model(const Model<T>& m) {
    Model<U> out{m.config, {}};
    for (const auto& [name, t] : m.params.entries) {
        Tensor<U> c(t.shape);
        for (std::size_t i = 0; i < t.numel(); ++i) c.data[i] = static_cast<U>(t.data[i]);
        out.params.entries.emplace_back(name, std::move(c));
    }
    return out;
}

// Shallow attention: gate = act(Up(deep)) at the shallow resolution, applied
// to every shallow channel. `deep` carries one channel (or as many as
// `shallow`), the same batch size, and no larger spatial extent.
template <class T>
Var sam(Graph<T>& g, Var shallow, Var deep, Attention act = Attention::Relu) {
    const Shape& ss = g.shape(shallow);
    const Shape& ds = g.shape(deep);
    if (ss.size() != 4 || ds.size() != 4) throw ShapeMismatch("sam: expected rank-4 features");
    if (ss[0] != ds[0])
        throw ShapeMismatch("sam: batch size mismatch, shallow " + grad::to_string(ss) + " deep " + grad::to_string(ds));
    if (ds[1] != 1 && ds[1] != ss[1])
        throw ShapeMismatch("sam: attention needs 1 or " + std::to_string(ss[1]) + " channels, got " +
                            std::to_string(ds[1]));
    const Var up = grad::upsample_bilinear(g, deep, ss[2], ss[3]);
    const Var gate = act == Attention::Relu ? grad::relu(g, up) : grad::sigmoid(g, up);
    return grad::mul(g, shallow, gate);
}

struct ParamVars {
    std::vector<std::pair<std::string, Var>> vars;
    Var operator[](const std::string& name) const {
        for (const auto& [n, v] : vars)
            if (n == name) return v;
        throw std::out_of_range("no parameter named " + name);
    }
};

template <class T>
ParamVars bind_parameters(Graph<T>& g, const Parameters<T>& p, bool requires_grad) {
    ParamVars pv;
    for (const auto& [name, t] : p.entries) pv.vars.emplace_back(name, g.leaf(t, requires_grad));
    return pv;
}

// Logits N x 1 x H x W for input N x 3 x H x W. H and W must be multiples of
// the encoder reduction; multi-scale training feeds sizes other than
// config.input_size, inference entry points check the configured size.
template <class T>
Var forward(Graph<T>& g, const NetworkConfig& cfg, const ParamVars& p, Var x) {
    const Shape xs = g.shape(x);
    if (xs.size() != 4 || xs[1] != 3) throw ShapeMismatch("forward: expected N x 3 x H x W input, got " + grad::to_string(xs));
    const std::size_t r = cfg.reduction();
    if (xs[2] % r || xs[3] % r)
        throw ShapeMismatch("forward: input " + std::to_string(xs[2]) + "x" + std::to_string(xs[3]) +
                            " not divisible by encoder reduction " + std::to_string(r));

    auto conv = [&](Var in, const std::string& name, std::size_t stride, std::size_t pad) {
        return grad::conv2d(g, in, p[name + ".weight"], p[name + ".bias"], stride, pad);
    };

    std::vector<Var> feats;
    Var h = x;
    for (std::size_t b = 0; b < cfg.blocks(); ++b) {
        const std::string name = "enc" + std::to_string(b);
        h = grad::relu(g, conv(h, name + ".conv1", b == 0 ? cfg.first_stride : 2, 1));
        h = grad::relu(g, conv(h, name + ".conv2", 1, 1));
        feats.push_back(h);
    }

    Var fused = feats.back();
    if (cfg.fusion == Fusion::Sam)
        for (std::size_t i = cfg.blocks() - 1; i-- > 0;) {
            const Var att = conv(fused, "sam" + std::to_string(i) + ".reduce", 1, 0);
            fused = sam(g, feats[i], att, cfg.attention);
        }

    const Var hd = grad::relu(g, conv(fused, "head.conv", 1, 1));
    const Var logits = conv(hd, "head.out", 1, 0);
    return grad::upsample_bilinear(g, logits, xs[2], xs[3]);
}

// Mean binary cross entropy, probabilities clamped to [1e-7, 1 - 1e-7].
template <class T>
Var bce_loss(Graph<T>& g, Var prob, Var target) {
    if (g.shape(prob) != g.shape(target))
        throw ShapeMismatch("bce_loss: shapes " + grad::to_string(g.shape(prob)) + " and " +
                            grad::to_string(g.shape(target)));
    const auto& pd = g.value(prob).data;
    const auto& gd = g.value(target).data;
    const T lo = static_cast<T>(kProbClamp), hi = T(1) - static_cast<T>(kProbClamp);
    double sum = 0.0;
    for (std::size_t i = 0; i < pd.size(); ++i) {
        const double p = std::clamp(pd[i], lo, hi);
        sum -= gd[i] * std::log(p) + (1.0 - gd[i]) * std::log(1.0 - p);
    }
    const double inv_n = 1.0 / static_cast<double>(pd.size());
    return g.record("bce_loss", Tensor<T>({1}, static_cast<T>(sum * inv_n)), {prob, target},
                    [=](Graph<T>& g, const std::vector<T>& gy) {
                        T* gp = g.grad_buffer(prob);
                        if (!gp) return;
                        const auto& pd = g.value(prob).data;
                        const auto& gd = g.value(target).data;
                        for (std::size_t i = 0; i < pd.size(); ++i) {
                            const double p = pd[i];
                            if (p < lo || p > hi) continue;
                            gp[i] += static_cast<T>(gy[0] * inv_n * (-gd[i] / p + (1.0 - gd[i]) / (1.0 - p)));
                        }
                    });
}

// 1 - (2 sum(pg) + eps) / (sum(p) + sum(g) + eps) per image, averaged over
// the batch (axis 0).
template <class T>
Var dice_loss(Graph<T>& g, Var prob, Var target) {
    const Shape& s = g.shape(prob);
    if (s != g.shape(target))
        throw ShapeMismatch("dice_loss: shapes " + grad::to_string(s) + " and " + grad::to_string(g.shape(target)));
    if (s.empty() || s[0] == 0) throw ShapeMismatch("dice_loss: empty batch");
    const std::size_t n = s[0], m = grad::numel(s) / n;
    const auto& pd = g.value(prob).data;
    const auto& gd = g.value(target).data;
    std::vector<double> inter(n, 0.0), total(n, 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = b * m; i < (b + 1) * m; ++i) {
            inter[b] += static_cast<double>(pd[i]) * gd[i];
            total[b] += static_cast<double>(pd[i]) + gd[i];
        }
        loss += 1.0 - (2.0 * inter[b] + kDiceSmooth) / (total[b] + kDiceSmooth);
    }
    return g.record("dice_loss", Tensor<T>({1}, static_cast<T>(loss / n)), {prob, target},
                    [=](Graph<T>& g, const std::vector<T>& gy) {
                        T* gp = g.grad_buffer(prob);
                        if (!gp) return;
                        const auto& gd = g.value(target).data;
                        for (std::size_t b = 0; b < n; ++b) {
                            const double den = total[b] + kDiceSmooth;
                            const double num = 2.0 * inter[b] + kDiceSmooth;
                            const double scale = static_cast<double>(gy[0]) / static_cast<double>(n) / (den * den);
                            for (std::size_t i = b * m; i < (b + 1) * m; ++i)
                                gp[i] += static_cast<T>(-scale * (2.0 * gd[i] * den - num));
                        }
                    });
}

template <class T>
Var segmentation_loss(Graph<T>& g, Var prob, Var target, const LossWeights& w = {}) {
    const Var bce = bce_loss(g, prob, target);
    const Var dice = dice_loss(g, prob, target);
    return grad::add(g, grad::scale(g, bce, static_cast<T>(w.bce)), grad::scale(g, dice, static_cast<T>(w.dice)));
}

// Network input tensor and target masks for one batch.
template <class T>
struct Batch {
    Tensor<T> images;  // N x 3 x H x W, already normalized
    Tensor<T> masks;   // N x 1 x H x W in {0, 1}
};

struct NonFiniteLoss : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class T>
struct LossAndGrads {
    double loss = 0.0;
    Parameters<T> grads;
};

template <class T>
LossAndGrads<T> loss_and_gradients(const Model<T>& model, const Batch<T>& batch, const LossWeights& w = {}) {
    Graph<T> g;
    const ParamVars pv = bind_parameters(g, model.params, true);
    const Var x = g.leaf(batch.images);
    const Var target = g.leaf(batch.masks);
    const Var prob = grad::sigmoid(g, forward(g, model.config, pv, x));
    const Var loss = segmentation_loss(g, prob, target, w);
    LossAndGrads<T> out;
    out.loss = static_cast<double>(g.value(loss).data[0]);
    if (!std::isfinite(out.loss)) throw NonFiniteLoss("loss is not finite (" + std::to_string(out.loss) + ")");
    g.backward(loss);
    for (const auto& [name, v] : pv.vars) out.grads.entries.emplace_back(name, g.grad(v));
    return out;
}

// Heavy-ball SGD: v <- momentum * v + grad; w <- w - lr * v.
template <class T>
class Sgd {
public:
    explicit Sgd(double momentum = 0.9) : momentum_(momentum) {}

    void step(Parameters<T>& params, const Parameters<T>& grads, double lr) {
        if (velocity_.entries.empty())
            for (const auto& [name, t] : params.entries) velocity_.entries.emplace_back(name, Tensor<T>(t.shape));
        for (std::size_t k = 0; k < params.entries.size(); ++k) {
            auto& w = params.entries[k].second.data;
            const auto& gr = grads.entries[k].second.data;
            auto& v = velocity_.entries[k].second.data;
            for (std::size_t i = 0; i < w.size(); ++i) {
                v[i] = static_cast<T>(momentum_) * v[i] + gr[i];
                w[i] -= static_cast<T>(lr) * v[i];
            }
        }
    }

    double momentum() const { return momentum_; }

private:
    double momentum_;
    Parameters<T> velocity_;
};

// Rescales all gradients together so their global L2 norm is at most
// max_norm; 0 leaves them alone. Returns the norm before rescaling.
template <class T>
double clip_grad_norm(Parameters<T>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, t] : grads.entries)
        for (T v : t.data) sq += static_cast<double>(v) * static_cast<double>(v);
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const T f = static_cast<T>(max_norm / norm);
        for (auto& [name, t] : grads.entries)
            for (T& v : t.data) v *= f;
    }
    return norm;
}

// One optimizer update; returns the loss before the update.
template <class T>
double train_step(Model<T>& model, Sgd<T>& opt, const Batch<T>& batch, double lr, const LossWeights& w = {},
                  double max_grad_norm = 0.0) {
    if (!(lr >= 0.0)) throw std::invalid_argument("train_step: learning rate must be non-negative");
    auto lg = loss_and_gradients(model, batch, w);
    clip_grad_norm(lg.grads, max_grad_norm);
    opt.step(model.params, lg.grads, lr);
    return lg.loss;
}

// Logits for a batch without recording gradients.
template <class T>
Tensor<T> predict_logits(const Model<T>& model, const Tensor<T>& images) {
    Graph<T> g;
    const ParamVars pv = bind_parameters(g, model.params, false);
    return g.value(forward(g, model.config, pv, g.leaf(images)));
}

}  // namespace sanet
