#pragma once

// Tape-based reverse-mode differentiation over dense N-d arrays. Only the
// operators the segmentation network needs are provided. Nodes are appended
// in execution order, so reverse insertion order is a valid topological
// order for the backward sweep.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sanet::grad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

class ShapeMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(grad::numel(shape), fill) {}
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != grad::numel(shape))
            throw ShapeMismatch("Tensor: " + std::to_string(data.size()) + " values for shape " + to_string(shape));
    }

    std::size_t numel() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }

    bool operator==(const Tensor&) const = default;
};

// Handle to a node inside one Graph.
struct Var {
    std::size_t id = 0;
};

template <class T>
class Graph {
public:
    // Receives the gradient flowing into this node's output.
    using BackwardFn = std::function<void(Graph&, const std::vector<T>& out_grad)>;

    Var leaf(Tensor<T> value, bool requires_grad = false) {
        nodes_.push_back(Node{std::move(value), {}, requires_grad, nullptr, "leaf"});
        return Var{nodes_.size() - 1};
    }

    // Appends an operator output. The node requires grad when any input does;
    // otherwise the backward function is dropped.
    Var record(const char* op, Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward) {
        bool needs = false;
        for (Var v : inputs) needs = needs || node(v).requires_grad;
        nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : nullptr, op});
        return Var{nodes_.size() - 1};
    }

    const Tensor<T>& value(Var v) const { return node(v).value; }
    const Shape& shape(Var v) const { return node(v).value.shape; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    std::size_t size() const { return nodes_.size(); }
    const char* op_name(Var v) const { return node(v).op; }

    // Gradient of the last backward() call; zeros when the node received none.
    Tensor<T> grad(Var v) const {
        const Node& n = node(v);
        if (n.grad.empty()) return Tensor<T>(n.value.shape);
        return Tensor<T>(n.value.shape, n.grad);
    }

    bool has_grad(Var v) const { return !node(v).grad.empty(); }

    // Accumulation target for a node's gradient, allocated on first use.
    // Returns nullptr when the node does not take part in differentiation.
    T* grad_buffer(Var v) {
        Node& n = node(v);
        if (!n.requires_grad) return nullptr;
        if (n.grad.empty()) n.grad.assign(n.value.numel(), T(0));
        return n.grad.data();
    }

    void backward(Var loss) {
        Node& out = node(loss);
        if (out.value.numel() != 1)
            throw ShapeMismatch("backward: loss must be scalar, got shape " + to_string(out.value.shape));
        for (Node& n : nodes_) n.grad.clear();
        if (!out.requires_grad) return;
        out.grad.assign(1, T(1));
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward || n.grad.empty()) continue;
            // The closure may allocate grads of earlier nodes only; this
            // node's grad vector is not touched while it runs.
            n.backward(*this, n.grad);
        }
    }

private:
    struct Node {
        Tensor<T> value;
        std::vector<T> grad;
        bool requires_grad = false;
        BackwardFn backward;
        const char* op = "";
    };

    Node& node(Var v) {
        if (v.id >= nodes_.size()) throw std::out_of_range("Graph: unknown variable");
        return nodes_[v.id];
    }
    const Node& node(Var v) const {
        if (v.id >= nodes_.size()) throw std::out_of_range("Graph: unknown variable");
        return nodes_[v.id];
    }

    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Var relu(Graph<T>& g, Var x) {
    const Tensor<T>& xv = g.value(x);
    Tensor<T> y(xv.shape);
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = xv.data[i] > T(0) ? xv.data[i] : T(0);
    return g.record("relu", std::move(y), {x}, [x](Graph<T>& g, const std::vector<T>& gy) {
        T* gx = g.grad_buffer(x);
        if (!gx) return;
        const auto& xd = g.value(x).data;
        for (std::size_t i = 0; i < gy.size(); ++i)
            if (xd[i] > T(0)) gx[i] += gy[i];
    });
}

template <class T>
T stable_sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <class T>
Var sigmoid(Graph<T>& g, Var x) {
    const Tensor<T>& xv = g.value(x);
    Tensor<T> y(xv.shape);
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = stable_sigmoid(xv.data[i]);
    const std::size_t out_id = g.size();
    return g.record("sigmoid", std::move(y), {x}, [x, out_id](Graph<T>& g, const std::vector<T>& gy) {
        T* gx = g.grad_buffer(x);
        if (!gx) return;
        const auto& yd = g.value(Var{out_id}).data;
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * yd[i] * (T(1) - yd[i]);
    });
}

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    if (av.shape != bv.shape)
        throw ShapeMismatch("add: shapes " + to_string(av.shape) + " and " + to_string(bv.shape));
    Tensor<T> y(av.shape);
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = av.data[i] + bv.data[i];
    return g.record("add", std::move(y), {a, b}, [a, b](Graph<T>& g, const std::vector<T>& gy) {
        for (Var v : {a, b})
            if (T* gv = g.grad_buffer(v))
                for (std::size_t i = 0; i < gy.size(); ++i) gv[i] += gy[i];
    });
}

template <class T>
Var scale(Graph<T>& g, Var x, T factor) {
    const Tensor<T>& xv = g.value(x);
    Tensor<T> y(xv.shape);
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = xv.data[i] * factor;
    return g.record("scale", std::move(y), {x}, [x, factor](Graph<T>& g, const std::vector<T>& gy) {
        if (T* gx = g.grad_buffer(x))
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * factor;
    });
}

// Elementwise product over N x C x H x W. `b` may also be 1 along the batch
// and/or channel axis (a single attention map applied to every channel).
template <class T>
Var mul(Graph<T>& g, Var a, Var b) {
    const Shape& as = g.shape(a);
    const Shape& bs = g.shape(b);
    if (as == bs) {
        const auto& ad = g.value(a).data;
        const auto& bd = g.value(b).data;
        Tensor<T> y(as);
        for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = ad[i] * bd[i];
        return g.record("mul", std::move(y), {a, b}, [a, b](Graph<T>& g, const std::vector<T>& gy) {
            const auto& ad = g.value(a).data;
            const auto& bd = g.value(b).data;
            if (T* ga = g.grad_buffer(a))
                for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bd[i];
            if (T* gb = g.grad_buffer(b))
                for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * ad[i];
        });
    }
    const bool ok = as.size() == 4 && bs.size() == 4 && (bs[0] == as[0] || bs[0] == 1) &&
                    (bs[1] == as[1] || bs[1] == 1) && bs[2] == as[2] && bs[3] == as[3];
    if (!ok) throw ShapeMismatch("mul: cannot broadcast " + to_string(bs) + " against " + to_string(as));

    const std::size_t n = as[0], c = as[1], hw = as[2] * as[3];
    const bool bcast_n = bs[0] == 1, bcast_c = bs[1] == 1;
    auto b_offset = [=](std::size_t in, std::size_t ic) {
        return ((bcast_n ? 0 : in) * bs[1] + (bcast_c ? 0 : ic)) * hw;
    };
    const auto& ad = g.value(a).data;
    const auto& bd = g.value(b).data;
    Tensor<T> y(as);
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t ic = 0; ic < c; ++ic) {
            const std::size_t ao = (in * c + ic) * hw, bo = b_offset(in, ic);
            for (std::size_t k = 0; k < hw; ++k) y.data[ao + k] = ad[ao + k] * bd[bo + k];
        }
    return g.record("mul", std::move(y), {a, b}, [=](Graph<T>& g, const std::vector<T>& gy) {
        const auto& ad = g.value(a).data;
        const auto& bd = g.value(b).data;
        T* ga = g.grad_buffer(a);
        T* gb = g.grad_buffer(b);
        for (std::size_t in = 0; in < n; ++in)
            for (std::size_t ic = 0; ic < c; ++ic) {
                const std::size_t ao = (in * c + ic) * hw, bo = b_offset(in, ic);
                if (ga)
                    for (std::size_t k = 0; k < hw; ++k) ga[ao + k] += gy[ao + k] * bd[bo + k];
                if (gb)
                    for (std::size_t k = 0; k < hw; ++k) gb[bo + k] += gy[ao + k] * ad[ao + k];
            }
    });
}

// ---------------------------------------------------------------------------
// Reductions (result has shape {1})

template <class T>
Var reduce_sum(Graph<T>& g, Var x) {
    const auto& xd = g.value(x).data;
    T s = T(0);
    for (T v : xd) s += v;
    return g.record("reduce_sum", Tensor<T>({1}, s), {x}, [x](Graph<T>& g, const std::vector<T>& gy) {
        if (T* gx = g.grad_buffer(x)) {
            const std::size_t n = g.value(x).numel();
            for (std::size_t i = 0; i < n; ++i) gx[i] += gy[0];
        }
    });
}

template <class T>
Var reduce_mean(Graph<T>& g, Var x) {
    const auto& xd = g.value(x).data;
    if (xd.empty()) throw ShapeMismatch("reduce_mean: empty tensor");
    T s = T(0);
    for (T v : xd) s += v;
    const T inv_n = T(1) / static_cast<T>(xd.size());
    return g.record("reduce_mean", Tensor<T>({1}, s * inv_n), {x}, [x, inv_n](Graph<T>& g, const std::vector<T>& gy) {
        if (T* gx = g.grad_buffer(x)) {
            const std::size_t n = g.value(x).numel();
            for (std::size_t i = 0; i < n; ++i) gx[i] += gy[0] * inv_n;
        }
    });
}

// ---------------------------------------------------------------------------
// Spatial operators on N x C x H x W

namespace detail {

inline void require_rank4(const Shape& s, const char* op) {
    if (s.size() != 4) throw ShapeMismatch(std::string(op) + ": expected N x C x H x W, got " + to_string(s));
}

// Two-tap linear interpolation weights along one axis, half-pixel centers
// (align_corners = false): src = (i + 0.5) * in / out - 0.5, clamped at 0.
struct LinearTaps {
    std::vector<std::size_t> lo, hi;
    std::vector<double> frac;  // weight of `hi`
};

inline LinearTaps linear_taps(std::size_t in, std::size_t out) {
    LinearTaps t;
    t.lo.resize(out);
    t.hi.resize(out);
    t.frac.resize(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
        double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        auto i0 = static_cast<std::size_t>(src);
        if (i0 > in - 1) i0 = in - 1;
        t.lo[i] = i0;
        t.hi[i] = std::min(i0 + 1, in - 1);
        t.frac[i] = src - static_cast<double>(i0);
    }
    return t;
}

}  // namespace detail

template <class T>
Var upsample_bilinear(Graph<T>& g, Var x, std::size_t out_h, std::size_t out_w) {
    const Shape xs = g.shape(x);
    detail::require_rank4(xs, "upsample_bilinear");
    if (out_h == 0 || out_w == 0) throw ShapeMismatch("upsample_bilinear: zero target extent");
    if (out_h < xs[2] || out_w < xs[3])
        throw ShapeMismatch("upsample_bilinear: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                            " smaller than input " + to_string(xs));
    const std::size_t planes = xs[0] * xs[1], in_h = xs[2], in_w = xs[3];
    const auto ty = detail::linear_taps(in_h, out_h);
    const auto tx = detail::linear_taps(in_w, out_w);

    const auto& xd = g.value(x).data;
    Tensor<T> y({xs[0], xs[1], out_h, out_w});
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = xd.data() + p * in_h * in_w;
        T* dst = y.data.data() + p * out_h * out_w;
        for (std::size_t i = 0; i < out_h; ++i) {
            const T fy = static_cast<T>(ty.frac[i]);
            const T* r0 = src + ty.lo[i] * in_w;
            const T* r1 = src + ty.hi[i] * in_w;
            for (std::size_t j = 0; j < out_w; ++j) {
                const T fx = static_cast<T>(tx.frac[j]);
                const T top = r0[tx.lo[j]] * (T(1) - fx) + r0[tx.hi[j]] * fx;
                const T bot = r1[tx.lo[j]] * (T(1) - fx) + r1[tx.hi[j]] * fx;
                dst[i * out_w + j] = top * (T(1) - fy) + bot * fy;
            }
        }
    }
    return g.record("upsample_bilinear", std::move(y), {x},
                    [=](Graph<T>& g, const std::vector<T>& gy) {
                        T* gx = g.grad_buffer(x);
                        if (!gx) return;
                        for (std::size_t p = 0; p < planes; ++p) {
                            T* dsrc = gx + p * in_h * in_w;
                            const T* dout = gy.data() + p * out_h * out_w;
                            for (std::size_t i = 0; i < out_h; ++i) {
                                const T fy = static_cast<T>(ty.frac[i]);
                                T* r0 = dsrc + ty.lo[i] * in_w;
                                T* r1 = dsrc + ty.hi[i] * in_w;
                                for (std::size_t j = 0; j < out_w; ++j) {
                                    const T fx = static_cast<T>(tx.frac[j]);
                                    const T d = dout[i * out_w + j];
                                    r0[tx.lo[j]] += d * (T(1) - fy) * (T(1) - fx);
                                    r0[tx.hi[j]] += d * (T(1) - fy) * fx;
                                    r1[tx.lo[j]] += d * fy * (T(1) - fx);
                                    r1[tx.hi[j]] += d * fy * fx;
                                }
                            }
                        }
                    });
}

// 2 x 2 average pooling with stride 2; H and W must be even.
template <class T>
Var avg_pool2(Graph<T>& g, Var x) {
    const Shape xs = g.shape(x);
    detail::require_rank4(xs, "avg_pool2");
    if (xs[2] % 2 || xs[3] % 2) throw ShapeMismatch("avg_pool2: odd spatial extent " + to_string(xs));
    const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3], oh = h / 2, ow = w / 2;
    const auto& xd = g.value(x).data;
    Tensor<T> y({xs[0], xs[1], oh, ow});
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                const T* s = xd.data() + p * h * w + 2 * i * w + 2 * j;
                y.data[(p * oh + i) * ow + j] = (s[0] + s[1] + s[w] + s[w + 1]) * T(0.25);
            }
    return g.record("avg_pool2", std::move(y), {x}, [=](Graph<T>& g, const std::vector<T>& gy) {
        T* gx = g.grad_buffer(x);
        if (!gx) return;
        for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    const T d = gy[(p * oh + i) * ow + j] * T(0.25);
                    T* s = gx + p * h * w + 2 * i * w + 2 * j;
                    s[0] += d;
                    s[1] += d;
                    s[w] += d;
                    s[w + 1] += d;
                }
    });
}

namespace detail {

struct ConvGeometry {
    std::size_t n, cin, h, w, cout, k, stride, pad, oh, ow;
    std::size_t patch() const { return cin * k * k; }
    std::size_t out_pixels() const { return oh * ow; }
};

// Unfolds one image (cin x h x w) into a (cin*k*k) x (oh*ow) row-major matrix.
template <class T>
void im2col(const T* img, const ConvGeometry& c, T* cols) {
    const std::size_t P = c.out_pixels();
    for (std::size_t ci = 0; ci < c.cin; ++ci)
        for (std::size_t ky = 0; ky < c.k; ++ky)
            for (std::size_t kx = 0; kx < c.k; ++kx) {
                T* row = cols + ((ci * c.k + ky) * c.k + kx) * P;
                for (std::size_t oy = 0; oy < c.oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) - static_cast<std::ptrdiff_t>(c.pad);
                    T* dst = row + oy * c.ow;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(c.h)) {
                        std::fill(dst, dst + c.ow, T(0));
                        continue;
                    }
                    const T* src = img + (ci * c.h + static_cast<std::size_t>(iy)) * c.w;
                    for (std::size_t ox = 0; ox < c.ow; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * c.stride + kx) - static_cast<std::ptrdiff_t>(c.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(c.w)) ? T(0) : src[ix];
                    }
                }
            }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& c, T* img) {
    const std::size_t P = c.out_pixels();
    for (std::size_t ci = 0; ci < c.cin; ++ci)
        for (std::size_t ky = 0; ky < c.k; ++ky)
            for (std::size_t kx = 0; kx < c.k; ++kx) {
                const T* row = cols + ((ci * c.k + ky) * c.k + kx) * P;
                for (std::size_t oy = 0; oy < c.oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) - static_cast<std::ptrdiff_t>(c.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(c.h)) continue;
                    T* dst = img + (ci * c.h + static_cast<std::size_t>(iy)) * c.w;
                    const T* src = row + oy * c.ow;
                    for (std::size_t ox = 0; ox < c.ow; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * c.stride + kx) - static_cast<std::ptrdiff_t>(c.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(c.w)) dst[ix] += src[ox];
                    }
                }
            }
}

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

}  // namespace detail

// 2-D cross-correlation. x: N x Cin x H x W, weight: Cout x Cin x k x k,
// bias: Cout. Output extent floor((H + 2p - k) / s) + 1.
template <class T>
Var conv2d(Graph<T>& g, Var x, Var weight, Var bias, std::size_t stride, std::size_t padding) {
    const Shape xs = g.shape(x);
    const Shape ws = g.shape(weight);
    const Shape bs = g.shape(bias);
    detail::require_rank4(xs, "conv2d input");
    detail::require_rank4(ws, "conv2d weight");
    if (ws[1] != xs[1])
        throw ShapeMismatch("conv2d: weight " + to_string(ws) + " expects " + std::to_string(ws[1]) +
                            " input channels, input is " + to_string(xs));
    if (ws[2] != ws[3]) throw ShapeMismatch("conv2d: only square kernels, got " + to_string(ws));
    if (bs != Shape{ws[0]}) throw ShapeMismatch("conv2d: bias " + to_string(bs) + " for weight " + to_string(ws));
    if (stride == 0) throw ShapeMismatch("conv2d: zero stride");
    const std::size_t k = ws[2];
    if (xs[2] + 2 * padding < k || xs[3] + 2 * padding < k)
        throw ShapeMismatch("conv2d: kernel " + std::to_string(k) + " larger than padded input " + to_string(xs));

    detail::ConvGeometry c{xs[0], xs[1], xs[2], xs[3], ws[0], k, stride, padding,
                           (xs[2] + 2 * padding - k) / stride + 1, (xs[3] + 2 * padding - k) / stride + 1};
    const std::size_t K = c.patch(), P = c.out_pixels();
    const std::size_t in_stride = c.cin * c.h * c.w, out_stride = c.cout * P;

    const auto& xd = g.value(x).data;
    const auto& wd = g.value(weight).data;
    const auto& bd = g.value(bias).data;
    // Eigen works on its own aligned storage only. Over mapped vector buffers
    // the SIMD path follows malloc alignment and results drift in the last bit.
    Tensor<T> y({c.n, c.cout, c.oh, c.ow});
    const detail::RowMatrix<T> W = detail::ConstMatMap<T>(wd.data(), c.cout, K);
    detail::RowMatrix<T> cols(K, P), Y(c.cout, P);
    for (std::size_t in = 0; in < c.n; ++in) {
        detail::im2col(xd.data() + in * in_stride, c, cols.data());
        Y.noalias() = W * cols;
        T* out = y.data.data() + in * out_stride;
        for (std::size_t co = 0; co < c.cout; ++co)
            for (std::size_t i = 0; i < P; ++i) out[co * P + i] = Y(co, i) + bd[co];
    }

    return g.record("conv2d", std::move(y), {x, weight, bias}, [=](Graph<T>& g, const std::vector<T>& gy) {
        T* gx = g.grad_buffer(x);
        T* gw = g.grad_buffer(weight);
        T* gb = g.grad_buffer(bias);
        const auto& xd = g.value(x).data;
        const detail::RowMatrix<T> W = detail::ConstMatMap<T>(g.value(weight).data.data(), c.cout, K);
        detail::RowMatrix<T> cols(K, P), dC, dY(c.cout, P);
        detail::RowMatrix<T> dW = detail::RowMatrix<T>::Zero(gw ? c.cout : 0, gw ? K : 0);
        for (std::size_t in = 0; in < c.n; ++in) {
            const T* gyn = gy.data() + in * out_stride;
            if (gb)
                for (std::size_t co = 0; co < c.cout; ++co)
                    for (std::size_t i = 0; i < P; ++i) gb[co] += gyn[co * P + i];
            if (!gw && !gx) continue;
            std::copy(gyn, gyn + out_stride, dY.data());
            if (gw) {
                detail::im2col(xd.data() + in * in_stride, c, cols.data());
                dW.noalias() += dY * cols.transpose();
            }
            if (gx) {
                dC.noalias() = W.transpose() * dY;
                detail::col2im_add(dC.data(), c, gx + in * in_stride);
            }
        }
        if (gw)
            for (std::size_t i = 0; i < c.cout * K; ++i) gw[i] += dW.data()[i];
    });
}

// ---------------------------------------------------------------------------
// Finite-difference certification

// Max relative error between the analytic gradient of the scalar f at x0 and
// central differences (f(x + h e_i) - f(x - h e_i)) / 2h, using the
// denominator max(|analytic|, |numeric|, 1e-8).
template <class T>
double grad_check(const std::function<Var(Graph<T>&, Var)>& f, const Tensor<T>& x0, T h) {
    Graph<T> g;
    const Var x = g.leaf(x0, true);
    const Var y = f(g, x);
    g.backward(y);
    const Tensor<T> analytic = g.grad(x);

    auto eval = [&](const Tensor<T>& xv) {
        Graph<T> ge;
        const Var out = f(ge, ge.leaf(xv, false));
        const auto& v = ge.value(out);
        if (v.numel() != 1) throw ShapeMismatch("grad_check: function is not scalar-valued");
        return static_cast<double>(v.data[0]);
    };

    double worst = 0.0;
    Tensor<T> xp = x0;
    for (std::size_t i = 0; i < x0.numel(); ++i) {
        xp.data[i] = x0.data[i] + h;
        const double fp = eval(xp);
        xp.data[i] = x0.data[i] - h;
        const double fm = eval(xp);
        xp.data[i] = x0.data[i];
        const double numeric = (fp - fm) / (2.0 * static_cast<double>(h));
        const double a = static_cast<double>(analytic.data[i]);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

}  // namespace sanet::grad
