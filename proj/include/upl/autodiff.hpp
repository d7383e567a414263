#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "upl/tensor.hpp"

namespace upl {

enum class Mode { kTrain, kEval };
enum class ZipKind { kAdd, kSub, kMul, kDiv };
enum class MapKind { kSquare, kAbs, kScale, kShift, kSqrt };
enum class ReduceKind { kMean, kSum };

// A node of the reverse-mode graph. `grad` stays empty until backward()
// materializes it; `backward_fn` pushes this node's grad into its parents.
template <typename T>
struct NodeT {
    Tensor5T<T> value;
    Tensor5T<T> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<NodeT<T>>> parents;
    std::function<void(NodeT<T>&)> backward_fn;

    bool has_grad() const { return !grad.empty(); }
};

template <typename T>
using NodePtr = std::shared_ptr<NodeT<T>>;

template <typename T>
NodePtr<T> make_leaf(Tensor5T<T> value, bool requires_grad) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

template <typename T>
NodePtr<T> constant(Tensor5T<T> value) {
    return make_leaf(std::move(value), false);
}

template <typename T>
NodePtr<T> make_op(Tensor5T<T> value, const char* op, std::vector<NodePtr<T>> parents,
                   std::function<void(NodeT<T>&)> backward_fn) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    n->op = op;
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    n->requires_grad = req;
    n->parents = std::move(parents);
    if (req) n->backward_fn = std::move(backward_fn);
    return n;
}

// Trainable or frozen tensor. trainable=false parameters never receive
// gradients and are skipped by the optimizer.
template <typename T>
struct ParameterT {
    NodePtr<T> node;
    bool trainable = true;
    std::string name;

    ParameterT() = default;
    ParameterT(Tensor5T<T> value, bool trainable_, std::string name_)
        : node(make_leaf(std::move(value), trainable_)), trainable(trainable_), name(std::move(name_)) {}

    Tensor5T<T>& value() { return node->value; }
    const Tensor5T<T>& value() const { return node->value; }
};

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

// Reverse topological accumulation from a scalar loss. Every node reachable
// through requires_grad paths gets a zeroed grad first, so repeated calls on
// the same graph produce bit-identical results.
template <typename T>
void backward(const NodePtr<T>& loss) {
    if (loss->value.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss->value.shape));
    }
    if (!loss->requires_grad) return;

    std::vector<NodeT<T>*> order;
    std::unordered_set<NodeT<T>*> seen;
    // iterative postorder DFS; parent order fixes the accumulation order
    std::vector<std::pair<NodeT<T>*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            NodeT<T>* p = node->parents[next].get();
            ++next;
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (NodeT<T>* n : order) {
        n->grad = Tensor5T<T>::zeros(n->value.shape);
    }
    loss->grad.data[0] = T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT<T>* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
NodePtr<T> relu(const NodePtr<T>& x) {
    Tensor5T<T> out(x->value.shape);
    const std::int64_t n = x->value.numel();
    for (std::int64_t i = 0; i < n; ++i) out.data[i] = x->value.data[i] > T(0) ? x->value.data[i] : T(0);
    return make_op<T>(std::move(out), "relu", {x}, [](NodeT<T>& self) {
        auto& xp = *self.parents[0];
        if (!xp.requires_grad) return;
        const std::int64_t n = self.value.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            if (xp.value.data[i] > T(0)) xp.grad.data[i] += self.grad.data[i];
        }
    });
}

// exact GELU, x * Phi(x)
template <typename T>
NodePtr<T> gelu(const NodePtr<T>& x) {
    Tensor5T<T> out(x->value.shape);
    const std::int64_t n = x->value.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(x->value.data[i]);
        out.data[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * 0.7071067811865475)));
    }
    return make_op<T>(std::move(out), "gelu", {x}, [](NodeT<T>& self) {
        auto& xp = *self.parents[0];
        if (!xp.requires_grad) return;
        const std::int64_t n = self.value.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            const double v = static_cast<double>(xp.value.data[i]);
            const double phi = std::exp(-0.5 * v * v) * 0.3989422804014327;
            const double cdf = 0.5 * (1.0 + std::erf(v * 0.7071067811865475));
            xp.grad.data[i] += self.grad.data[i] * static_cast<T>(cdf + v * phi);
        }
    });
}

// x if x >= 0 else slope_c * x; slope has shape (1, C, 1, 1, 1)
template <typename T>
NodePtr<T> prelu(const NodePtr<T>& x, const NodePtr<T>& slope) {
    const auto& xs = x->value.shape;
    if (slope->value.shape != Shape5{1, xs[1], 1, 1, 1}) {
        throw std::invalid_argument("prelu: slope shape " + shape_str(slope->value.shape) +
                                    " does not match channel count of " + shape_str(xs));
    }
    Tensor5T<T> out(xs);
    const std::int64_t spatial = xs[2] * xs[3] * xs[4];
    for (std::int64_t n = 0; n < xs[0]; ++n) {
        for (std::int64_t c = 0; c < xs[1]; ++c) {
            const T s = slope->value.data[static_cast<std::size_t>(c)];
            const std::int64_t base = (n * xs[1] + c) * spatial;
            for (std::int64_t i = 0; i < spatial; ++i) {
                const T v = x->value.data[base + i];
                out.data[base + i] = v >= T(0) ? v : s * v;
            }
        }
    }
    return make_op<T>(std::move(out), "prelu", {x, slope}, [spatial](NodeT<T>& self) {
        auto& xp = *self.parents[0];
        auto& sp = *self.parents[1];
        const auto& xs = xp.value.shape;
        for (std::int64_t n = 0; n < xs[0]; ++n) {
            for (std::int64_t c = 0; c < xs[1]; ++c) {
                const T s = sp.value.data[static_cast<std::size_t>(c)];
                const std::int64_t base = (n * xs[1] + c) * spatial;
                double gs = 0.0;
                for (std::int64_t i = 0; i < spatial; ++i) {
                    const T v = xp.value.data[base + i];
                    const T g = self.grad.data[base + i];
                    if (xp.requires_grad) xp.grad.data[base + i] += v >= T(0) ? g : s * g;
                    if (v < T(0)) gs += static_cast<double>(g) * static_cast<double>(v);
                }
                if (sp.requires_grad) sp.grad.data[static_cast<std::size_t>(c)] += static_cast<T>(gs);
            }
        }
    });
}

template <typename T>
NodePtr<T> zip(const NodePtr<T>& a, const NodePtr<T>& b, ZipKind kind) {
    if (!a->value.same_shape(b->value)) {
        throw std::invalid_argument("zip: shape mismatch " + shape_str(a->value.shape) + " vs " +
                                    shape_str(b->value.shape));
    }
    Tensor5T<T> out(a->value.shape);
    const std::int64_t n = out.numel();
    switch (kind) {
        case ZipKind::kAdd:
            for (std::int64_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] + b->value.data[i];
            break;
        case ZipKind::kSub:
            for (std::int64_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] - b->value.data[i];
            break;
        case ZipKind::kMul:
            for (std::int64_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] * b->value.data[i];
            break;
        case ZipKind::kDiv:
            for (std::int64_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] / b->value.data[i];
            break;
    }
    return make_op<T>(std::move(out), "zip", {a, b}, [kind](NodeT<T>& self) {
        auto& ap = *self.parents[0];
        auto& bp = *self.parents[1];
        const std::int64_t n = self.value.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            const T g = self.grad.data[i];
            switch (kind) {
                case ZipKind::kAdd:
                    if (ap.requires_grad) ap.grad.data[i] += g;
                    if (bp.requires_grad) bp.grad.data[i] += g;
                    break;
                case ZipKind::kSub:
                    if (ap.requires_grad) ap.grad.data[i] += g;
                    if (bp.requires_grad) bp.grad.data[i] -= g;
                    break;
                case ZipKind::kMul:
                    if (ap.requires_grad) ap.grad.data[i] += g * bp.value.data[i];
                    if (bp.requires_grad) bp.grad.data[i] += g * ap.value.data[i];
                    break;
                case ZipKind::kDiv: {
                    const T bv = bp.value.data[i];
                    if (ap.requires_grad) ap.grad.data[i] += g / bv;
                    if (bp.requires_grad) bp.grad.data[i] -= g * ap.value.data[i] / (bv * bv);
                    break;
                }
            }
        }
    });
}

template <typename T>
NodePtr<T> map(const NodePtr<T>& x, MapKind kind, double param = 0.0) {
    Tensor5T<T> out(x->value.shape);
    const std::int64_t n = out.numel();
    switch (kind) {
        case MapKind::kSquare:
            for (std::int64_t i = 0; i < n; ++i) out.data[i] = x->value.data[i] * x->value.data[i];
            break;
        case MapKind::kAbs:
            for (std::int64_t i = 0; i < n; ++i) out.data[i] = std::abs(x->value.data[i]);
            break;
        case MapKind::kScale:
            for (std::int64_t i = 0; i < n; ++i) out.data[i] = static_cast<T>(param) * x->value.data[i];
            break;
        case MapKind::kShift:
            for (std::int64_t i = 0; i < n; ++i) out.data[i] = static_cast<T>(param) + x->value.data[i];
            break;
        case MapKind::kSqrt:
            for (std::int64_t i = 0; i < n; ++i) {
                if (x->value.data[i] < T(0)) throw std::domain_error("map: sqrt of negative value");
                out.data[i] = std::sqrt(x->value.data[i]);
            }
            break;
    }
    return make_op<T>(std::move(out), "map", {x}, [kind, param](NodeT<T>& self) {
        auto& xp = *self.parents[0];
        if (!xp.requires_grad) return;
        const std::int64_t n = self.value.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            const T g = self.grad.data[i];
            switch (kind) {
                case MapKind::kSquare:
                    xp.grad.data[i] += T(2) * xp.value.data[i] * g;
                    break;
                case MapKind::kAbs: {
                    const T v = xp.value.data[i];
                    xp.grad.data[i] += v > T(0) ? g : (v < T(0) ? -g : T(0));
                    break;
                }
                case MapKind::kScale:
                    xp.grad.data[i] += static_cast<T>(param) * g;
                    break;
                case MapKind::kShift:
                    xp.grad.data[i] += g;
                    break;
                case MapKind::kSqrt:
                    xp.grad.data[i] += g / (T(2) * self.value.data[i]);
                    break;
            }
        }
    });
}

template <typename T>
NodePtr<T> reduce(const NodePtr<T>& x, ReduceKind kind) {
    if (x->value.numel() == 0) throw std::invalid_argument("reduce: empty tensor");
    double acc = 0.0;
    for (const T& v : x->value.data) acc += static_cast<double>(v);
    const std::int64_t n = x->value.numel();
    const T val = static_cast<T>(kind == ReduceKind::kMean ? acc / static_cast<double>(n) : acc);
    return make_op<T>(Tensor5T<T>::scalar_tensor(val), "reduce", {x}, [kind, n](NodeT<T>& self) {
        auto& xp = *self.parents[0];
        if (!xp.requires_grad) return;
        const T g = self.grad.data[0];
        const T w = kind == ReduceKind::kMean ? g / static_cast<T>(n) : g;
        for (std::int64_t i = 0; i < n; ++i) xp.grad.data[i] += w;
    });
}

// out = x * s with s a scalar node (learnable temperature etc.)
template <typename T>
NodePtr<T> mul_scalar(const NodePtr<T>& x, const NodePtr<T>& s) {
    if (s->value.numel() != 1) throw std::invalid_argument("mul_scalar: scale must be scalar");
    Tensor5T<T> out(x->value.shape);
    const T sv = s->value.data[0];
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out.data[i] = x->value.data[i] * sv;
    return make_op<T>(std::move(out), "mul_scalar", {x, s}, [](NodeT<T>& self) {
        auto& xp = *self.parents[0];
        auto& sp = *self.parents[1];
        const T sv = sp.value.data[0];
        const std::int64_t n = self.value.numel();
        double gs = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const T g = self.grad.data[i];
            if (xp.requires_grad) xp.grad.data[i] += g * sv;
            gs += static_cast<double>(g) * static_cast<double>(xp.value.data[i]);
        }
        if (sp.requires_grad) sp.grad.data[0] += static_cast<T>(gs);
    });
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace detail {

// Cross-correlation with same-zero padding. Each output element is reduced in
// a fixed (ci, kd, kh, kw) order by exactly one thread, so results are
// bit-identical for any thread count.
template <typename T>
void conv3d_value(const Tensor5T<T>& in, const Tensor5T<T>& w, const Tensor5T<T>* bias, Tensor5T<T>& out) {
    const std::int64_t N = in.shape[0], Cin = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const std::int64_t Cout = w.shape[0];
    const std::int64_t KD = w.shape[2], KH = w.shape[3], KW = w.shape[4];
    const std::int64_t rd = KD / 2, rh = KH / 2, rw = KW / 2;
#pragma omp parallel for collapse(3) schedule(static)
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t co = 0; co < Cout; ++co) {
            for (std::int64_t z = 0; z < D; ++z) {
                std::vector<T> acc(static_cast<std::size_t>(W));
                const T b = bias ? bias->data[static_cast<std::size_t>(co)] : T(0);
                for (std::int64_t y = 0; y < H; ++y) {
                    std::fill(acc.begin(), acc.end(), b);
                    for (std::int64_t ci = 0; ci < Cin; ++ci) {
                        for (std::int64_t kd = 0; kd < KD; ++kd) {
                            const std::int64_t zi = z + kd - rd;
                            if (zi < 0 || zi >= D) continue;
                            for (std::int64_t kh = 0; kh < KH; ++kh) {
                                const std::int64_t yi = y + kh - rh;
                                if (yi < 0 || yi >= H) continue;
                                const T* __restrict irow = &in.at(n, ci, zi, yi, 0);
                                const T* __restrict wrow = &w.at(co, ci, kd, kh, 0);
                                for (std::int64_t kw = 0; kw < KW; ++kw) {
                                    const std::int64_t shift = kw - rw;
                                    const std::int64_t lo = std::max<std::int64_t>(0, -shift);
                                    const std::int64_t hi = std::min<std::int64_t>(W, W - shift);
                                    const T wv = wrow[kw];
                                    T* __restrict a = acc.data();
                                    for (std::int64_t x = lo; x < hi; ++x) a[x] += wv * irow[x + shift];
                                }
                            }
                        }
                    }
                    T* orow = &out.at(n, co, z, y, 0);
                    for (std::int64_t x = 0; x < W; ++x) orow[x] = acc[static_cast<std::size_t>(x)];
                }
            }
        }
    }
}

template <typename T>
void conv3d_grad_input(const Tensor5T<T>& gout, const Tensor5T<T>& w, Tensor5T<T>& gin) {
    const std::int64_t N = gin.shape[0], Cin = gin.shape[1], D = gin.shape[2], H = gin.shape[3], W = gin.shape[4];
    const std::int64_t Cout = w.shape[0];
    const std::int64_t KD = w.shape[2], KH = w.shape[3], KW = w.shape[4];
    const std::int64_t rd = KD / 2, rh = KH / 2, rw = KW / 2;
#pragma omp parallel for collapse(3) schedule(static)
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t ci = 0; ci < Cin; ++ci) {
            for (std::int64_t z = 0; z < D; ++z) {
                std::vector<T> acc(static_cast<std::size_t>(W));
                for (std::int64_t y = 0; y < H; ++y) {
                    std::fill(acc.begin(), acc.end(), T(0));
                    for (std::int64_t co = 0; co < Cout; ++co) {
                        for (std::int64_t kd = 0; kd < KD; ++kd) {
                            const std::int64_t zo = z - kd + rd;
                            if (zo < 0 || zo >= D) continue;
                            for (std::int64_t kh = 0; kh < KH; ++kh) {
                                const std::int64_t yo = y - kh + rh;
                                if (yo < 0 || yo >= H) continue;
                                const T* __restrict grow = &gout.at(n, co, zo, yo, 0);
                                const T* __restrict wrow = &w.at(co, ci, kd, kh, 0);
                                for (std::int64_t kw = 0; kw < KW; ++kw) {
                                    const std::int64_t shift = rw - kw;
                                    const std::int64_t lo = std::max<std::int64_t>(0, -shift);
                                    const std::int64_t hi = std::min<std::int64_t>(W, W - shift);
                                    const T wv = wrow[kw];
                                    T* __restrict a = acc.data();
                                    for (std::int64_t x = lo; x < hi; ++x) a[x] += wv * grow[x + shift];
                                }
                            }
                        }
                    }
                    T* grow_in = &gin.at(n, ci, z, y, 0);
                    for (std::int64_t x = 0; x < W; ++x) grow_in[x] += acc[static_cast<std::size_t>(x)];
                }
            }
        }
    }
}

template <typename T>
void conv3d_grad_weight(const Tensor5T<T>& gout, const Tensor5T<T>& in, Tensor5T<T>& gw) {
    const std::int64_t N = in.shape[0], Cin = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const std::int64_t Cout = gw.shape[0];
    const std::int64_t KD = gw.shape[2], KH = gw.shape[3], KW = gw.shape[4];
    const std::int64_t rd = KD / 2, rh = KH / 2, rw = KW / 2;
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t co = 0; co < Cout; ++co) {
        for (std::int64_t ci = 0; ci < Cin; ++ci) {
            for (std::int64_t kd = 0; kd < KD; ++kd) {
                for (std::int64_t kh = 0; kh < KH; ++kh) {
                    for (std::int64_t kw = 0; kw < KW; ++kw) {
                        const std::int64_t shift = kw - rw;
                        const std::int64_t lo = std::max<std::int64_t>(0, -shift);
                        const std::int64_t hi = std::min<std::int64_t>(W, W - shift);
                        double s = 0.0;
                        for (std::int64_t n = 0; n < N; ++n) {
                            for (std::int64_t z = 0; z < D; ++z) {
                                const std::int64_t zi = z + kd - rd;
                                if (zi < 0 || zi >= D) continue;
                                for (std::int64_t y = 0; y < H; ++y) {
                                    const std::int64_t yi = y + kh - rh;
                                    if (yi < 0 || yi >= H) continue;
                                    const T* __restrict grow = &gout.at(n, co, z, y, 0);
                                    const T* __restrict irow = &in.at(n, ci, zi, yi, 0);
                                    double rs = 0.0;
                                    for (std::int64_t x = lo; x < hi; ++x)
                                        rs += static_cast<double>(grow[x]) * static_cast<double>(irow[x + shift]);
                                    s += rs;
                                }
                            }
                        }
                        gw.at(co, ci, kd, kh, kw) += static_cast<T>(s);
                    }
                }
            }
        }
    }
}

}  // namespace detail

// 3D cross-correlation, stride 1, same-zero padding (K-1)/2 per spatial side.
// x: (N, Cin, D, H, W); w: (Cout, Cin, KD, KH, KW) with odd extents;
// bias: (1, Cout, 1, 1, 1) or null.
template <typename T>
NodePtr<T> conv3d(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& bias = nullptr) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    if (ws[2] % 2 == 0 || ws[3] % 2 == 0 || ws[4] % 2 == 0) {
        throw std::invalid_argument("conv3d: kernel extents must be odd, got " + shape_str(ws));
    }
    if (ws[1] != xs[1]) {
        throw std::invalid_argument("conv3d: input channels " + std::to_string(xs[1]) +
                                    " != weight Cin " + std::to_string(ws[1]));
    }
    if (bias && bias->value.shape != Shape5{1, ws[0], 1, 1, 1}) {
        throw std::invalid_argument("conv3d: bias shape mismatch " + shape_str(bias->value.shape));
    }
    Tensor5T<T> out({xs[0], ws[0], xs[2], xs[3], xs[4]});
    detail::conv3d_value(x->value, w->value, bias ? &bias->value : nullptr, out);

    std::vector<NodePtr<T>> parents{x, w};
    if (bias) parents.push_back(bias);
    return make_op<T>(std::move(out), "conv3d", std::move(parents), [](NodeT<T>& self) {
        auto& xp = *self.parents[0];
        auto& wp = *self.parents[1];
        if (xp.requires_grad) detail::conv3d_grad_input(self.grad, wp.value, xp.grad);
        if (wp.requires_grad) detail::conv3d_grad_weight(self.grad, xp.value, wp.grad);
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            auto& bp = *self.parents[2];
            const auto& gs = self.grad.shape;
            const std::int64_t spatial = gs[2] * gs[3] * gs[4];
            for (std::int64_t co = 0; co < gs[1]; ++co) {
                double s = 0.0;
                for (std::int64_t n = 0; n < gs[0]; ++n) {
                    const T* g = &self.grad.at(n, co, 0, 0, 0);
                    for (std::int64_t i = 0; i < spatial; ++i) s += static_cast<double>(g[i]);
                }
                bp.grad.data[static_cast<std::size_t>(co)] += static_cast<T>(s);
            }
        }
    });
}

// Depthwise 3D cross-correlation; w: (C, 1, K, K, K), one filter per channel.
template <typename T>
NodePtr<T> depthwise_conv3d(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& bias = nullptr) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    if (ws[0] != xs[1] || ws[1] != 1) {
        throw std::invalid_argument("depthwise_conv3d: weight shape " + shape_str(ws) +
                                    " incompatible with input " + shape_str(xs));
    }
    if (ws[2] % 2 == 0) throw std::invalid_argument("depthwise_conv3d: kernel size must be odd");
    const std::int64_t N = xs[0], C = xs[1], D = xs[2], H = xs[3], W = xs[4];
    const std::int64_t K = ws[2], r = K / 2;

    Tensor5T<T> out(xs);
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
            const T b = bias ? bias->value.data[static_cast<std::size_t>(c)] : T(0);
            for (std::int64_t z = 0; z < D; ++z) {
                for (std::int64_t y = 0; y < H; ++y) {
                    for (std::int64_t x_ = 0; x_ < W; ++x_) {
                        T acc = b;
                        for (std::int64_t kd = 0; kd < K; ++kd) {
                            const std::int64_t zi = z + kd - r;
                            if (zi < 0 || zi >= D) continue;
                            for (std::int64_t kh = 0; kh < K; ++kh) {
                                const std::int64_t yi = y + kh - r;
                                if (yi < 0 || yi >= H) continue;
                                for (std::int64_t kw = 0; kw < K; ++kw) {
                                    const std::int64_t xi = x_ + kw - r;
                                    if (xi < 0 || xi >= W) continue;
                                    acc += w->value.at(c, 0, kd, kh, kw) * x->value.at(n, c, zi, yi, xi);
                                }
                            }
                        }
                        out.at(n, c, z, y, x_) = acc;
                    }
                }
            }
        }
    }

    std::vector<NodePtr<T>> parents{x, w};
    if (bias) parents.push_back(bias);
    return make_op<T>(std::move(out), "depthwise_conv3d", std::move(parents), [N, C, D, H, W, K, r](NodeT<T>& self) {
        auto& xp = *self.parents[0];
        auto& wp = *self.parents[1];
        if (xp.requires_grad) {
#pragma omp parallel for collapse(2) schedule(static)
            for (std::int64_t n = 0; n < N; ++n) {
                for (std::int64_t c = 0; c < C; ++c) {
                    for (std::int64_t z = 0; z < D; ++z) {
                        for (std::int64_t y = 0; y < H; ++y) {
                            for (std::int64_t x_ = 0; x_ < W; ++x_) {
                                T acc = T(0);
                                for (std::int64_t kd = 0; kd < K; ++kd) {
                                    const std::int64_t zo = z - kd + r;
                                    if (zo < 0 || zo >= D) continue;
                                    for (std::int64_t kh = 0; kh < K; ++kh) {
                                        const std::int64_t yo = y - kh + r;
                                        if (yo < 0 || yo >= H) continue;
                                        for (std::int64_t kw = 0; kw < K; ++kw) {
                                            const std::int64_t xo = x_ - kw + r;
                                            if (xo < 0 || xo >= W) continue;
                                            acc += wp.value.at(c, 0, kd, kh, kw) * self.grad.at(n, c, zo, yo, xo);
                                        }
                                    }
                                }
                                xp.grad.at(n, c, z, y, x_) += acc;
                            }
                        }
                    }
                }
            }
        }
        if (wp.requires_grad) {
#pragma omp parallel for schedule(static)
            for (std::int64_t c = 0; c < C; ++c) {
                for (std::int64_t kd = 0; kd < K; ++kd) {
                    for (std::int64_t kh = 0; kh < K; ++kh) {
                        for (std::int64_t kw = 0; kw < K; ++kw) {
                            double s = 0.0;
                            for (std::int64_t n = 0; n < N; ++n) {
                                for (std::int64_t z = 0; z < D; ++z) {
                                    const std::int64_t zi = z + kd - r;
                                    if (zi < 0 || zi >= D) continue;
                                    for (std::int64_t y = 0; y < H; ++y) {
                                        const std::int64_t yi = y + kh - r;
                                        if (yi < 0 || yi >= H) continue;
                                        for (std::int64_t x_ = 0; x_ < W; ++x_) {
                                            const std::int64_t xi = x_ + kw - r;
                                            if (xi < 0 || xi >= W) continue;
                                            s += static_cast<double>(self.grad.at(n, c, z, y, x_)) *
                                                 static_cast<double>(xp.value.at(n, c, zi, yi, xi));
                                        }
                                    }
                                }
                            }
                            wp.grad.at(c, 0, kd, kh, kw) += static_cast<T>(s);
                        }
                    }
                }
            }
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            auto& bp = *self.parents[2];
            const std::int64_t spatial = D * H * W;
            for (std::int64_t c = 0; c < C; ++c) {
                double s = 0.0;
                for (std::int64_t n = 0; n < N; ++n) {
                    const T* g = &self.grad.at(n, c, 0, 0, 0);
                    for (std::int64_t i = 0; i < spatial; ++i) s += static_cast<double>(g[i]);
                }
                bp.grad.data[static_cast<std::size_t>(c)] += static_cast<T>(s);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// batch / layer normalization
// ---------------------------------------------------------------------------

template <typename T>
struct BnStateT {
    Tensor5T<T> running_mean;  // (1, C, 1, 1, 1)
    Tensor5T<T> running_var;
    std::int64_t batches_tracked = 0;
    double momentum = 0.1;
    double eps = 1e-5;

    BnStateT() = default;
    explicit BnStateT(std::int64_t channels)
        : running_mean({1, channels, 1, 1, 1}), running_var({1, channels, 1, 1, 1}, T(1)) {}
};

// Per-channel normalization over (N, D, H, W). Train mode uses batch
// statistics and, when track_stats is set, folds them into the running
// estimates (unbiased variance, PyTorch-style). Eval mode uses the running
// estimates and fails loudly if none were ever recorded.
template <typename T>
NodePtr<T> batchnorm3d(const NodePtr<T>& x, const NodePtr<T>& gamma, const NodePtr<T>& beta,
                       BnStateT<T>& state, Mode mode, bool track_stats = true) {
    const auto& xs = x->value.shape;
    const std::int64_t C = xs[1];
    if (gamma->value.shape != Shape5{1, C, 1, 1, 1} || beta->value.shape != Shape5{1, C, 1, 1, 1}) {
        throw std::invalid_argument("batchnorm3d: affine parameter shape mismatch");
    }
    if (mode == Mode::kEval && state.batches_tracked == 0) {
        throw std::runtime_error("batchnorm3d: eval mode with uninitialized statistics");
    }
    const std::int64_t spatial = xs[2] * xs[3] * xs[4];
    const std::int64_t count = xs[0] * spatial;

    Tensor5T<T> mean({1, C, 1, 1, 1});
    Tensor5T<T> inv_std({1, C, 1, 1, 1});
    if (mode == Mode::kTrain) {
        for (std::int64_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::int64_t n = 0; n < xs[0]; ++n) {
                const T* row = &x->value.at(n, c, 0, 0, 0);
                for (std::int64_t i = 0; i < spatial; ++i) s += static_cast<double>(row[i]);
            }
            const double mu = s / static_cast<double>(count);
            double v = 0.0;
            for (std::int64_t n = 0; n < xs[0]; ++n) {
                const T* row = &x->value.at(n, c, 0, 0, 0);
                for (std::int64_t i = 0; i < spatial; ++i) {
                    const double d = static_cast<double>(row[i]) - mu;
                    v += d * d;
                }
            }
            const double var = v / static_cast<double>(count);
            mean.data[static_cast<std::size_t>(c)] = static_cast<T>(mu);
            inv_std.data[static_cast<std::size_t>(c)] = static_cast<T>(1.0 / std::sqrt(var + state.eps));
            if (track_stats) {
                const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
                auto& rm = state.running_mean.data[static_cast<std::size_t>(c)];
                auto& rv = state.running_var.data[static_cast<std::size_t>(c)];
                rm = static_cast<T>((1.0 - state.momentum) * static_cast<double>(rm) + state.momentum * mu);
                rv = static_cast<T>((1.0 - state.momentum) * static_cast<double>(rv) + state.momentum * unbiased);
            }
        }
        if (track_stats) ++state.batches_tracked;
    } else {
        for (std::int64_t c = 0; c < C; ++c) {
            mean.data[static_cast<std::size_t>(c)] = state.running_mean.data[static_cast<std::size_t>(c)];
            inv_std.data[static_cast<std::size_t>(c)] = static_cast<T>(
                1.0 / std::sqrt(static_cast<double>(state.running_var.data[static_cast<std::size_t>(c)]) + state.eps));
        }
    }

    Tensor5T<T> out(xs);
    for (std::int64_t n = 0; n < xs[0]; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
            const T mu = mean.data[static_cast<std::size_t>(c)];
            const T is = inv_std.data[static_cast<std::size_t>(c)];
            const T gm = gamma->value.data[static_cast<std::size_t>(c)];
            const T bt = beta->value.data[static_cast<std::size_t>(c)];
            const T* row = &x->value.at(n, c, 0, 0, 0);
            T* orow = &out.at(n, c, 0, 0, 0);
            for (std::int64_t i = 0; i < spatial; ++i) orow[i] = gm * (row[i] - mu) * is + bt;
        }
    }

    const bool batch_stats = mode == Mode::kTrain;
    return make_op<T>(std::move(out), "batchnorm3d", {x, gamma, beta},
                      [mean, inv_std, batch_stats, spatial, count](NodeT<T>& self) {
        auto& xp = *self.parents[0];
        auto& gp = *self.parents[1];
        auto& bp = *self.parents[2];
        const auto& xs = xp.value.shape;
        for (std::int64_t c = 0; c < xs[1]; ++c) {
            const T mu = mean.data[static_cast<std::size_t>(c)];
            const T is = inv_std.data[static_cast<std::size_t>(c)];
            const T gm = gp.value.data[static_cast<std::size_t>(c)];
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::int64_t n = 0; n < xs[0]; ++n) {
                const T* grow = &self.grad.at(n, c, 0, 0, 0);
                const T* xrow = &xp.value.at(n, c, 0, 0, 0);
                for (std::int64_t i = 0; i < spatial; ++i) {
                    const double xhat = static_cast<double>((xrow[i] - mu) * is);
                    sum_g += static_cast<double>(grow[i]);
                    sum_gx += static_cast<double>(grow[i]) * xhat;
                }
            }
            if (gp.requires_grad) gp.grad.data[static_cast<std::size_t>(c)] += static_cast<T>(sum_gx);
            if (bp.requires_grad) bp.grad.data[static_cast<std::size_t>(c)] += static_cast<T>(sum_g);
            if (xp.requires_grad) {
                const double mg = sum_g / static_cast<double>(count);
                const double mgx = sum_gx / static_cast<double>(count);
                for (std::int64_t n = 0; n < xs[0]; ++n) {
                    const T* grow = &self.grad.at(n, c, 0, 0, 0);
                    const T* xrow = &xp.value.at(n, c, 0, 0, 0);
                    T* xg = &xp.grad.at(n, c, 0, 0, 0);
                    for (std::int64_t i = 0; i < spatial; ++i) {
                        const double xhat = static_cast<double>((xrow[i] - mu) * is);
                        const double term = batch_stats
                                                ? static_cast<double>(grow[i]) - mg - xhat * mgx
                                                : static_cast<double>(grow[i]);
                        xg[i] += static_cast<T>(static_cast<double>(gm) * static_cast<double>(is) * term);
                    }
                }
            }
        }
    });
}

// Normalize across channels at every (n, d, h, w) position; gamma/beta per channel.
template <typename T>
NodePtr<T> layernorm_channels(const NodePtr<T>& x, const NodePtr<T>& gamma, const NodePtr<T>& beta,
                              double eps = 1e-5) {
    const auto& xs = x->value.shape;
    const std::int64_t N = xs[0], C = xs[1], spatial = xs[2] * xs[3] * xs[4];
    if (gamma->value.shape != Shape5{1, C, 1, 1, 1} || beta->value.shape != Shape5{1, C, 1, 1, 1}) {
        throw std::invalid_argument("layernorm_channels: affine parameter shape mismatch");
    }
    Tensor5T<T> out(xs);
    Tensor5T<T> mean({N, 1, xs[2], xs[3], xs[4]});
    Tensor5T<T> inv_std({N, 1, xs[2], xs[3], xs[4]});
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t i = 0; i < spatial; ++i) {
            double s = 0.0;
            for (std::int64_t c = 0; c < C; ++c) s += static_cast<double>(x->value.data[(n * C + c) * spatial + i]);
            const double mu = s / static_cast<double>(C);
            double v = 0.0;
            for (std::int64_t c = 0; c < C; ++c) {
                const double d = static_cast<double>(x->value.data[(n * C + c) * spatial + i]) - mu;
                v += d * d;
            }
            const double is = 1.0 / std::sqrt(v / static_cast<double>(C) + eps);
            mean.data[n * spatial + i] = static_cast<T>(mu);
            inv_std.data[n * spatial + i] = static_cast<T>(is);
            for (std::int64_t c = 0; c < C; ++c) {
                const T xv = x->value.data[(n * C + c) * spatial + i];
                out.data[(n * C + c) * spatial + i] =
                    gamma->value.data[static_cast<std::size_t>(c)] * (xv - static_cast<T>(mu)) * static_cast<T>(is) +
                    beta->value.data[static_cast<std::size_t>(c)];
            }
        }
    }
    return make_op<T>(std::move(out), "layernorm_channels", {x, gamma, beta},
                      [mean, inv_std, C, spatial](NodeT<T>& self) {
        auto& xp = *self.parents[0];
        auto& gp = *self.parents[1];
        auto& bp = *self.parents[2];
        const std::int64_t N = xp.value.shape[0];
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t i = 0; i < spatial; ++i) {
                const double mu = static_cast<double>(mean.data[n * spatial + i]);
                const double is = static_cast<double>(inv_std.data[n * spatial + i]);
                double sum_h = 0.0, sum_hx = 0.0;
                for (std::int64_t c = 0; c < C; ++c) {
                    const std::int64_t idx = (n * C + c) * spatial + i;
                    const double xhat = (static_cast<double>(xp.value.data[idx]) - mu) * is;
                    const double h = static_cast<double>(self.grad.data[idx]) *
                                     static_cast<double>(gp.value.data[static_cast<std::size_t>(c)]);
                    sum_h += h;
                    sum_hx += h * xhat;
                    if (gp.requires_grad)
                        gp.grad.data[static_cast<std::size_t>(c)] += static_cast<T>(static_cast<double>(self.grad.data[idx]) * xhat);
                    if (bp.requires_grad) bp.grad.data[static_cast<std::size_t>(c)] += self.grad.data[idx];
                }
                if (xp.requires_grad) {
                    const double mh = sum_h / static_cast<double>(C);
                    const double mhx = sum_hx / static_cast<double>(C);
                    for (std::int64_t c = 0; c < C; ++c) {
                        const std::int64_t idx = (n * C + c) * spatial + i;
                        const double xhat = (static_cast<double>(xp.value.data[idx]) - mu) * is;
                        const double h = static_cast<double>(self.grad.data[idx]) *
                                         static_cast<double>(gp.value.data[static_cast<std::size_t>(c)]);
                        xp.grad.data[idx] += static_cast<T>(is * (h - mh - xhat * mhx));
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// pooling and smoothing
// ---------------------------------------------------------------------------

// 2x2x2 max pooling with stride 2; odd trailing extents are truncated.
// Gradient routes to the first (lowest linear index) maximum of each window.
template <typename T>
NodePtr<T> maxpool3d(const NodePtr<T>& x) {
    const auto& xs = x->value.shape;
    if (xs[2] < 2 || xs[3] < 2 || xs[4] < 2) {
        throw std::invalid_argument("maxpool3d: spatial dims must be >= 2, got " + shape_str(xs));
    }
    const std::int64_t N = xs[0], C = xs[1];
    const std::int64_t Do = xs[2] / 2, Ho = xs[3] / 2, Wo = xs[4] / 2;
    Tensor5T<T> out({N, C, Do, Ho, Wo});
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.numel()));
    std::int64_t oi = 0;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t z = 0; z < Do; ++z) {
                for (std::int64_t y = 0; y < Ho; ++y) {
                    for (std::int64_t xw = 0; xw < Wo; ++xw, ++oi) {
                        T best = x->value.at(n, c, 2 * z, 2 * y, 2 * xw);
                        std::int64_t best_idx = x->value.index(n, c, 2 * z, 2 * y, 2 * xw);
                        for (std::int64_t dz = 0; dz < 2; ++dz) {
                            for (std::int64_t dy = 0; dy < 2; ++dy) {
                                for (std::int64_t dx = 0; dx < 2; ++dx) {
                                    const T v = x->value.at(n, c, 2 * z + dz, 2 * y + dy, 2 * xw + dx);
                                    if (v > best) {
                                        best = v;
                                        best_idx = x->value.index(n, c, 2 * z + dz, 2 * y + dy, 2 * xw + dx);
                                    }
                                }
                            }
                        }
                        out.data[oi] = best;
                        argmax[static_cast<std::size_t>(oi)] = best_idx;
                    }
                }
            }
        }
    }
    return make_op<T>(std::move(out), "maxpool3d", {x}, [argmax = std::move(argmax)](NodeT<T>& self) {
        auto& xp = *self.parents[0];
        if (!xp.requires_grad) return;
        const std::int64_t n = self.value.numel();
        for (std::int64_t i = 0; i < n; ++i) xp.grad.data[argmax[static_cast<std::size_t>(i)]] += self.grad.data[i];
    });
}

namespace detail {

template <typename T>
std::vector<T> gaussian_kernel1d(double sigma, std::int64_t radius) {
    std::vector<T> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (std::int64_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = static_cast<T>(v);
        sum += v;
    }
    for (auto& v : k) v = static_cast<T>(static_cast<double>(v) / sum);
    return k;
}

// one separable pass along the chosen spatial axis (0=D, 1=H, 2=W), zero padded
template <typename T>
void gaussian_pass(const Tensor5T<T>& in, Tensor5T<T>& out, const std::vector<T>& k, int axis) {
    const auto& s = in.shape;
    const std::int64_t radius = (static_cast<std::int64_t>(k.size()) - 1) / 2;
    const std::int64_t ext[3] = {s[2], s[3], s[4]};
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < s[0]; ++n) {
        for (std::int64_t c = 0; c < s[1]; ++c) {
            for (std::int64_t z = 0; z < ext[0]; ++z) {
                for (std::int64_t y = 0; y < ext[1]; ++y) {
                    for (std::int64_t x = 0; x < ext[2]; ++x) {
                        double acc = 0.0;
                        for (std::int64_t i = -radius; i <= radius; ++i) {
                            std::int64_t p[3] = {z, y, x};
                            p[axis] += i;
                            if (p[axis] < 0 || p[axis] >= ext[axis]) continue;
                            acc += static_cast<double>(k[static_cast<std::size_t>(i + radius)]) *
                                   static_cast<double>(in.at(n, c, p[0], p[1], p[2]));
                        }
                        out.at(n, c, z, y, x) = static_cast<T>(acc);
                    }
                }
            }
        }
    }
}

template <typename T>
Tensor5T<T> gaussian_apply(const Tensor5T<T>& in, const std::vector<T>& k) {
    Tensor5T<T> a(in.shape), b(in.shape);
    gaussian_pass(in, a, k, 2);
    gaussian_pass(a, b, k, 1);
    gaussian_pass(b, a, k, 0);
    return a;
}

}  // namespace detail

// Separable normalized Gaussian smoothing, zero padding. Linear, and the
// kernel is symmetric, so the adjoint is the same filter.
template <typename T>
NodePtr<T> gaussian_filter3d(const NodePtr<T>& x, double sigma, std::int64_t radius) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_filter3d: sigma must be > 0");
    if (radius < 1) throw std::invalid_argument("gaussian_filter3d: radius must be >= 1");
    auto kernel = detail::gaussian_kernel1d<T>(sigma, radius);
    Tensor5T<T> out = detail::gaussian_apply(x->value, kernel);
    return make_op<T>(std::move(out), "gaussian_filter3d", {x}, [kernel = std::move(kernel)](NodeT<T>& self) {
        auto& xp = *self.parents[0];
        if (!xp.requires_grad) return;
        Tensor5T<T> g = detail::gaussian_apply(self.grad, kernel);
        const std::int64_t n = g.numel();
        for (std::int64_t i = 0; i < n; ++i) xp.grad.data[i] += g.data[i];
    });
}

// ---------------------------------------------------------------------------
// channel attention primitives (for transposed-attention blocks)
// ---------------------------------------------------------------------------

// A[n,i,j] = sum_s Q[n,i,s] * K[n,j,s]; result shape (N, C, C, 1, 1)
template <typename T>
NodePtr<T> channel_scores(const NodePtr<T>& q, const NodePtr<T>& k) {
    if (!q->value.same_shape(k->value)) throw std::invalid_argument("channel_scores: shape mismatch");
    const auto& s = q->value.shape;
    const std::int64_t N = s[0], C = s[1], S = s[2] * s[3] * s[4];
    Tensor5T<T> out({N, C, C, 1, 1});
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t i = 0; i < C; ++i) {
            const T* qi = &q->value.data[(n * C + i) * S];
            for (std::int64_t j = 0; j < C; ++j) {
                const T* kj = &k->value.data[(n * C + j) * S];
                double acc = 0.0;
                for (std::int64_t t = 0; t < S; ++t) acc += static_cast<double>(qi[t]) * static_cast<double>(kj[t]);
                out.data[(n * C + i) * C + j] = static_cast<T>(acc);
            }
        }
    }
    return make_op<T>(std::move(out), "channel_scores", {q, k}, [N, C, S](NodeT<T>& self) {
        auto& qp = *self.parents[0];
        auto& kp = *self.parents[1];
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t i = 0; i < C; ++i) {
                for (std::int64_t j = 0; j < C; ++j) {
                    const T g = self.grad.data[(n * C + i) * C + j];
                    if (g == T(0)) continue;
                    if (qp.requires_grad) {
                        T* qg = &qp.grad.data[(n * C + i) * S];
                        const T* kj = &kp.value.data[(n * C + j) * S];
                        for (std::int64_t t = 0; t < S; ++t) qg[t] += g * kj[t];
                    }
                    if (kp.requires_grad) {
                        T* kg = &kp.grad.data[(n * C + j) * S];
                        const T* qi = &qp.value.data[(n * C + i) * S];
                        for (std::int64_t t = 0; t < S; ++t) kg[t] += g * qi[t];
                    }
                }
            }
        }
    });
}

// softmax over the last channel index j of an (N, C, C, 1, 1) score tensor
template <typename T>
NodePtr<T> channel_softmax(const NodePtr<T>& a) {
    const auto& s = a->value.shape;
    if (s[1] != s[2] || s[3] != 1 || s[4] != 1) {
        throw std::invalid_argument("channel_softmax: expected (N,C,C,1,1), got " + shape_str(s));
    }
    const std::int64_t N = s[0], C = s[1];
    Tensor5T<T> out(s);
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t i = 0; i < C; ++i) {
            const T* row = &a->value.data[(n * C + i) * C];
            T* orow = &out.data[(n * C + i) * C];
            T mx = row[0];
            for (std::int64_t j = 1; j < C; ++j) mx = std::max(mx, row[j]);
            double z = 0.0;
            for (std::int64_t j = 0; j < C; ++j) z += std::exp(static_cast<double>(row[j] - mx));
            for (std::int64_t j = 0; j < C; ++j)
                orow[j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / z);
        }
    }
    return make_op<T>(std::move(out), "channel_softmax", {a}, [N, C](NodeT<T>& self) {
        auto& ap = *self.parents[0];
        if (!ap.requires_grad) return;
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t i = 0; i < C; ++i) {
                const T* srow = &self.value.data[(n * C + i) * C];
                const T* grow = &self.grad.data[(n * C + i) * C];
                T* ag = &ap.grad.data[(n * C + i) * C];
                double dot = 0.0;
                for (std::int64_t j = 0; j < C; ++j) dot += static_cast<double>(grow[j]) * static_cast<double>(srow[j]);
                for (std::int64_t j = 0; j < C; ++j)
                    ag[j] += static_cast<T>(static_cast<double>(srow[j]) * (static_cast<double>(grow[j]) - dot));
            }
        }
    });
}

// out[n,i,s] = sum_j A[n,i,j] * V[n,j,s]
template <typename T>
NodePtr<T> channel_mix(const NodePtr<T>& a, const NodePtr<T>& v) {
    const auto& as = a->value.shape;
    const auto& vs = v->value.shape;
    if (as[0] != vs[0] || as[1] != vs[1] || as[2] != vs[1]) {
        throw std::invalid_argument("channel_mix: incompatible shapes " + shape_str(as) + " and " + shape_str(vs));
    }
    const std::int64_t N = vs[0], C = vs[1], S = vs[2] * vs[3] * vs[4];
    Tensor5T<T> out(vs);
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t i = 0; i < C; ++i) {
            T* orow = &out.data[(n * C + i) * S];
            for (std::int64_t t = 0; t < S; ++t) orow[t] = T(0);
            for (std::int64_t j = 0; j < C; ++j) {
                const T aij = a->value.data[(n * C + i) * C + j];
                const T* vj = &v->value.data[(n * C + j) * S];
                for (std::int64_t t = 0; t < S; ++t) orow[t] += aij * vj[t];
            }
        }
    }
    return make_op<T>(std::move(out), "channel_mix", {a, v}, [N, C, S](NodeT<T>& self) {
        auto& ap = *self.parents[0];
        auto& vp = *self.parents[1];
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t i = 0; i < C; ++i) {
                const T* grow = &self.grad.data[(n * C + i) * S];
                for (std::int64_t j = 0; j < C; ++j) {
                    if (ap.requires_grad) {
                        const T* vj = &vp.value.data[(n * C + j) * S];
                        double acc = 0.0;
                        for (std::int64_t t = 0; t < S; ++t)
                            acc += static_cast<double>(grow[t]) * static_cast<double>(vj[t]);
                        ap.grad.data[(n * C + i) * C + j] += static_cast<T>(acc);
                    }
                    if (vp.requires_grad) {
                        const T aij = ap.value.data[(n * C + i) * C + j];
                        T* vg = &vp.grad.data[(n * C + j) * S];
                        for (std::int64_t t = 0; t < S; ++t) vg[t] += aij * grow[t];
                    }
                }
            }
        }
    });
}

}  // namespace upl
