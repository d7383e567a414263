#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "upl/init.hpp"

namespace upl {

struct SsimParams {
    std::int64_t window_radius = 5;  // 11^3 window
    double sigma = 1.5;
    double data_range = 1.0;

    double c1() const { return (0.01 * data_range) * (0.01 * data_range); }
    double c2() const { return (0.03 * data_range) * (0.03 * data_range); }
};

// Untrained loss network description. depth/kernel outside the studied
// ranges are accepted but flagged.
struct LossNetSpec {
    std::int64_t depth = 3;
    std::int64_t kernel = 3;
    std::int64_t width = 32;
    std::set<std::int64_t> pool_after;  // 1-based conv indices
    InitScheme init{InitScheme::Name::kXavierNormal, 1};
    std::set<std::int64_t> taps;  // 1-based conv indices; empty = every post-activation

    bool nonstandard() const {
        const bool d = depth == 3 || depth == 5 || depth == 7 || depth == 9 || depth == 13;
        const bool k = kernel == 3 || kernel == 5 || kernel == 7 || kernel == 9;
        return !(d && k);
    }

    void validate() const {
        if (depth < 1) throw std::invalid_argument("LossNetSpec: depth must be >= 1");
        if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("LossNetSpec: kernel must be odd");
        if (width < 1) throw std::invalid_argument("LossNetSpec: width must be >= 1");
        for (auto p : pool_after) {
            if (p < 1 || p >= depth) {
                throw std::invalid_argument("LossNetSpec: pool index " + std::to_string(p) +
                                            " must satisfy 1 <= index < depth");
            }
        }
        for (auto t : taps) {
            if (t < 1 || t > depth) throw std::invalid_argument("LossNetSpec: tap index out of range");
        }
    }
};

// depth x [conv(width, kernel) + ReLU] with max-pooling after the listed conv
// indices; every parameter frozen.
template <typename T>
SequentialNetT<T> build_upl_net(const LossNetSpec& spec) {
    spec.validate();
    std::vector<LayerSpec> layers;
    for (std::int64_t i = 1; i <= spec.depth; ++i) {
        layers.push_back(LayerSpec::conv(spec.width, spec.kernel));
        layers.push_back(LayerSpec::relu());
        if (spec.pool_after.count(i)) layers.push_back(LayerSpec::maxpool());
    }
    return build_sequential<T>(layers, spec.init, /*frozen=*/true, /*in_channels=*/1);
}

// Raw layer indices of the post-ReLU outputs selected by 1-based conv taps.
template <typename T>
std::set<std::int64_t> resolve_taps(const SequentialNetT<T>& net, const std::set<std::int64_t>& conv_taps) {
    std::set<std::int64_t> raw;
    std::int64_t conv_seen = 0;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].spec.kind == LayerKind::kConv3d) {
            ++conv_seen;
            std::size_t j = i;
            if (j + 1 < net.layers.size() && net.layers[j + 1].spec.kind == LayerKind::kRelu) ++j;
            if (conv_taps.empty() || conv_taps.count(conv_seen)) raw.insert(static_cast<std::int64_t>(j));
        }
    }
    return raw;
}

template <typename T>
NodePtr<T> l1_loss(const NodePtr<T>& pred, const Tensor5T<T>& target) {
    if (pred->value.shape != target.shape) {
        throw std::invalid_argument("l1_loss: shape mismatch " + shape_str(pred->value.shape) + " vs " +
                                    shape_str(target.shape));
    }
    return reduce(map(zip(pred, constant(target), ZipKind::kSub), MapKind::kAbs), ReduceKind::kMean);
}

// Windowed SSIM with Gaussian local statistics, averaged over the volume.
template <typename T>
NodePtr<T> ssim_index(const NodePtr<T>& x, const Tensor5T<T>& y_value, const SsimParams& p) {
    if (x->value.shape != y_value.shape) {
        throw std::invalid_argument("ssim_index: shape mismatch " + shape_str(x->value.shape) + " vs " +
                                    shape_str(y_value.shape));
    }
    auto y = constant(y_value);
    const double r = p.window_radius;
    auto blur = [&](const NodePtr<T>& t) { return gaussian_filter3d(t, p.sigma, static_cast<std::int64_t>(r)); };

    auto mu_x = blur(x);
    auto mu_y = blur(y);
    auto mu_xx = zip(mu_x, mu_x, ZipKind::kMul);
    auto mu_yy = zip(mu_y, mu_y, ZipKind::kMul);
    auto mu_xy = zip(mu_x, mu_y, ZipKind::kMul);
    auto var_x = zip(blur(zip(x, x, ZipKind::kMul)), mu_xx, ZipKind::kSub);
    auto var_y = zip(blur(zip(y, y, ZipKind::kMul)), mu_yy, ZipKind::kSub);
    auto cov = zip(blur(zip(x, y, ZipKind::kMul)), mu_xy, ZipKind::kSub);

    auto num = zip(map(map(mu_xy, MapKind::kScale, 2.0), MapKind::kShift, p.c1()),
                   map(map(cov, MapKind::kScale, 2.0), MapKind::kShift, p.c2()), ZipKind::kMul);
    auto den = zip(map(zip(mu_xx, mu_yy, ZipKind::kAdd), MapKind::kShift, p.c1()),
                   map(zip(var_x, var_y, ZipKind::kAdd), MapKind::kShift, p.c2()), ZipKind::kMul);
    return reduce(zip(num, den, ZipKind::kDiv), ReduceKind::kMean);
}

template <typename T>
NodePtr<T> ssim_loss(const NodePtr<T>& pred, const Tensor5T<T>& target, const SsimParams& p) {
    return map(map(ssim_index(pred, target, p), MapKind::kScale, -1.0), MapKind::kShift, 1.0);
}

// Sum over tapped layers of mean squared feature distance. The per-layer
// normalizer is C_j*D_j*H_j*W_j with the distance averaged over batch, which
// is exactly the elementwise mean. Gradient flows only to pred.
template <typename T>
NodePtr<T> upl_loss(const NodePtr<T>& pred, const Tensor5T<T>& target, SequentialNetT<T>& net,
                    const std::set<std::int64_t>& conv_taps = {}) {
    if (pred->value.shape != target.shape) {
        throw std::invalid_argument("upl_loss: shape mismatch");
    }
    std::set<std::int64_t> raw = resolve_taps(net, conv_taps);
    NodePtr<T> total;
    if (net.layers.empty()) {
        // identity network: phi(x) = x, so the loss is the volumewise MSE
        auto diff = zip(pred, constant(target), ZipKind::kSub);
        total = reduce(map(diff, MapKind::kSquare), ReduceKind::kMean);
        return total;
    }
    if (raw.empty()) throw std::invalid_argument("upl_loss: empty tap set");

    std::vector<NodePtr<T>> feats_pred, feats_tgt;
    net.forward(pred, Mode::kEval, raw, &feats_pred);
    net.forward(constant(target), Mode::kEval, raw, &feats_tgt);
    for (std::size_t j = 0; j < feats_pred.size(); ++j) {
        auto diff = zip(feats_pred[j], feats_tgt[j], ZipKind::kSub);
        auto term = reduce(map(diff, MapKind::kSquare), ReduceKind::kMean);
        total = total ? zip(total, term, ZipKind::kAdd) : term;
    }
    return total;
}

enum class LossKind { kL1, kSsim, kUpl, kUplPlusL1 };

inline LossKind parse_loss_kind(const std::string& s) {
    if (s == "l1") return LossKind::kL1;
    if (s == "ssim") return LossKind::kSsim;
    if (s == "upl") return LossKind::kUpl;
    if (s == "upl+l1" || s == "upl_l1") return LossKind::kUplPlusL1;
    throw std::invalid_argument("unknown loss kind '" + s + "'");
}

inline std::string loss_kind_str(LossKind k) {
    switch (k) {
        case LossKind::kL1: return "l1";
        case LossKind::kSsim: return "ssim";
        case LossKind::kUpl: return "upl";
        case LossKind::kUplPlusL1: return "upl+l1";
    }
    return "?";
}

template <typename T>
using LossFn = std::function<NodePtr<T>(const NodePtr<T>&, const Tensor5T<T>&)>;

// Uniform (pred, target) -> scalar node interface over all loss families.
// The returned callable shares `net`, which must outlive it.
template <typename T>
LossFn<T> make_loss(LossKind kind, const SsimParams& ssim_params, SequentialNetT<T>* net,
                    const std::set<std::int64_t>& taps = {}, double lambda = 0.0) {
    switch (kind) {
        case LossKind::kL1:
            return [](const NodePtr<T>& p, const Tensor5T<T>& t) { return l1_loss(p, t); };
        case LossKind::kSsim:
            return [ssim_params](const NodePtr<T>& p, const Tensor5T<T>& t) { return ssim_loss(p, t, ssim_params); };
        case LossKind::kUpl:
            if (!net) throw std::invalid_argument("make_loss: upl requires a loss network");
            return [net, taps](const NodePtr<T>& p, const Tensor5T<T>& t) { return upl_loss(p, t, *net, taps); };
        case LossKind::kUplPlusL1:
            if (!net) throw std::invalid_argument("make_loss: upl+l1 requires a loss network");
            return [net, taps, lambda](const NodePtr<T>& p, const Tensor5T<T>& t) {
                auto u = upl_loss(p, t, *net, taps);
                if (lambda == 0.0) return u;
                return zip(u, map(l1_loss(p, t), MapKind::kScale, lambda), ZipKind::kAdd);
            };
    }
    throw std::invalid_argument("make_loss: unknown kind");
}

}  // namespace upl
