#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "upl/autodiff.hpp"
#include "upl/rng.hpp"

namespace upl {

enum class LayerKind { kConv3d, kRelu, kPrelu, kBatchNorm, kMaxPool };

struct LayerSpec {
    LayerKind kind = LayerKind::kConv3d;
    std::int64_t out_channels = 0;  // conv only
    std::int64_t kernel = 0;        // conv only, odd

    static LayerSpec conv(std::int64_t out_channels, std::int64_t kernel) {
        if (out_channels < 1) throw std::invalid_argument("LayerSpec: out_channels must be >= 1");
        if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("LayerSpec: conv kernel must be odd");
        return {LayerKind::kConv3d, out_channels, kernel};
    }
    static LayerSpec relu() { return {LayerKind::kRelu, 0, 0}; }
    static LayerSpec prelu() { return {LayerKind::kPrelu, 0, 0}; }
    static LayerSpec batchnorm() { return {LayerKind::kBatchNorm, 0, 0}; }
    static LayerSpec maxpool() { return {LayerKind::kMaxPool, 0, 0}; }
};

struct InitScheme {
    enum class Name { kKaimingUniform, kKaimingNormal, kXavierUniform, kXavierNormal, kDefaultUniform };
    Name name = Name::kKaimingUniform;
    std::uint64_t seed = 1;

    static Name parse_name(const std::string& s) {
        if (s == "kaiming-uniform") return Name::kKaimingUniform;
        if (s == "kaiming-normal") return Name::kKaimingNormal;
        if (s == "xavier-uniform") return Name::kXavierUniform;
        if (s == "xavier-normal") return Name::kXavierNormal;
        if (s == "default-uniform") return Name::kDefaultUniform;
        throw std::invalid_argument("unknown init scheme '" + s + "'");
    }
    static std::string name_str(Name n) {
        switch (n) {
            case Name::kKaimingUniform: return "kaiming-uniform";
            case Name::kKaimingNormal: return "kaiming-normal";
            case Name::kXavierUniform: return "xavier-uniform";
            case Name::kXavierNormal: return "xavier-normal";
            case Name::kDefaultUniform: return "default-uniform";
        }
        return "?";
    }
};

// Draws conv weights per scheme; biases are always zero. Draw order is the
// linear tensor order, in double, so (scheme, seed, shape) fully determines
// the result for both dtypes.
template <typename T>
std::pair<Tensor5T<T>, Tensor5T<T>> initialize_weights(std::int64_t out_channels, std::int64_t in_channels,
                                                       std::int64_t kernel, const InitScheme& scheme, Rng& rng) {
    Tensor5T<T> w({out_channels, in_channels, kernel, kernel, kernel});
    Tensor5T<T> b({1, out_channels, 1, 1, 1});
    const double fan_in = static_cast<double>(in_channels * kernel * kernel * kernel);
    const double fan_out = static_cast<double>(out_channels * kernel * kernel * kernel);
    switch (scheme.name) {
        case InitScheme::Name::kKaimingUniform: {
            const double bound = std::sqrt(6.0 / fan_in);  // gain sqrt(2) for ReLU
            for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
            break;
        }
        case InitScheme::Name::kKaimingNormal: {
            const double std_ = std::sqrt(2.0 / fan_in);
            for (auto& v : w.data) v = static_cast<T>(std_ * rng.normal());
            break;
        }
        case InitScheme::Name::kXavierUniform: {
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
            break;
        }
        case InitScheme::Name::kXavierNormal: {
            const double std_ = std::sqrt(2.0 / (fan_in + fan_out));
            for (auto& v : w.data) v = static_cast<T>(std_ * rng.normal());
            break;
        }
        case InitScheme::Name::kDefaultUniform: {
            const double bound = std::sqrt(1.0 / fan_in);  // k = (C_in * prod K_i)^-1
            for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
            break;
        }
    }
    return {std::move(w), std::move(b)};
}

// Ordered layer stack with one parameter record per layer. Frozen nets keep
// every parameter non-trainable and are safe to share across workers.
template <typename T>
struct SequentialNetT {
    struct Layer {
        LayerSpec spec;
        ParameterT<T> weight, bias;    // conv
        ParameterT<T> gamma, beta;     // batchnorm
        ParameterT<T> slope;           // prelu
        BnStateT<T> bn;
    };

    std::vector<Layer> layers;
    std::int64_t in_channels = 1;
    bool frozen = false;

    std::vector<ParameterT<T>*> parameters() {
        std::vector<ParameterT<T>*> out;
        for (auto& l : layers) {
            switch (l.spec.kind) {
                case LayerKind::kConv3d:
                    out.push_back(&l.weight);
                    out.push_back(&l.bias);
                    break;
                case LayerKind::kBatchNorm:
                    out.push_back(&l.gamma);
                    out.push_back(&l.beta);
                    break;
                case LayerKind::kPrelu:
                    out.push_back(&l.slope);
                    break;
                default:
                    break;
            }
        }
        return out;
    }

    // Runs the stack; records the post-op output of every tapped layer index.
    NodePtr<T> forward(const NodePtr<T>& x, Mode mode, const std::set<std::int64_t>& taps = {},
                       std::vector<NodePtr<T>>* tapped = nullptr, bool track_stats = true) {
        for (std::int64_t t : taps) {
            if (t < 0 || t >= static_cast<std::int64_t>(layers.size())) {
                throw std::out_of_range("forward: tap index " + std::to_string(t) + " out of range");
            }
        }
        NodePtr<T> h = x;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            auto& l = layers[i];
            switch (l.spec.kind) {
                case LayerKind::kConv3d:
                    h = conv3d(h, l.weight.node, l.bias.node);
                    break;
                case LayerKind::kRelu:
                    h = relu(h);
                    break;
                case LayerKind::kPrelu:
                    h = prelu(h, l.slope.node);
                    break;
                case LayerKind::kBatchNorm:
                    h = batchnorm3d(h, l.gamma.node, l.beta.node, l.bn, mode, track_stats && mode == Mode::kTrain);
                    break;
                case LayerKind::kMaxPool:
                    h = maxpool3d(h);
                    break;
            }
            if (tapped && taps.count(static_cast<std::int64_t>(i))) tapped->push_back(h);
        }
        return h;
    }

    // Layer indices of every post-activation output (the default tap set).
    std::set<std::int64_t> activation_taps() const {
        std::set<std::int64_t> t;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].spec.kind == LayerKind::kRelu || layers[i].spec.kind == LayerKind::kPrelu) {
                t.insert(static_cast<std::int64_t>(i));
            }
        }
        if (!layers.empty()) t.insert(static_cast<std::int64_t>(layers.size()) - 1);
        return t;
    }
};

// Assembles a sequential net, drawing conv parameters from one generator
// seeded with scheme.seed so the whole net is reproducible.
template <typename T>
SequentialNetT<T> build_sequential(const std::vector<LayerSpec>& specs, const InitScheme& scheme, bool frozen,
                                   std::int64_t in_channels = 1) {
    SequentialNetT<T> net;
    net.in_channels = in_channels;
    net.frozen = frozen;
    Rng rng(scheme.seed);
    std::int64_t channels = in_channels;
    const bool trainable = !frozen;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& s = specs[i];
        typename SequentialNetT<T>::Layer layer;
        layer.spec = s;
        const std::string prefix = "layer" + std::to_string(i);
        switch (s.kind) {
            case LayerKind::kConv3d: {
                auto [w, b] = initialize_weights<T>(s.out_channels, channels, s.kernel, scheme, rng);
                layer.weight = ParameterT<T>(std::move(w), trainable, prefix + ".weight");
                layer.bias = ParameterT<T>(std::move(b), trainable, prefix + ".bias");
                channels = s.out_channels;
                break;
            }
            case LayerKind::kBatchNorm:
                layer.gamma = ParameterT<T>(Tensor5T<T>::full({1, channels, 1, 1, 1}, T(1)), trainable, prefix + ".gamma");
                layer.beta = ParameterT<T>(Tensor5T<T>::zeros({1, channels, 1, 1, 1}), trainable, prefix + ".beta");
                layer.bn = BnStateT<T>(channels);
                break;
            case LayerKind::kPrelu:
                layer.slope =
                    ParameterT<T>(Tensor5T<T>::full({1, channels, 1, 1, 1}, T(0.25)), trainable, prefix + ".slope");
                break;
            default:
                break;
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

}  // namespace upl
