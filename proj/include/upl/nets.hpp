#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "upl/init.hpp"
#include "upl/volume.hpp"

namespace upl {

enum class ArchKind { kDncnn, kResnet, kRestormer3d };

inline ArchKind parse_arch_kind(const std::string& s) {
    if (s == "dncnn") return ArchKind::kDncnn;
    if (s == "resnet") return ArchKind::kResnet;
    if (s == "restormer3d") return ArchKind::kRestormer3d;
    throw std::invalid_argument("unknown architecture '" + s + "'");
}

inline std::string arch_kind_str(ArchKind a) {
    switch (a) {
        case ArchKind::kDncnn: return "dncnn";
        case ArchKind::kResnet: return "resnet";
        case ArchKind::kRestormer3d: return "restormer3d";
    }
    return "?";
}

struct NetworkSpec {
    ArchKind arch = ArchKind::kDncnn;
    std::int64_t base_channels = 0;  // 0 = arch default (64 dncnn/resnet, 32 restormer3d)
    std::int64_t blocks = 0;         // 0 = arch default (3 dncnn, 5 resnet, 4 restormer3d)

    std::int64_t channels() const {
        if (base_channels > 0) return base_channels;
        return arch == ArchKind::kRestormer3d ? 32 : 64;
    }
    std::int64_t block_count() const {
        if (blocks > 0) return blocks;
        switch (arch) {
            case ArchKind::kDncnn: return 3;
            case ArchKind::kResnet: return 5;
            case ArchKind::kRestormer3d: return 4;
        }
        return 1;
    }
    void validate() const {
        if (base_channels < 0 || blocks < 0) throw std::invalid_argument("NetworkSpec: counts must be >= 1");
    }
};

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor5T<T> value;
};

// Common surface of the denoising networks.
template <typename T>
class NetworkT {
  public:
    virtual ~NetworkT() = default;
    virtual NodePtr<T> forward(const NodePtr<T>& x, Mode mode, bool track_stats = true) = 0;
    virtual std::vector<ParameterT<T>*> parameters() = 0;
    virtual std::string arch_name() const = 0;
    virtual std::vector<NamedTensor<T>> state_tensors() = 0;
    virtual void load_state_tensors(const std::vector<NamedTensor<T>>& tensors) = 0;
};

namespace detail {

template <typename T>
void assign_named(std::vector<std::pair<std::string, Tensor5T<T>*>>& refs, const std::vector<NamedTensor<T>>& tensors,
                  const std::string& what) {
    if (tensors.size() != refs.size()) {
        throw std::runtime_error(what + ": checkpoint has " + std::to_string(tensors.size()) + " tensors, expected " +
                                 std::to_string(refs.size()));
    }
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (tensors[i].name != refs[i].first) {
            throw std::runtime_error(what + ": tensor name '" + tensors[i].name + "' does not match expected '" +
                                     refs[i].first + "'");
        }
        if (tensors[i].value.shape != refs[i].second->shape) {
            throw std::runtime_error(what + ": shape mismatch for '" + tensors[i].name + "'");
        }
        *refs[i].second = tensors[i].value;
    }
}

}  // namespace detail

// State tensors of a sequential net, including batch-norm running statistics
// (the tracked batch count rides along as a scalar tensor).
template <typename T>
std::vector<std::pair<std::string, Tensor5T<T>*>> seq_tensor_refs(SequentialNetT<T>& net) {
    std::vector<std::pair<std::string, Tensor5T<T>*>> refs;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        auto& l = net.layers[i];
        const std::string prefix = "layer" + std::to_string(i);
        switch (l.spec.kind) {
            case LayerKind::kConv3d:
                refs.emplace_back(prefix + ".weight", &l.weight.value());
                refs.emplace_back(prefix + ".bias", &l.bias.value());
                break;
            case LayerKind::kBatchNorm:
                refs.emplace_back(prefix + ".gamma", &l.gamma.value());
                refs.emplace_back(prefix + ".beta", &l.beta.value());
                refs.emplace_back(prefix + ".running_mean", &l.bn.running_mean);
                refs.emplace_back(prefix + ".running_var", &l.bn.running_var);
                break;
            case LayerKind::kPrelu:
                refs.emplace_back(prefix + ".slope", &l.slope.value());
                break;
            default:
                break;
        }
    }
    return refs;
}

template <typename T>
std::vector<NamedTensor<T>> seq_state_tensors(SequentialNetT<T>& net) {
    std::vector<NamedTensor<T>> out;
    for (auto& [name, t] : seq_tensor_refs(net)) out.push_back({name, *t});
    // batch-norm batches_tracked, one scalar per bn layer
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].spec.kind == LayerKind::kBatchNorm) {
            out.push_back({"layer" + std::to_string(i) + ".batches",
                           Tensor5T<T>::scalar_tensor(static_cast<T>(net.layers[i].bn.batches_tracked))});
        }
    }
    return out;
}

template <typename T>
void seq_load_state_tensors(SequentialNetT<T>& net, const std::vector<NamedTensor<T>>& tensors) {
    auto refs = seq_tensor_refs(net);
    std::vector<NamedTensor<T>> plain(tensors.begin(), tensors.begin() + static_cast<std::ptrdiff_t>(refs.size()));
    detail::assign_named(refs, plain, "sequential net");
    std::size_t extra = refs.size();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].spec.kind == LayerKind::kBatchNorm) {
            if (extra >= tensors.size()) throw std::runtime_error("sequential net: missing batch counters");
            net.layers[i].bn.batches_tracked = static_cast<std::int64_t>(tensors[extra++].value.scalar());
        }
    }
}

// ---------------------------------------------------------------------------
// DnCNN: conv+ReLU, `blocks` x [conv+ReLU+BN], final 1-channel conv
// ---------------------------------------------------------------------------

template <typename T>
class DncnnT final : public NetworkT<T> {
  public:
    DncnnT(const NetworkSpec& spec, const InitScheme& scheme) {
        spec.validate();
        const std::int64_t c = spec.channels();
        std::vector<LayerSpec> layers;
        layers.push_back(LayerSpec::conv(c, 3));
        layers.push_back(LayerSpec::relu());
        for (std::int64_t b = 0; b < spec.block_count(); ++b) {
            layers.push_back(LayerSpec::conv(c, 3));
            layers.push_back(LayerSpec::relu());
            layers.push_back(LayerSpec::batchnorm());
        }
        layers.push_back(LayerSpec::conv(1, 3));
        net_ = build_sequential<T>(layers, scheme, /*frozen=*/false, /*in_channels=*/1);
    }

    NodePtr<T> forward(const NodePtr<T>& x, Mode mode, bool track_stats = true) override {
        return net_.forward(x, mode, {}, nullptr, track_stats);
    }
    std::vector<ParameterT<T>*> parameters() override { return net_.parameters(); }
    std::string arch_name() const override { return "dncnn"; }
    std::vector<NamedTensor<T>> state_tensors() override { return seq_state_tensors(net_); }
    void load_state_tensors(const std::vector<NamedTensor<T>>& tensors) override {
        seq_load_state_tensors(net_, tensors);
    }

    SequentialNetT<T>& sequential() { return net_; }

  private:
    SequentialNetT<T> net_;
};

// ---------------------------------------------------------------------------
// ResNet: conv(k9)+PReLU, `blocks` x [conv+BN+PReLU with identity skip],
// conv+BN+PReLU, final 1-channel conv
// ---------------------------------------------------------------------------

template <typename T>
class ResnetT final : public NetworkT<T> {
  public:
    ResnetT(const NetworkSpec& spec, const InitScheme& scheme) {
        spec.validate();
        const std::int64_t c = spec.channels();
        Rng rng(scheme.seed);
        auto conv_param = [&](const std::string& name, std::int64_t cout, std::int64_t cin, std::int64_t k) {
            auto [w, b] = initialize_weights<T>(cout, cin, k, scheme, rng);
            return std::pair{ParameterT<T>(std::move(w), true, name + ".weight"),
                             ParameterT<T>(std::move(b), true, name + ".bias")};
        };
        auto prelu_param = [&](const std::string& name, std::int64_t channels) {
            return ParameterT<T>(Tensor5T<T>::full({1, channels, 1, 1, 1}, T(0.25)), true, name + ".slope");
        };
        auto bn_params = [&](const std::string& name, std::int64_t channels) {
            return Bn{ParameterT<T>(Tensor5T<T>::full({1, channels, 1, 1, 1}, T(1)), true, name + ".gamma"),
                      ParameterT<T>(Tensor5T<T>::zeros({1, channels, 1, 1, 1}), true, name + ".beta"),
                      BnStateT<T>(channels)};
        };

        std::tie(head_w_, head_b_) = conv_param("head", c, 1, 9);
        head_slope_ = prelu_param("head", c);
        for (std::int64_t b = 0; b < spec.block_count(); ++b) {
            const std::string name = "block" + std::to_string(b);
            Block blk;
            std::tie(blk.w, blk.b) = conv_param(name, c, c, 3);
            blk.bn = bn_params(name, c);
            blk.slope = prelu_param(name, c);
            blocks_.push_back(std::move(blk));
        }
        std::tie(post_w_, post_b_) = conv_param("post", c, c, 3);
        post_bn_ = bn_params("post", c);
        post_slope_ = prelu_param("post", c);
        std::tie(tail_w_, tail_b_) = conv_param("tail", 1, c, 3);
    }

    NodePtr<T> forward(const NodePtr<T>& x, Mode mode, bool track_stats = true) override {
        auto h = prelu(conv3d(x, head_w_.node, head_b_.node), head_slope_.node);
        for (auto& blk : blocks_) {
            auto branch = prelu(batchnorm3d(conv3d(h, blk.w.node, blk.b.node), blk.bn.gamma.node, blk.bn.beta.node,
                                            blk.bn.state, mode, track_stats && mode == Mode::kTrain),
                                blk.slope.node);
            h = zip(h, branch, ZipKind::kAdd);
        }
        h = prelu(batchnorm3d(conv3d(h, post_w_.node, post_b_.node), post_bn_.gamma.node, post_bn_.beta.node,
                              post_bn_.state, mode, track_stats && mode == Mode::kTrain),
                  post_slope_.node);
        return conv3d(h, tail_w_.node, tail_b_.node);
    }

    std::vector<ParameterT<T>*> parameters() override {
        std::vector<ParameterT<T>*> out{&head_w_, &head_b_, &head_slope_};
        for (auto& blk : blocks_) {
            out.push_back(&blk.w);
            out.push_back(&blk.b);
            out.push_back(&blk.bn.gamma);
            out.push_back(&blk.bn.beta);
            out.push_back(&blk.slope);
        }
        out.push_back(&post_w_);
        out.push_back(&post_b_);
        out.push_back(&post_bn_.gamma);
        out.push_back(&post_bn_.beta);
        out.push_back(&post_slope_);
        out.push_back(&tail_w_);
        out.push_back(&tail_b_);
        return out;
    }
    std::string arch_name() const override { return "resnet"; }

    std::vector<NamedTensor<T>> state_tensors() override {
        std::vector<NamedTensor<T>> out;
        for (auto* p : parameters()) out.push_back({p->name, p->value()});
        auto push_bn = [&](const std::string& name, Bn& bn) {
            out.push_back({name + ".running_mean", bn.state.running_mean});
            out.push_back({name + ".running_var", bn.state.running_var});
            out.push_back({name + ".batches", Tensor5T<T>::scalar_tensor(static_cast<T>(bn.state.batches_tracked))});
        };
        for (std::size_t b = 0; b < blocks_.size(); ++b) push_bn("block" + std::to_string(b), blocks_[b].bn);
        push_bn("post", post_bn_);
        return out;
    }

    void load_state_tensors(const std::vector<NamedTensor<T>>& tensors) override {
        auto params = parameters();
        std::vector<std::pair<std::string, Tensor5T<T>*>> refs;
        for (auto* p : params) refs.emplace_back(p->name, &p->value());
        auto add_bn = [&](const std::string& name, Bn& bn) {
            refs.emplace_back(name + ".running_mean", &bn.state.running_mean);
            refs.emplace_back(name + ".running_var", &bn.state.running_var);
        };
        for (std::size_t b = 0; b < blocks_.size(); ++b) add_bn("block" + std::to_string(b), blocks_[b].bn);
        add_bn("post", post_bn_);

        std::vector<NamedTensor<T>> plain;
        std::vector<NamedTensor<T>> counters;
        for (const auto& t : tensors) {
            if (t.name.size() > 8 && t.name.compare(t.name.size() - 8, 8, ".batches") == 0) counters.push_back(t);
            else plain.push_back(t);
        }
        // interleave: counters follow their running stats in state_tensors order
        std::vector<NamedTensor<T>> ordered;
        for (const auto& t : plain) ordered.push_back(t);
        detail::assign_named(refs, ordered, "resnet");
        std::size_t ci = 0;
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            blocks_[b].bn.state.batches_tracked = static_cast<std::int64_t>(counters.at(ci++).value.scalar());
        }
        post_bn_.state.batches_tracked = static_cast<std::int64_t>(counters.at(ci++).value.scalar());
    }

  private:
    struct Bn {
        ParameterT<T> gamma, beta;
        BnStateT<T> state;
    };
    struct Block {
        ParameterT<T> w, b;
        Bn bn;
        ParameterT<T> slope;
    };

    ParameterT<T> head_w_, head_b_, head_slope_;
    std::vector<Block> blocks_;
    ParameterT<T> post_w_, post_b_;
    Bn post_bn_;
    ParameterT<T> post_slope_;
    ParameterT<T> tail_w_, tail_b_;
};

// ---------------------------------------------------------------------------
// Sequential 3D Restormer: embedding conv, `blocks` x [LN + transposed
// channel attention, LN + gated feed-forward], final 1-channel conv.
// ---------------------------------------------------------------------------

template <typename T>
class Restormer3dT final : public NetworkT<T> {
  public:
    Restormer3dT(const NetworkSpec& spec, const InitScheme& scheme) {
        spec.validate();
        channels_ = spec.channels();
        Rng rng(scheme.seed);
        auto conv_param = [&](const std::string& name, std::int64_t cout, std::int64_t cin, std::int64_t k,
                              bool zero_init = false) {
            auto [w, b] = initialize_weights<T>(cout, cin, k, scheme, rng);
            if (zero_init) w.fill(T(0));
            return std::pair{ParameterT<T>(std::move(w), true, name + ".weight"),
                             ParameterT<T>(std::move(b), true, name + ".bias")};
        };
        auto dw_param = [&](const std::string& name, std::int64_t channels) {
            auto [w, b] = initialize_weights<T>(channels, 1, 3, scheme, rng);
            return std::pair{ParameterT<T>(std::move(w), true, name + ".weight"),
                             ParameterT<T>(std::move(b), true, name + ".bias")};
        };
        auto affine = [&](const std::string& name, std::int64_t channels) {
            return std::pair{ParameterT<T>(Tensor5T<T>::full({1, channels, 1, 1, 1}, T(1)), true, name + ".gamma"),
                             ParameterT<T>(Tensor5T<T>::zeros({1, channels, 1, 1, 1}), true, name + ".beta")};
        };

        std::tie(embed_w_, embed_b_) = conv_param("embed", channels_, 1, 3);
        for (std::int64_t b = 0; b < spec.block_count(); ++b) {
            const std::string name = "block" + std::to_string(b);
            Block blk;
            std::tie(blk.ln1_gamma, blk.ln1_beta) = affine(name + ".ln1", channels_);
            std::tie(blk.q_pw_w, blk.q_pw_b) = conv_param(name + ".q_pw", channels_, channels_, 1);
            std::tie(blk.q_dw_w, blk.q_dw_b) = dw_param(name + ".q_dw", channels_);
            std::tie(blk.k_pw_w, blk.k_pw_b) = conv_param(name + ".k_pw", channels_, channels_, 1);
            std::tie(blk.k_dw_w, blk.k_dw_b) = dw_param(name + ".k_dw", channels_);
            std::tie(blk.v_pw_w, blk.v_pw_b) = conv_param(name + ".v_pw", channels_, channels_, 1);
            std::tie(blk.v_dw_w, blk.v_dw_b) = dw_param(name + ".v_dw", channels_);
            blk.tau = ParameterT<T>(Tensor5T<T>::scalar_tensor(T(1)), true, name + ".tau");
            // zero-initialized projections: every block starts as an identity
            std::tie(blk.proj_w, blk.proj_b) = conv_param(name + ".proj", channels_, channels_, 1, /*zero_init=*/true);
            std::tie(blk.ln2_gamma, blk.ln2_beta) = affine(name + ".ln2", channels_);
            std::tie(blk.ff_gate_w, blk.ff_gate_b) = conv_param(name + ".ff_gate", channels_, channels_, 1, /*zero_init=*/true);
            std::tie(blk.ff_act_w, blk.ff_act_b) = conv_param(name + ".ff_act", channels_, channels_, 1);
            blocks_.push_back(std::move(blk));
        }
        std::tie(tail_w_, tail_b_) = conv_param("tail", 1, channels_, 3);
    }

    NodePtr<T> forward(const NodePtr<T>& x, Mode mode, bool track_stats = true) override {
        (void)mode;
        (void)track_stats;
        attention_taps_.clear();
        auto h = conv3d(x, embed_w_.node, embed_b_.node);
        const auto& s = h->value.shape;
        const double scaling = std::sqrt(static_cast<double>(s[2] * s[3] * s[4]));
        for (auto& blk : blocks_) {
            auto pre = layernorm_channels(h, blk.ln1_gamma.node, blk.ln1_beta.node);
            auto q = depthwise_conv3d(conv3d(pre, blk.q_pw_w.node, blk.q_pw_b.node), blk.q_dw_w.node, blk.q_dw_b.node);
            auto k = depthwise_conv3d(conv3d(pre, blk.k_pw_w.node, blk.k_pw_b.node), blk.k_dw_w.node, blk.k_dw_b.node);
            auto v = depthwise_conv3d(conv3d(pre, blk.v_pw_w.node, blk.v_pw_b.node), blk.v_dw_w.node, blk.v_dw_b.node);
            auto scores = map(mul_scalar(channel_scores(q, k), blk.tau.node), MapKind::kScale, 1.0 / scaling);
            auto attn = channel_softmax(scores);
            if (record_attention) attention_taps_.push_back(attn);
            auto mixed = channel_mix(attn, v);
            auto projected = conv3d(mixed, blk.proj_w.node, blk.proj_b.node);
            h = zip(h, projected, ZipKind::kAdd);

            auto pre2 = layernorm_channels(h, blk.ln2_gamma.node, blk.ln2_beta.node);
            auto gate = conv3d(pre2, blk.ff_gate_w.node, blk.ff_gate_b.node);
            auto act = gelu(conv3d(pre2, blk.ff_act_w.node, blk.ff_act_b.node));
            h = zip(h, zip(gate, act, ZipKind::kMul), ZipKind::kAdd);
        }
        return conv3d(h, tail_w_.node, tail_b_.node);
    }

    std::vector<ParameterT<T>*> parameters() override {
        std::vector<ParameterT<T>*> out{&embed_w_, &embed_b_};
        for (auto& blk : blocks_) {
            for (auto* p : {&blk.ln1_gamma, &blk.ln1_beta, &blk.q_pw_w, &blk.q_pw_b, &blk.q_dw_w, &blk.q_dw_b,
                            &blk.k_pw_w, &blk.k_pw_b, &blk.k_dw_w, &blk.k_dw_b, &blk.v_pw_w, &blk.v_pw_b,
                            &blk.v_dw_w, &blk.v_dw_b, &blk.tau, &blk.proj_w, &blk.proj_b, &blk.ln2_gamma,
                            &blk.ln2_beta, &blk.ff_gate_w, &blk.ff_gate_b, &blk.ff_act_w, &blk.ff_act_b}) {
                out.push_back(p);
            }
        }
        out.push_back(&tail_w_);
        out.push_back(&tail_b_);
        return out;
    }
    std::string arch_name() const override { return "restormer3d"; }

    std::vector<NamedTensor<T>> state_tensors() override {
        std::vector<NamedTensor<T>> out;
        for (auto* p : parameters()) out.push_back({p->name, p->value()});
        return out;
    }
    void load_state_tensors(const std::vector<NamedTensor<T>>& tensors) override {
        auto params = parameters();
        std::vector<std::pair<std::string, Tensor5T<T>*>> refs;
        for (auto* p : params) refs.emplace_back(p->name, &p->value());
        detail::assign_named(refs, tensors, "restormer3d");
    }

    bool record_attention = false;
    const std::vector<NodePtr<T>>& attention_taps() const { return attention_taps_; }

  private:
    struct Block {
        ParameterT<T> ln1_gamma, ln1_beta;
        ParameterT<T> q_pw_w, q_pw_b, q_dw_w, q_dw_b;
        ParameterT<T> k_pw_w, k_pw_b, k_dw_w, k_dw_b;
        ParameterT<T> v_pw_w, v_pw_b, v_dw_w, v_dw_b;
        ParameterT<T> tau;
        ParameterT<T> proj_w, proj_b;
        ParameterT<T> ln2_gamma, ln2_beta;
        ParameterT<T> ff_gate_w, ff_gate_b, ff_act_w, ff_act_b;
    };

    std::int64_t channels_ = 32;
    ParameterT<T> embed_w_, embed_b_;
    std::vector<Block> blocks_;
    ParameterT<T> tail_w_, tail_b_;
    std::vector<NodePtr<T>> attention_taps_;
};

template <typename T>
std::unique_ptr<NetworkT<T>> build_dncnn(const NetworkSpec& spec, const InitScheme& scheme) {
    return std::make_unique<DncnnT<T>>(spec, scheme);
}

template <typename T>
std::unique_ptr<NetworkT<T>> build_resnet(const NetworkSpec& spec, const InitScheme& scheme) {
    return std::make_unique<ResnetT<T>>(spec, scheme);
}

template <typename T>
std::unique_ptr<NetworkT<T>> build_restormer3d(const NetworkSpec& spec, const InitScheme& scheme) {
    return std::make_unique<Restormer3dT<T>>(spec, scheme);
}

template <typename T>
std::unique_ptr<NetworkT<T>> build_network(const NetworkSpec& spec, const InitScheme& scheme) {
    switch (spec.arch) {
        case ArchKind::kDncnn: return build_dncnn<T>(spec, scheme);
        case ArchKind::kResnet: return build_resnet<T>(spec, scheme);
        case ArchKind::kRestormer3d: return build_restormer3d<T>(spec, scheme);
    }
    throw std::invalid_argument("build_network: unknown architecture");
}

// Inference wrapper: eval-mode forward on the wrapped volume, output clamped
// to [0,1].
template <typename T>
Volume denoise(NetworkT<T>& net, const Volume& volume) {
    if (!volume.all_finite()) throw std::invalid_argument("denoise: volume contains non-finite values");
    auto x = constant(volume.to_tensor<T>());
    auto y = net.forward(x, Mode::kEval, /*track_stats=*/false);
    Volume out = Volume::from_tensor(y->value);
    out.voxel_size = volume.voxel_size;
    for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

}  // namespace upl
