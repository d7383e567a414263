#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "upl/config.hpp"
#include "upl/metrics.hpp"
#include "upl/nets.hpp"

namespace upl {

struct AdamParams {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First and second moment estimates, one pair per trainable parameter, plus
// the shared step counter.
template <typename T>
struct AdamStateT {
    std::vector<Tensor5T<T>> m, v;
    std::int64_t step = 0;
};

// Standard bias-corrected Adam update over the trainable parameters; frozen
// parameters are untouched. Gradients must be materialized for every
// trainable parameter.
template <typename T>
void adam_step(std::vector<ParameterT<T>*>& params, AdamStateT<T>& state, const AdamParams& p) {
    std::vector<ParameterT<T>*> trainable;
    for (auto* q : params) {
        if (q->trainable) trainable.push_back(q);
    }
    if (state.m.empty()) {
        for (auto* q : trainable) {
            state.m.push_back(Tensor5T<T>::zeros(q->value().shape));
            state.v.push_back(Tensor5T<T>::zeros(q->value().shape));
        }
    }
    if (state.m.size() != trainable.size()) throw std::invalid_argument("adam_step: parameter count changed");
    ++state.step;
    const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < trainable.size(); ++i) {
        auto* q = trainable[i];
        if (!q->node->has_grad()) {
            throw std::invalid_argument("adam_step: missing gradient for parameter '" + q->name + "'");
        }
        if (!q->node->grad.same_shape(q->value())) throw std::invalid_argument("adam_step: gradient shape mismatch");
        auto& m = state.m[i];
        auto& v = state.v[i];
        const std::int64_t n = q->value().numel();
        for (std::int64_t j = 0; j < n; ++j) {
            const double g = static_cast<double>(q->node->grad.data[j]);
            const double mj = p.beta1 * static_cast<double>(m.data[j]) + (1.0 - p.beta1) * g;
            const double vj = p.beta2 * static_cast<double>(v.data[j]) + (1.0 - p.beta2) * g * g;
            m.data[j] = static_cast<T>(mj);
            v.data[j] = static_cast<T>(vj);
            const double update = p.lr * (mj / bc1) / (std::sqrt(vj / bc2) + p.eps);
            q->value().data[j] = static_cast<T>(static_cast<double>(q->value().data[j]) - update);
        }
    }
}

struct Dataset {
    std::vector<Volume> train_clean, train_noisy;
    std::vector<Volume> val_clean, val_noisy;
    std::vector<Volume> test_clean, test_noisy;
};

// Generates (or imports) the clean volumes and corrupts them at the given
// level. Fully determined by the config seeds.
Dataset build_dataset(const ExperimentConfig& cfg, double noise_level);

struct TrainLogRow {
    std::int64_t step = 0;
    double loss = 0.0;
    std::optional<double> val_ssim;
};

struct TrainResult {
    std::unique_ptr<NetworkT<float>> net;  // restored to the best-validation state
    std::vector<TrainLogRow> log;
    double best_val_ssim = 0.0;
    std::int64_t best_step = 0;
    std::string lossnet_sha_before;  // empty unless the loss uses a frozen net
    std::string lossnet_sha_after;
    std::string lossnet_bytes;  // serialized frozen loss network
};

// The spec'd loop: sample paired random crops, forward, loss, backward, Adam;
// validation SSIM on fixed center crops every val_interval steps; the best
// validation checkpoint is retained.
TrainResult train(const ExperimentConfig& cfg, const Dataset& ds);

// Denoise every test volume and emit full-volume plus center-region records.
// For root-family data the center-region MSE is restricted to voxels where
// the clean crop exceeds cfg.root_mask_threshold.
std::vector<MetricsRecord> evaluate(NetworkT<float>& net, const Dataset& ds, const ExperimentConfig& cfg,
                                    double noise_level);

void write_train_log(const std::vector<TrainLogRow>& log, const std::string& path);

}  // namespace upl
