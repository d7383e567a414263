#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "upl/losses.hpp"
#include "upl/nets.hpp"
#include "upl/phantom.hpp"

namespace upl {

// Declarative experiment description, readable from a flat `section.key = value`
// text file. Unknown keys are errors.
struct ExperimentConfig {
    std::string experiment_id = "exp";

    NetworkSpec arch;
    InitScheme arch_init{InitScheme::Name::kKaimingUniform, 1};

    LossKind loss_kind = LossKind::kUpl;
    double loss_lambda = 0.0;
    LossNetSpec lossnet;

    std::vector<double> noise_levels{0.10};
    std::uint64_t noise_seed = 7;

    std::int64_t train_iterations = 2000;
    std::int64_t batch_size = 4;
    std::int64_t crop_size = 32;
    double learning_rate = 0.001;
    std::uint64_t train_seed = 1;
    std::int64_t val_interval = 100;

    PhantomSpec phantom;
    std::int64_t train_count = 24;
    std::int64_t val_count = 6;
    std::int64_t test_count = 8;
    std::string import_dir;  // when set, clean volumes are loaded instead of generated

    SsimParams ssim;
    std::int64_t eval_crop_size = 0;  // 0 = proportional default
    double root_mask_threshold = 0.05;

    std::int64_t sweep_seeds = 3;
    std::string output_dir = "out";

    double train_noise_level() const {
        if (noise_levels.empty()) throw std::invalid_argument("config: noise.levels is empty");
        return noise_levels.front();
    }

    void validate() const;

    // round-trip helpers: serialize resolved values, parse file contents
    std::string to_text() const;
    static ExperimentConfig from_text(const std::string& text);
    static ExperimentConfig load(const std::string& path);
    void save(const std::string& path) const;

    // apply a single `section.key = value` assignment
    void apply(const std::string& key, const std::string& value);
};

}  // namespace upl
