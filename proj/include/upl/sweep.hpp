#pragma once

#include <string>
#include <vector>

#include "upl/train.hpp"

namespace upl {

enum class SweepAxis { kLossComparison, kSeed, kDepthKernel, kPooling, kArchNoise };

SweepAxis parse_sweep_axis(const std::string& s);
std::string sweep_axis_str(SweepAxis a);

struct SweepCell {
    std::string id;
    ExperimentConfig cfg;
    double noise_level = 0.10;
};

// Expands the base config along the named axis (the studied grids:
// loss-comparison 4 cells, seed 5, depth-kernel 16, pooling 4, arch-noise 24).
std::vector<SweepCell> expand_sweep(SweepAxis axis, const ExperimentConfig& base);

// Trains and evaluates every cell over cfg.sweep_seeds training seeds,
// writing one metrics CSV per cell plus a per-axis summary. Cell failures are
// recorded and the sweep continues; returns 0 on full success, 2 otherwise.
int run_sweep(SweepAxis axis, const ExperimentConfig& base, const std::string& out_dir);

// Regenerates report.md and the MIP panels for every sweep directory under
// out_dir. Missing cells render as an em dash; returns 0 when all cells were
// present, 2 otherwise.
int write_report(const std::string& out_dir);

}  // namespace upl
