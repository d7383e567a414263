#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "upl/losses.hpp"
#include "upl/phantom.hpp"
#include "upl/volume.hpp"

namespace upl {

// one row of evaluation output
struct MetricsRecord {
    std::string experiment_id;
    std::uint64_t seed = 0;
    double noise = 0.0;
    std::string arch;
    std::string loss;
    std::string region;  // "full" or "center"
    double ssim = 0.0;
    double psnr = 0.0;  // dB; +inf when mse == 0
    double mse = 0.0;
};

double mse(const Volume& a, const Volume& b);

// 10*log10(L^2 / mse); +inf for identical volumes
double psnr(const Volume& a, const Volume& b, double data_range = 1.0);

// same kernel as the differentiable ssim_index, evaluated in f64 without
// gradient tracking
double ssim_metric(const Volume& a, const Volume& b, const SsimParams& p = {});

// MSE restricted to voxels where `mask_source` exceeds `threshold`
double masked_mse(const Volume& a, const Volume& b, const Volume& mask_source, double threshold);

// Region-of-interest crop: vessel volumes use the exact center; root volumes
// center in H/W and anchor the cube's top face at depth round(D/4) - size/2,
// clamped into the volume. size 0 selects the proportional default.
Volume crop_eval_region(const Volume& v, PhantomKind kind, std::int64_t size = 0);
std::array<std::int64_t, 3> eval_region_offsets(const std::array<std::int64_t, 3>& dims, PhantomKind kind,
                                                std::int64_t size);
std::int64_t default_eval_crop_size(const std::array<std::int64_t, 3>& dims, PhantomKind kind);

struct Aggregate {
    double mean_ssim = 0.0, std_ssim = 0.0;
    double mean_psnr = 0.0, std_psnr = 0.0;
    double mean_mse = 0.0, std_mse = 0.0;
    std::size_t count = 0;
};

// group records by the listed keys (subset of: experiment_id, seed, noise,
// arch, loss, region); sample std with n-1 denominator, 0 for singletons
std::map<std::string, Aggregate> aggregate(const std::vector<MetricsRecord>& records,
                                           const std::vector<std::string>& group_by);

std::string group_key(const MetricsRecord& r, const std::vector<std::string>& group_by);

// shortest round-trip decimal formatting (also used by the CSV layer)
std::string format_double(double v);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& r);
void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

}  // namespace upl
