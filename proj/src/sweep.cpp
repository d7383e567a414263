#include "upl/sweep.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "upl/checkpoint.hpp"
#include "upl/volio.hpp"

namespace fs = std::filesystem;

namespace upl {

SweepAxis parse_sweep_axis(const std::string& s) {
    if (s == "loss-comparison") return SweepAxis::kLossComparison;
    if (s == "seed") return SweepAxis::kSeed;
    if (s == "depth-kernel") return SweepAxis::kDepthKernel;
    if (s == "pooling") return SweepAxis::kPooling;
    if (s == "arch-noise") return SweepAxis::kArchNoise;
    throw std::invalid_argument("unknown sweep axis '" + s + "'");
}

std::string sweep_axis_str(SweepAxis a) {
    switch (a) {
        case SweepAxis::kLossComparison: return "loss-comparison";
        case SweepAxis::kSeed: return "seed";
        case SweepAxis::kDepthKernel: return "depth-kernel";
        case SweepAxis::kPooling: return "pooling";
        case SweepAxis::kArchNoise: return "arch-noise";
    }
    return "?";
}

std::vector<SweepCell> expand_sweep(SweepAxis axis, const ExperimentConfig& base) {
    std::vector<SweepCell> cells;
    const double level = base.train_noise_level();
    switch (axis) {
        case SweepAxis::kLossComparison: {
            {
                SweepCell c{"l1", base, level};
                c.cfg.loss_kind = LossKind::kL1;
                cells.push_back(std::move(c));
            }
            {
                SweepCell c{"ssim", base, level};
                c.cfg.loss_kind = LossKind::kSsim;
                cells.push_back(std::move(c));
            }
            {
                SweepCell c{"upl-simplenet3", base, level};
                c.cfg.loss_kind = LossKind::kUpl;
                c.cfg.lossnet.depth = 3;
                c.cfg.lossnet.kernel = 3;
                c.cfg.lossnet.width = 32;
                c.cfg.lossnet.pool_after.clear();
                cells.push_back(std::move(c));
            }
            {
                // deep preset standing in for the large pre-built loss nets
                SweepCell c{"upl-deep", base, level};
                c.cfg.loss_kind = LossKind::kUpl;
                c.cfg.lossnet.depth = 13;
                c.cfg.lossnet.kernel = 3;
                c.cfg.lossnet.width = 64;
                c.cfg.lossnet.pool_after = {1, 2, 3};
                cells.push_back(std::move(c));
            }
            break;
        }
        case SweepAxis::kSeed: {
            for (std::uint64_t s = 1; s <= 5; ++s) {
                SweepCell c{"lossnet-seed-" + std::to_string(s), base, level};
                c.cfg.loss_kind = LossKind::kUpl;
                c.cfg.lossnet.init.seed = s;
                cells.push_back(std::move(c));
            }
            break;
        }
        case SweepAxis::kDepthKernel: {
            for (std::int64_t depth : {3, 5, 9, 13}) {
                for (std::int64_t kernel : {3, 5, 7, 9}) {
                    SweepCell c{"depth" + std::to_string(depth) + "-kernel" + std::to_string(kernel), base, level};
                    c.cfg.loss_kind = LossKind::kUpl;
                    c.cfg.lossnet.depth = depth;
                    c.cfg.lossnet.kernel = kernel;
                    cells.push_back(std::move(c));
                }
            }
            break;
        }
        case SweepAxis::kPooling: {
            for (int pools = 0; pools <= 3; ++pools) {
                SweepCell c{"pool" + std::to_string(pools), base, level};
                c.cfg.loss_kind = LossKind::kUpl;
                if (c.cfg.lossnet.depth < 4) c.cfg.lossnet.depth = 5;  // the pooling study uses 5 conv layers
                c.cfg.lossnet.pool_after.clear();
                for (int p = 1; p <= pools; ++p) c.cfg.lossnet.pool_after.insert(p);
                cells.push_back(std::move(c));
            }
            break;
        }
        case SweepAxis::kArchNoise: {
            for (ArchKind arch : {ArchKind::kDncnn, ArchKind::kResnet, ArchKind::kRestormer3d}) {
                for (double noise : {0.01, 0.05, 0.10, 0.20}) {
                    for (LossKind loss : {LossKind::kL1, LossKind::kUpl}) {
                        std::ostringstream id;
                        id << arch_kind_str(arch) << "-n" << format_double(noise) << "-" << loss_kind_str(loss);
                        SweepCell c{id.str(), base, noise};
                        c.cfg.arch.arch = arch;
                        c.cfg.loss_kind = loss;
                        c.cfg.noise_levels = {noise};
                        cells.push_back(std::move(c));
                    }
                }
            }
            break;
        }
    }
    for (auto& c : cells) c.cfg.experiment_id = c.id;
    return cells;
}

namespace {

// train/evaluate one cell over the configured training seeds
std::vector<MetricsRecord> run_cell(const SweepCell& cell, const fs::path& cell_dir) {
    fs::create_directories(cell_dir);
    std::vector<MetricsRecord> all;
    const Dataset ds = build_dataset(cell.cfg, cell.noise_level);
    for (std::int64_t s = 0; s < cell.cfg.sweep_seeds; ++s) {
        ExperimentConfig cfg = cell.cfg;
        cfg.train_seed = cell.cfg.train_seed + static_cast<std::uint64_t>(s);
        TrainResult r = train(cfg, ds);
        auto records = evaluate(*r.net, ds, cfg, cell.noise_level);
        all.insert(all.end(), records.begin(), records.end());
        if (s == 0) {
            save_checkpoint(r.net->state_tensors(), (cell_dir / "checkpoint.uplckpt").string());
            write_train_log(r.log, (cell_dir / "train_log.csv").string());
            const Volume denoised = denoise(*r.net, ds.test_noisy.front());
            save_uvol(ds.test_clean.front(), (cell_dir / "clean.uvol").string());
            save_uvol(ds.test_noisy.front(), (cell_dir / "noisy.uvol").string());
            save_uvol(denoised, (cell_dir / "denoised.uvol").string());
        }
    }
    write_metrics_csv(all, (cell_dir / "metrics.csv").string());
    cell.cfg.save((cell_dir / "config.txt").string());
    return all;
}

std::string mean_std(double mean, double sd) { return format_double(mean) + " ± " + format_double(sd); }

struct CellSummary {
    std::string id;
    bool present = false;
    Aggregate full;
};

std::vector<CellSummary> read_axis_cells(const fs::path& axis_dir) {
    std::vector<CellSummary> cells;
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(axis_dir)) {
        if (e.is_directory()) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
        CellSummary cs;
        cs.id = d.filename().string();
        const fs::path csv = d / "metrics.csv";
        if (fs::exists(csv)) {
            auto records = read_metrics_csv(csv.string());
            std::vector<MetricsRecord> full;
            for (auto& r : records) {
                if (r.region == "full") full.push_back(r);
            }
            if (!full.empty()) {
                cs.full = aggregate(full, {"experiment_id"}).begin()->second;
                cs.present = true;
            }
        }
        cells.push_back(std::move(cs));
    }
    return cells;
}

void emit_panels(const fs::path& cell_dir, std::ostream& log) {
    const fs::path clean_p = cell_dir / "clean.uvol";
    if (!fs::exists(clean_p)) return;
    const Volume clean = load_uvol(clean_p.string());
    const Volume noisy = load_uvol((cell_dir / "noisy.uvol").string());
    const Volume denoised = load_uvol((cell_dir / "denoised.uvol").string());
    Volume diff = clean;
    for (std::size_t i = 0; i < diff.data.size(); ++i) {
        diff.data[i] = std::min(1.0f, std::abs(clean.data[i] - denoised.data[i]));
    }
    auto clamp01 = [](Volume v) {
        for (auto& x : v.data) x = std::clamp(x, 0.0f, 1.0f);
        return v;
    };
    export_pgm(mip_project(clamp01(clean), MipAxis::kAxial), (cell_dir / "mip_clean.pgm").string());
    export_pgm(mip_project(clamp01(noisy), MipAxis::kAxial), (cell_dir / "mip_noisy.pgm").string());
    export_pgm(mip_project(clamp01(denoised), MipAxis::kAxial), (cell_dir / "mip_denoised.pgm").string());
    export_pgm(mip_project(diff, MipAxis::kAxial), (cell_dir / "mip_diff.pgm").string());
    log << "panels: " << cell_dir.string() << "\n";
}

}  // namespace

int run_sweep(SweepAxis axis, const ExperimentConfig& base, const std::string& out_dir) {
    const fs::path root = fs::path(out_dir) / ("sweep-" + sweep_axis_str(axis));
    fs::create_directories(root);
    const auto cells = expand_sweep(axis, base);
    std::vector<std::string> failures;
    std::vector<MetricsRecord> combined;
    for (const auto& cell : cells) {
        try {
            auto records = run_cell(cell, root / cell.id);
            combined.insert(combined.end(), records.begin(), records.end());
            std::cout << "[cell done] " << cell.id << "\n";
        } catch (const std::exception& e) {
            failures.push_back(cell.id + ": " + e.what());
            std::cout << "[cell FAILED] " << cell.id << ": " << e.what() << "\n";
        }
    }
    if (!combined.empty()) write_metrics_csv(combined, (root / "all_metrics.csv").string());

    // per-cell summary over training seeds, full region
    std::ofstream summary((root / "summary.csv").string(), std::ios::binary | std::ios::trunc);
    summary << "cell,mean_ssim,std_ssim,mean_psnr,std_psnr,mean_mse,std_mse,records\n";
    for (const auto& cs : read_axis_cells(root)) {
        if (!cs.present) continue;
        summary << cs.id << "," << format_double(cs.full.mean_ssim) << "," << format_double(cs.full.std_ssim) << ","
                << format_double(cs.full.mean_psnr) << "," << format_double(cs.full.std_psnr) << ","
                << format_double(cs.full.mean_mse) << "," << format_double(cs.full.std_mse) << "," << cs.full.count
                << "\n";
    }
    summary.close();

    if (!failures.empty()) {
        std::ofstream f((root / "failures.txt").string(), std::ios::binary | std::ios::trunc);
        for (const auto& msg : failures) f << msg << "\n";
        return 2;
    }
    return 0;
}

int write_report(const std::string& out_dir) {
    std::vector<fs::path> axis_dirs;
    for (const auto& e : fs::directory_iterator(out_dir)) {
        if (e.is_directory() && e.path().filename().string().rfind("sweep-", 0) == 0) axis_dirs.push_back(e.path());
    }
    std::sort(axis_dirs.begin(), axis_dirs.end());
    if (axis_dirs.empty()) throw std::runtime_error("report: no sweep-* directories under '" + out_dir + "'");

    std::ostringstream md;
    md << "# Sweep report\n\n";
    md << "Metrics are full-volume values aggregated over training seeds (mean ± sample std);\n";
    md << "each cell keeps the best-validation checkpoint.\n";
    bool incomplete = false;
    std::ostringstream panel_log;
    for (const auto& axis_dir : axis_dirs) {
        md << "\n## " << axis_dir.filename().string() << "\n\n";
        md << "| cell | SSIM | PSNR (dB) | MSE |\n";
        md << "|---|---|---|---|\n";
        for (const auto& cs : read_axis_cells(axis_dir)) {
            if (cs.present) {
                md << "| " << cs.id << " | " << mean_std(cs.full.mean_ssim, cs.full.std_ssim) << " | "
                   << mean_std(cs.full.mean_psnr, cs.full.std_psnr) << " | "
                   << mean_std(cs.full.mean_mse, cs.full.std_mse) << " |\n";
                emit_panels(axis_dir / cs.id, panel_log);
            } else {
                md << "| " << cs.id << " | — | — | — |\n";
                incomplete = true;
            }
        }
    }
    std::ofstream f((fs::path(out_dir) / "report.md").string(), std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("report: cannot write report.md");
    f << md.str();
    return incomplete ? 2 : 0;
}

}  // namespace upl
