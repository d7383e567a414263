#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "upl/checkpoint.hpp"
#include "upl/sweep.hpp"
#include "upl/train.hpp"
#include "upl/volio.hpp"

namespace fs = std::filesystem;
using namespace upl;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_override;
    std::uint64_t seed_override = 0;
    bool has_seed = false;
};

ExperimentConfig load_config(const CommonOpts& opts) {
    ExperimentConfig cfg = ExperimentConfig::load(opts.config_path);
    if (!opts.out_override.empty()) cfg.output_dir = opts.out_override;
    if (opts.has_seed) cfg.train_seed = opts.seed_override;
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config file")->required();
    cmd->add_option("--out", opts.out_override, "override output.dir");
    cmd->add_option("--seed", opts.seed_override, "override train.seed")->each([&opts](const std::string&) {
        opts.has_seed = true;
    });
}

std::string noise_tag(double level) { return "n" + format_double(level); }

int cmd_gen_data(const ExperimentConfig& cfg) {
    const fs::path data_dir = fs::path(cfg.output_dir) / "data";
    const Dataset ds = build_dataset(cfg, cfg.train_noise_level());
    auto dump = [&](const std::vector<Volume>& vols, const std::string& split) {
        fs::create_directories(data_dir / split);
        for (std::size_t i = 0; i < vols.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "clean_%03zu.uvol", i);
            save_uvol(vols[i], (data_dir / split / name).string());
        }
    };
    dump(ds.train_clean, "train");
    dump(ds.val_clean, "val");
    dump(ds.test_clean, "test");
    std::cout << "wrote clean volumes to " << data_dir.string() << "\n";
    return 0;
}

int cmd_add_noise(const ExperimentConfig& cfg) {
    const fs::path data_dir = fs::path(cfg.output_dir) / "data";
    for (const std::string split : {"train", "val", "test"}) {
        const fs::path dir = data_dir / split;
        if (!fs::exists(dir)) throw std::runtime_error("add-noise: missing '" + dir.string() + "' (run gen-data first)");
        std::vector<fs::path> paths;
        for (const auto& e : fs::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("clean_", 0) == 0 && e.path().extension() == ".uvol") paths.push_back(e.path());
        }
        std::sort(paths.begin(), paths.end());
        for (std::size_t i = 0; i < paths.size(); ++i) {
            const Volume clean = load_uvol(paths[i].string());
            for (double level : cfg.noise_levels) {
                NoiseSpec ns;
                ns.level = level;
                ns.seed = mix_seed(cfg.noise_seed, (static_cast<std::uint64_t>(i) << 8) ^
                                                       static_cast<std::uint64_t>(level * 1e6));
                const Volume noisy = add_rician_noise(clean, ns);
                std::string name = paths[i].stem().string();
                name.replace(0, 5, "noisy");  // clean_### -> noisy_###
                save_uvol(noisy, (dir / (name + "_" + noise_tag(level) + ".uvol")).string());
            }
        }
        std::cout << split << ": " << paths.size() << " volumes x " << cfg.noise_levels.size() << " noise levels\n";
    }
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    const fs::path run_dir = fs::path(cfg.output_dir) / cfg.experiment_id;
    fs::create_directories(run_dir);
    cfg.save((run_dir / "config_resolved.txt").string());

    const double level = cfg.train_noise_level();
    const Dataset ds = build_dataset(cfg, level);
    TrainResult r = train(cfg, ds);
    save_checkpoint(r.net->state_tensors(), (run_dir / "checkpoint.uplckpt").string());
    write_train_log(r.log, (run_dir / "train_log.csv").string());
    if (!r.lossnet_bytes.empty()) {
        std::ofstream ck((run_dir / "lossnet.uplckpt").string(), std::ios::binary | std::ios::trunc);
        ck << r.lossnet_bytes;
        std::ofstream sha((run_dir / "lossnet.sha256").string(), std::ios::binary | std::ios::trunc);
        sha << r.lossnet_sha_after << "\n";
        if (r.lossnet_sha_before != r.lossnet_sha_after) {
            throw std::runtime_error("train: frozen loss network changed during training");
        }
    }
    auto records = evaluate(*r.net, ds, cfg, level);
    write_metrics_csv(records, (run_dir / "metrics.csv").string());

    const Volume denoised = denoise(*r.net, ds.test_noisy.front());
    save_uvol(ds.test_clean.front(), (run_dir / "clean.uvol").string());
    save_uvol(ds.test_noisy.front(), (run_dir / "noisy.uvol").string());
    save_uvol(denoised, (run_dir / "denoised.uvol").string());

    std::cout << "best val ssim " << format_double(r.best_val_ssim) << " at step " << r.best_step << "\n";
    std::cout << "outputs in " << run_dir.string() << "\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
    const fs::path run_dir = fs::path(cfg.output_dir) / (cfg.experiment_id + "-eval");
    fs::create_directories(run_dir);
    auto net = build_network<float>(cfg.arch, cfg.arch_init);
    net->load_state_tensors(load_checkpoint(checkpoint_path));
    const double level = cfg.train_noise_level();
    const Dataset ds = build_dataset(cfg, level);
    auto records = evaluate(*net, ds, cfg, level);
    write_metrics_csv(records, (run_dir / "metrics.csv").string());
    std::cout << "wrote " << records.size() << " records to " << (run_dir / "metrics.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"3D denoising of line-like structures with untrained perceptual losses"};
    app.require_subcommand(1);

    CommonOpts gen_opts, noise_opts, train_opts, eval_opts, sweep_opts, report_opts;
    std::string checkpoint_path, axis_name;

    auto* gen = app.add_subcommand("gen-data", "generate clean phantom volumes");
    add_common(gen, gen_opts);
    auto* noise = app.add_subcommand("add-noise", "corrupt generated volumes at the configured noise levels");
    add_common(noise, noise_opts);
    auto* tr = app.add_subcommand("train", "train one experiment");
    add_common(tr, train_opts);
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test set");
    add_common(ev, eval_opts);
    ev->add_option("--checkpoint", checkpoint_path, "UPLCKPT1 checkpoint")->required();
    auto* sw = app.add_subcommand("sweep", "run one study axis");
    add_common(sw, sweep_opts);
    sw->add_option("--axis", axis_name, "loss-comparison | seed | depth-kernel | pooling | arch-noise")->required();
    auto* rp = app.add_subcommand("report", "emit markdown tables and MIP panels from sweep outputs");
    add_common(rp, report_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(load_config(gen_opts));
        if (noise->parsed()) return cmd_add_noise(load_config(noise_opts));
        if (tr->parsed()) return cmd_train(load_config(train_opts));
        if (ev->parsed()) return cmd_eval(load_config(eval_opts), checkpoint_path);
        if (sw->parsed()) {
            const ExperimentConfig cfg = load_config(sweep_opts);
            return run_sweep(parse_sweep_axis(axis_name), cfg, cfg.output_dir);
        }
        if (rp->parsed()) {
            const ExperimentConfig cfg = load_config(report_opts);
            return write_report(cfg.output_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
