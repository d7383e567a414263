#include "upl/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "upl/checkpoint.hpp"
#include "upl/sha256.hpp"
#include "upl/volio.hpp"

namespace fs = std::filesystem;

namespace upl {

namespace {

std::vector<Volume> load_split(const std::string& dir, std::int64_t expected) {
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".uvol") paths.push_back(e.path());
    }
    std::sort(paths.begin(), paths.end());
    if (static_cast<std::int64_t>(paths.size()) < expected) {
        throw std::runtime_error("import: found " + std::to_string(paths.size()) + " volumes in '" + dir +
                                 "', need " + std::to_string(expected));
    }
    std::vector<Volume> out;
    for (std::int64_t i = 0; i < expected; ++i) out.push_back(normalize_volume(load_uvol(paths[static_cast<std::size_t>(i)].string())));
    return out;
}

enum SplitTag : std::uint64_t { kTrainSplit = 1, kValSplit = 2, kTestSplit = 3 };

std::vector<Volume> make_clean(const ExperimentConfig& cfg, SplitTag tag, std::int64_t count) {
    std::vector<Volume> out;
    for (std::int64_t i = 0; i < count; ++i) {
        PhantomSpec spec = cfg.phantom;
        spec.seed = mix_seed(cfg.phantom.seed, (static_cast<std::uint64_t>(tag) << 32) | static_cast<std::uint64_t>(i));
        out.push_back(generate_phantom(spec));
    }
    return out;
}

std::vector<Volume> corrupt(const std::vector<Volume>& clean, double level, std::uint64_t noise_seed, SplitTag tag) {
    std::vector<Volume> out;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        NoiseSpec ns;
        ns.level = level;
        ns.seed = mix_seed(noise_seed, (static_cast<std::uint64_t>(tag) << 32) | static_cast<std::uint64_t>(i));
        out.push_back(add_rician_noise(clean[i], ns));
    }
    return out;
}

// batch of paired random crops stacked into (B, 1, c, c, c) tensors
void sample_batch(const Dataset& ds, std::int64_t batch, std::int64_t crop, Rng& rng, Tensor5f& noisy,
                  Tensor5f& clean) {
    noisy = Tensor5f({batch, 1, crop, crop, crop});
    clean = Tensor5f({batch, 1, crop, crop, crop});
    const std::int64_t vol_elems = crop * crop * crop;
    for (std::int64_t b = 0; b < batch; ++b) {
        const auto vi = rng.index(ds.train_clean.size());
        std::array<std::int64_t, 3> off{};
        const Volume nc = random_crop(ds.train_noisy[vi], crop, rng, &off);
        const Volume cc = crop_at(ds.train_clean[vi], crop, off);
        std::copy(nc.data.begin(), nc.data.end(), noisy.data.begin() + b * vol_elems);
        std::copy(cc.data.begin(), cc.data.end(), clean.data.begin() + b * vol_elems);
    }
}

}  // namespace

Dataset build_dataset(const ExperimentConfig& cfg, double noise_level) {
    Dataset ds;
    if (!cfg.import_dir.empty()) {
        ds.train_clean = load_split(cfg.import_dir + "/train", cfg.train_count);
        ds.val_clean = load_split(cfg.import_dir + "/val", cfg.val_count);
        ds.test_clean = load_split(cfg.import_dir + "/test", cfg.test_count);
    } else {
        ds.train_clean = make_clean(cfg, kTrainSplit, cfg.train_count);
        ds.val_clean = make_clean(cfg, kValSplit, cfg.val_count);
        ds.test_clean = make_clean(cfg, kTestSplit, cfg.test_count);
    }
    ds.train_noisy = corrupt(ds.train_clean, noise_level, cfg.noise_seed, kTrainSplit);
    ds.val_noisy = corrupt(ds.val_clean, noise_level, cfg.noise_seed, kValSplit);
    ds.test_noisy = corrupt(ds.test_clean, noise_level, cfg.noise_seed, kTestSplit);
    return ds;
}

TrainResult train(const ExperimentConfig& cfg, const Dataset& ds) {
    TrainResult result;
    result.net = build_network<float>(cfg.arch, cfg.arch_init);
    auto params = result.net->parameters();

    SequentialNetT<float> lossnet;
    const bool uses_lossnet = cfg.loss_kind == LossKind::kUpl || cfg.loss_kind == LossKind::kUplPlusL1;
    if (uses_lossnet) {
        lossnet = build_upl_net<float>(cfg.lossnet);
        result.lossnet_bytes = checkpoint_bytes(seq_state_tensors(lossnet));
        result.lossnet_sha_before = Sha256::hash_hex(result.lossnet_bytes);
    }
    LossFn<float> loss_fn =
        make_loss<float>(cfg.loss_kind, cfg.ssim, uses_lossnet ? &lossnet : nullptr, cfg.lossnet.taps, cfg.loss_lambda);

    // fixed validation crops: centered, twice the training crop (clamped)
    const std::int64_t val_crop =
        std::min<std::int64_t>(2 * cfg.crop_size, std::min({cfg.phantom.dims[0], cfg.phantom.dims[1], cfg.phantom.dims[2]}));
    std::vector<std::pair<Volume, Volume>> val_pairs;
    for (std::size_t i = 0; i < ds.val_clean.size(); ++i) {
        std::array<std::int64_t, 3> off{};
        for (int a = 0; a < 3; ++a) off[static_cast<std::size_t>(a)] = (ds.val_clean[i].dims[static_cast<std::size_t>(a)] - val_crop) / 2;
        val_pairs.emplace_back(crop_at(ds.val_noisy[i], val_crop, off), crop_at(ds.val_clean[i], val_crop, off));
    }

    auto validate = [&]() {
        double acc = 0.0;
        for (auto& [noisy, clean] : val_pairs) {
            const Volume denoised = denoise(*result.net, noisy);
            acc += ssim_metric(denoised, clean, cfg.ssim);
        }
        return acc / static_cast<double>(val_pairs.size());
    };

    Rng rng(mix_seed(cfg.train_seed, 0xC001));
    AdamStateT<float> adam;
    AdamParams ap;
    ap.lr = cfg.learning_rate;

    result.best_val_ssim = -2.0;
    std::vector<NamedTensor<float>> best_state;

    Tensor5f noisy_batch, clean_batch;
    for (std::int64_t step = 1; step <= cfg.train_iterations; ++step) {
        sample_batch(ds, cfg.batch_size, cfg.crop_size, rng, noisy_batch, clean_batch);
        auto pred = result.net->forward(constant(noisy_batch), Mode::kTrain);
        auto loss = loss_fn(pred, clean_batch);
        const double loss_value = static_cast<double>(loss->value.scalar());
        if (!std::isfinite(loss_value)) {
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
        }
        backward(loss);
        adam_step(params, adam, ap);

        TrainLogRow row{step, loss_value, std::nullopt};
        if (step % cfg.val_interval == 0 || step == cfg.train_iterations) {
            const double vs = validate();
            row.val_ssim = vs;
            if (vs > result.best_val_ssim) {
                result.best_val_ssim = vs;
                result.best_step = step;
                best_state = result.net->state_tensors();
            }
        }
        result.log.push_back(row);
    }

    if (!best_state.empty()) result.net->load_state_tensors(best_state);
    if (uses_lossnet) {
        result.lossnet_sha_after = Sha256::hash_hex(checkpoint_bytes(seq_state_tensors(lossnet)));
    }
    return result;
}

std::vector<MetricsRecord> evaluate(NetworkT<float>& net, const Dataset& ds, const ExperimentConfig& cfg,
                                    double noise_level) {
    std::vector<MetricsRecord> records;
    const std::int64_t crop =
        cfg.eval_crop_size > 0 ? cfg.eval_crop_size : default_eval_crop_size(cfg.phantom.dims, cfg.phantom.kind);
    for (std::size_t i = 0; i < ds.test_clean.size(); ++i) {
        const Volume denoised = denoise(net, ds.test_noisy[i]);
        const Volume& clean = ds.test_clean[i];

        MetricsRecord full;
        full.experiment_id = cfg.experiment_id;
        full.seed = cfg.train_seed;
        full.noise = noise_level;
        full.arch = net.arch_name();
        full.loss = loss_kind_str(cfg.loss_kind);
        full.region = "full";
        full.ssim = ssim_metric(denoised, clean, cfg.ssim);
        full.psnr = psnr(denoised, clean, cfg.ssim.data_range);
        full.mse = mse(denoised, clean);
        records.push_back(full);

        MetricsRecord center = full;
        center.region = "center";
        const Volume dc = crop_eval_region(denoised, cfg.phantom.kind, crop);
        const Volume cc = crop_eval_region(clean, cfg.phantom.kind, crop);
        center.ssim = ssim_metric(dc, cc, cfg.ssim);
        center.psnr = psnr(dc, cc, cfg.ssim.data_range);
        center.mse = cfg.phantom.kind == PhantomKind::kRoot ? masked_mse(dc, cc, cc, cfg.root_mask_threshold)
                                                            : mse(dc, cc);
        records.push_back(center);
    }
    return records;
}

void write_train_log(const std::vector<TrainLogRow>& log, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << "step,loss,val_ssim\n";
    for (const auto& row : log) {
        f << row.step << "," << format_double(row.loss) << ",";
        if (row.val_ssim) f << format_double(*row.val_ssim);
        f << "\n";
    }
}

}  // namespace upl
