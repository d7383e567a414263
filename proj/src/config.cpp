#include "upl/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "upl/metrics.hpp"

namespace upl {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
    }
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw std::invalid_argument("config: bad seed for " + key + ": '" + v + "'");
    }
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
    }
    return out;
}

std::vector<std::string> split_commas(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join_set(const std::set<std::int64_t>& s) {
    std::string out;
    for (auto v : s) {
        if (!out.empty()) out += ",";
        out += std::to_string(v);
    }
    return out;
}

}  // namespace

void ExperimentConfig::apply(const std::string& key, const std::string& value) {
    if (key == "experiment.id") experiment_id = value;
    else if (key == "arch.kind") arch.arch = parse_arch_kind(value);
    else if (key == "arch.base_channels") arch.base_channels = parse_int(key, value);
    else if (key == "arch.blocks") arch.blocks = parse_int(key, value);
    else if (key == "arch.init") arch_init.name = InitScheme::parse_name(value);
    else if (key == "arch.seed") arch_init.seed = parse_u64(key, value);
    else if (key == "loss.kind") loss_kind = parse_loss_kind(value);
    else if (key == "loss.lambda") loss_lambda = parse_real(key, value);
    else if (key == "lossnet.depth") lossnet.depth = parse_int(key, value);
    else if (key == "lossnet.kernel") lossnet.kernel = parse_int(key, value);
    else if (key == "lossnet.width") lossnet.width = parse_int(key, value);
    else if (key == "lossnet.pool_after") {
        lossnet.pool_after.clear();
        for (const auto& s : split_commas(value)) lossnet.pool_after.insert(parse_int(key, s));
    } else if (key == "lossnet.init") lossnet.init.name = InitScheme::parse_name(value);
    else if (key == "lossnet.seed") lossnet.init.seed = parse_u64(key, value);
    else if (key == "lossnet.taps") {
        lossnet.taps.clear();
        for (const auto& s : split_commas(value)) lossnet.taps.insert(parse_int(key, s));
    } else if (key == "noise.levels") {
        noise_levels.clear();
        for (const auto& s : split_commas(value)) noise_levels.push_back(parse_real(key, s));
        if (noise_levels.empty()) throw std::invalid_argument("config: noise.levels must not be empty");
    } else if (key == "noise.seed") noise_seed = parse_u64(key, value);
    else if (key == "train.iterations") train_iterations = parse_int(key, value);
    else if (key == "train.batch_size") batch_size = parse_int(key, value);
    else if (key == "train.crop_size") crop_size = parse_int(key, value);
    else if (key == "train.learning_rate") learning_rate = parse_real(key, value);
    else if (key == "train.seed") train_seed = parse_u64(key, value);
    else if (key == "train.val_interval") val_interval = parse_int(key, value);
    else if (key == "data.kind") phantom.kind = parse_phantom_kind(value);
    else if (key == "data.dims") {
        const auto parts = split_commas(value);
        if (parts.size() == 1) {
            const auto d = parse_int(key, parts[0]);
            phantom.dims = {d, d, d};
        } else if (parts.size() == 3) {
            for (int i = 0; i < 3; ++i) phantom.dims[static_cast<std::size_t>(i)] = parse_int(key, parts[static_cast<std::size_t>(i)]);
        } else {
            throw std::invalid_argument("config: data.dims expects one or three extents");
        }
    } else if (key == "data.n_structures") phantom.n_structures = parse_int(key, value);
    else if (key == "data.radius_min") phantom.radius_min = parse_real(key, value);
    else if (key == "data.radius_max") phantom.radius_max = parse_real(key, value);
    else if (key == "data.intensity_min") phantom.intensity_min = parse_real(key, value);
    else if (key == "data.intensity_max") phantom.intensity_max = parse_real(key, value);
    else if (key == "data.branching_prob") phantom.branching_prob = parse_real(key, value);
    else if (key == "data.tortuosity") phantom.tortuosity = parse_real(key, value);
    else if (key == "data.seed") phantom.seed = parse_u64(key, value);
    else if (key == "data.train_count") train_count = parse_int(key, value);
    else if (key == "data.val_count") val_count = parse_int(key, value);
    else if (key == "data.test_count") test_count = parse_int(key, value);
    else if (key == "data.import_dir") import_dir = value;
    else if (key == "eval.window_radius") ssim.window_radius = parse_int(key, value);
    else if (key == "eval.sigma") ssim.sigma = parse_real(key, value);
    else if (key == "eval.data_range") ssim.data_range = parse_real(key, value);
    else if (key == "eval.crop_size") eval_crop_size = parse_int(key, value);
    else if (key == "eval.root_mask_threshold") root_mask_threshold = parse_real(key, value);
    else if (key == "sweep.seeds") sweep_seeds = parse_int(key, value);
    else if (key == "output.dir") output_dir = value;
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not 'key = value'");
        }
        cfg.apply(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return from_text(os.str());
}

void ExperimentConfig::validate() const {
    if (train_iterations < 1) throw std::invalid_argument("config: train.iterations must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: train.batch_size must be >= 1");
    if (crop_size < 1) throw std::invalid_argument("config: train.crop_size must be >= 1");
    for (auto d : phantom.dims) {
        if (crop_size > d) throw std::invalid_argument("config: train.crop_size exceeds phantom dims");
    }
    for (double p : noise_levels) {
        if (p <= 0.0) throw std::invalid_argument("config: noise levels must be > 0");
    }
    if (val_interval < 1) throw std::invalid_argument("config: train.val_interval must be >= 1");
    if (train_count < 1 || val_count < 1 || test_count < 1) {
        throw std::invalid_argument("config: data counts must be >= 1");
    }
    lossnet.validate();
    arch.validate();
}

std::string ExperimentConfig::to_text() const {
    std::ostringstream os;
    os << "experiment.id = " << experiment_id << "\n";
    os << "arch.kind = " << arch_kind_str(arch.arch) << "\n";
    os << "arch.base_channels = " << arch.base_channels << "\n";
    os << "arch.blocks = " << arch.blocks << "\n";
    os << "arch.init = " << InitScheme::name_str(arch_init.name) << "\n";
    os << "arch.seed = " << arch_init.seed << "\n";
    os << "loss.kind = " << loss_kind_str(loss_kind) << "\n";
    os << "loss.lambda = " << format_double(loss_lambda) << "\n";
    os << "lossnet.depth = " << lossnet.depth << "\n";
    os << "lossnet.kernel = " << lossnet.kernel << "\n";
    os << "lossnet.width = " << lossnet.width << "\n";
    os << "lossnet.pool_after = " << join_set(lossnet.pool_after) << "\n";
    os << "lossnet.init = " << InitScheme::name_str(lossnet.init.name) << "\n";
    os << "lossnet.seed = " << lossnet.init.seed << "\n";
    os << "lossnet.taps = " << join_set(lossnet.taps) << "\n";
    os << "noise.levels = ";
    for (std::size_t i = 0; i < noise_levels.size(); ++i) {
        if (i) os << ",";
        os << format_double(noise_levels[i]);
    }
    os << "\n";
    os << "noise.seed = " << noise_seed << "\n";
    os << "train.iterations = " << train_iterations << "\n";
    os << "train.batch_size = " << batch_size << "\n";
    os << "train.crop_size = " << crop_size << "\n";
    os << "train.learning_rate = " << format_double(learning_rate) << "\n";
    os << "train.seed = " << train_seed << "\n";
    os << "train.val_interval = " << val_interval << "\n";
    os << "data.kind = " << phantom_kind_str(phantom.kind) << "\n";
    os << "data.dims = " << phantom.dims[0] << "," << phantom.dims[1] << "," << phantom.dims[2] << "\n";
    os << "data.n_structures = " << phantom.n_structures << "\n";
    os << "data.radius_min = " << format_double(phantom.radius_min) << "\n";
    os << "data.radius_max = " << format_double(phantom.radius_max) << "\n";
    os << "data.intensity_min = " << format_double(phantom.intensity_min) << "\n";
    os << "data.intensity_max = " << format_double(phantom.intensity_max) << "\n";
    os << "data.branching_prob = " << format_double(phantom.branching_prob) << "\n";
    os << "data.tortuosity = " << format_double(phantom.tortuosity) << "\n";
    os << "data.seed = " << phantom.seed << "\n";
    os << "data.train_count = " << train_count << "\n";
    os << "data.val_count = " << val_count << "\n";
    os << "data.test_count = " << test_count << "\n";
    os << "data.import_dir = " << import_dir << "\n";
    os << "eval.window_radius = " << ssim.window_radius << "\n";
    os << "eval.sigma = " << format_double(ssim.sigma) << "\n";
    os << "eval.data_range = " << format_double(ssim.data_range) << "\n";
    os << "eval.crop_size = " << eval_crop_size << "\n";
    os << "eval.root_mask_threshold = " << format_double(root_mask_threshold) << "\n";
    os << "sweep.seeds = " << sweep_seeds << "\n";
    os << "output.dir = " << output_dir << "\n";
    return os.str();
}

void ExperimentConfig::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write config '" + path + "'");
    f << to_text();
}

}  // namespace upl
