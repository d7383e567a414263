#include "upl/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace upl {

namespace {

void check_dims(const Volume& a, const Volume& b, const char* what) {
    if (a.dims != b.dims) throw std::invalid_argument(std::string(what) + ": dims mismatch");
}

}  // namespace

double mse(const Volume& a, const Volume& b) {
    check_dims(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

double psnr(const Volume& a, const Volume& b, double data_range) {
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / m);
}

double ssim_metric(const Volume& a, const Volume& b, const SsimParams& p) {
    check_dims(a, b, "ssim_metric");
    auto x = constant(a.to_tensor<double>());
    return ssim_index(x, b.to_tensor<double>(), p)->value.scalar();
}

double masked_mse(const Volume& a, const Volume& b, const Volume& mask_source, double threshold) {
    check_dims(a, b, "masked_mse");
    check_dims(a, mask_source, "masked_mse");
    double acc = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        if (static_cast<double>(mask_source.data[i]) > threshold) {
            const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
            acc += d * d;
            ++count;
        }
    }
    if (count == 0) return 0.0;
    return acc / static_cast<double>(count);
}

std::int64_t default_eval_crop_size(const std::array<std::int64_t, 3>& dims, PhantomKind kind) {
    const std::int64_t min_dim = std::min({dims[0], dims[1], dims[2]});
    // scaled analogues of 52/192 (root) and 68/512 (vessel center)
    const double ratio = kind == PhantomKind::kRoot ? 52.0 / 192.0 : 68.0 / 512.0;
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(static_cast<double>(min_dim) * ratio)));
}

std::array<std::int64_t, 3> eval_region_offsets(const std::array<std::int64_t, 3>& dims, PhantomKind kind,
                                                std::int64_t size) {
    std::array<std::int64_t, 3> off{};
    if (kind == PhantomKind::kVessel) {
        for (int i = 0; i < 3; ++i) off[static_cast<std::size_t>(i)] = (dims[static_cast<std::size_t>(i)] - size) / 2;
    } else {
        const std::int64_t anchor = static_cast<std::int64_t>(std::llround(static_cast<double>(dims[0]) / 4.0)) - size / 2;
        off[0] = std::clamp<std::int64_t>(anchor, 0, dims[0] - size);
        off[1] = (dims[1] - size) / 2;
        off[2] = (dims[2] - size) / 2;
    }
    return off;
}

Volume crop_eval_region(const Volume& v, PhantomKind kind, std::int64_t size) {
    if (size == 0) size = default_eval_crop_size(v.dims, kind);
    for (auto d : v.dims) {
        if (size > d) throw std::invalid_argument("crop_eval_region: size " + std::to_string(size) + " too large");
    }
    return crop_at(v, size, eval_region_offsets(v.dims, kind, size));
}

std::string group_key(const MetricsRecord& r, const std::vector<std::string>& group_by) {
    std::string key;
    for (const auto& k : group_by) {
        if (!key.empty()) key += "|";
        if (k == "experiment_id") key += r.experiment_id;
        else if (k == "seed") key += std::to_string(r.seed);
        else if (k == "noise") key += format_double(r.noise);
        else if (k == "arch") key += r.arch;
        else if (k == "loss") key += r.loss;
        else if (k == "region") key += r.region;
        else throw std::invalid_argument("aggregate: unknown group key '" + k + "'");
    }
    return key;
}

std::map<std::string, Aggregate> aggregate(const std::vector<MetricsRecord>& records,
                                           const std::vector<std::string>& group_by) {
    if (records.empty()) throw std::invalid_argument("aggregate: empty input");
    std::map<std::string, std::vector<const MetricsRecord*>> groups;
    for (const auto& r : records) groups[group_key(r, group_by)].push_back(&r);

    std::map<std::string, Aggregate> out;
    for (auto& [key, rows] : groups) {
        Aggregate a;
        a.count = rows.size();
        auto stats = [&](auto getter, double& mean, double& sd) {
            double s = 0.0;
            for (const auto* r : rows) s += getter(*r);
            mean = s / static_cast<double>(rows.size());
            double v = 0.0;
            for (const auto* r : rows) {
                const double d = getter(*r) - mean;
                v += d * d;
            }
            sd = rows.size() > 1 ? std::sqrt(v / static_cast<double>(rows.size() - 1)) : 0.0;
        };
        stats([](const MetricsRecord& r) { return r.ssim; }, a.mean_ssim, a.std_ssim);
        stats([](const MetricsRecord& r) { return r.psnr; }, a.mean_psnr, a.std_psnr);
        stats([](const MetricsRecord& r) { return r.mse; }, a.mean_mse, a.std_mse);
        out[key] = a;
    }
    return out;
}

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string metrics_csv_header() { return "experiment_id,seed,noise,arch,loss,region,ssim,psnr,mse"; }

std::string metrics_csv_row(const MetricsRecord& r) {
    std::ostringstream os;
    os << r.experiment_id << "," << r.seed << "," << format_double(r.noise) << "," << r.arch << "," << r.loss << ","
       << r.region << "," << format_double(r.ssim) << "," << format_double(r.psnr) << "," << format_double(r.mse);
    return os.str();
}

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << metrics_csv_header() << "\n";
    for (const auto& r : records) f << metrics_csv_row(r) << "\n";
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty metrics file '" + path + "'");
    if (line != metrics_csv_header()) throw std::runtime_error("bad metrics header in '" + path + "'");

    auto parse_double = [](const std::string& s) {
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        double v = 0.0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
            throw std::runtime_error("bad number '" + s + "' in metrics csv");
        }
        return v;
    };

    std::vector<MetricsRecord> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t pos = 0;
        while (true) {
            const std::size_t c = line.find(',', pos);
            cols.push_back(line.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
            if (c == std::string::npos) break;
            pos = c + 1;
        }
        if (cols.size() != 9) throw std::runtime_error("bad metrics row '" + line + "'");
        MetricsRecord r;
        r.experiment_id = cols[0];
        r.seed = std::stoull(cols[1]);
        r.noise = parse_double(cols[2]);
        r.arch = cols[3];
        r.loss = cols[4];
        r.region = cols[5];
        r.ssim = parse_double(cols[6]);
        r.psnr = parse_double(cols[7]);
        r.mse = parse_double(cols[8]);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace upl
