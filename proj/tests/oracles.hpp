#pragma once

// Independent reference implementations used as test oracles. These share no
// code with the library kernels they check: plain nested loops, explicit
// indexing, double precision throughout.

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

struct Vol {
    std::int64_t n = 1, c = 1, d = 1, h = 1, w = 1;
    std::vector<double> data;

    Vol() = default;
    Vol(std::int64_t n_, std::int64_t c_, std::int64_t d_, std::int64_t h_, std::int64_t w_)
        : n(n_), c(c_), d(d_), h(h_), w(w_), data(static_cast<std::size_t>(n_ * c_ * d_ * h_ * w_), 0.0) {}

    double& at(std::int64_t ni, std::int64_t ci, std::int64_t zi, std::int64_t yi, std::int64_t xi) {
        return data[static_cast<std::size_t>((((ni * c + ci) * d + zi) * h + yi) * w + xi)];
    }
    double at(std::int64_t ni, std::int64_t ci, std::int64_t zi, std::int64_t yi, std::int64_t xi) const {
        return data[static_cast<std::size_t>((((ni * c + ci) * d + zi) * h + yi) * w + xi)];
    }
};

// six nested spatial/kernel loops, zero padding, cross-correlation
inline Vol conv3d(const Vol& in, const Vol& w, const std::vector<double>& bias) {
    const std::int64_t K = w.d, r = K / 2;
    Vol out(in.n, w.n, in.d, in.h, in.w);
    for (std::int64_t ni = 0; ni < in.n; ++ni)
        for (std::int64_t co = 0; co < w.n; ++co)
            for (std::int64_t z = 0; z < in.d; ++z)
                for (std::int64_t y = 0; y < in.h; ++y)
                    for (std::int64_t x = 0; x < in.w; ++x) {
                        double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(co)];
                        for (std::int64_t ci = 0; ci < in.c; ++ci)
                            for (std::int64_t kd = 0; kd < K; ++kd)
                                for (std::int64_t kh = 0; kh < K; ++kh)
                                    for (std::int64_t kw = 0; kw < K; ++kw) {
                                        const std::int64_t zi = z + kd - r, yi = y + kh - r, xi = x + kw - r;
                                        if (zi < 0 || zi >= in.d || yi < 0 || yi >= in.h || xi < 0 || xi >= in.w)
                                            continue;
                                        acc += in.at(ni, ci, zi, yi, xi) * w.at(co, ci, kd, kh, kw);
                                    }
                        out.at(ni, co, z, y, x) = acc;
                    }
    return out;
}

inline Vol relu(const Vol& in) {
    Vol out = in;
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

// direct windowed SSIM: per-voxel Gaussian-weighted local statistics with
// zero-padded windows, averaged over the volume
inline double ssim(const Vol& a, const Vol& b, std::int64_t radius, double sigma, double data_range) {
    std::vector<double> g(static_cast<std::size_t>(2 * radius + 1));
    double gsum = 0.0;
    for (std::int64_t i = -radius; i <= radius; ++i) {
        g[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        gsum += g[static_cast<std::size_t>(i + radius)];
    }
    for (auto& v : g) v /= gsum;

    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    double total = 0.0;
    for (std::int64_t z = 0; z < a.d; ++z)
        for (std::int64_t y = 0; y < a.h; ++y)
            for (std::int64_t x = 0; x < a.w; ++x) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (std::int64_t dz = -radius; dz <= radius; ++dz)
                    for (std::int64_t dy = -radius; dy <= radius; ++dy)
                        for (std::int64_t dx = -radius; dx <= radius; ++dx) {
                            const double wgt = g[static_cast<std::size_t>(dz + radius)] *
                                               g[static_cast<std::size_t>(dy + radius)] *
                                               g[static_cast<std::size_t>(dx + radius)];
                            const std::int64_t zi = z + dz, yi = y + dy, xi = x + dx;
                            double av = 0.0, bv = 0.0;
                            if (zi >= 0 && zi < a.d && yi >= 0 && yi < a.h && xi >= 0 && xi < a.w) {
                                av = a.at(0, 0, zi, yi, xi);
                                bv = b.at(0, 0, zi, yi, xi);
                            }
                            mx += wgt * av;
                            my += wgt * bv;
                            mxx += wgt * av * av;
                            myy += wgt * bv * bv;
                            mxy += wgt * av * bv;
                        }
                const double vx = mxx - mx * mx;
                const double vy = myy - my * my;
                const double cov = mxy - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
    return total / static_cast<double>(a.d * a.h * a.w);
}

// Direct evaluation of the perceptual distance: run both images through the
// given conv+ReLU stack and sum the per-layer mean squared feature distances.
struct ConvLayer {
    Vol weights;               // (Cout, Cin, K, K, K)
    std::vector<double> bias;  // Cout
};

inline double upl(const Vol& pred, const Vol& target, const std::vector<ConvLayer>& stack) {
    Vol fp = pred, ft = target;
    double total = 0.0;
    for (const auto& layer : stack) {
        fp = relu(conv3d(fp, layer.weights, layer.bias));
        ft = relu(conv3d(ft, layer.weights, layer.bias));
        double dist = 0.0;
        for (std::size_t i = 0; i < fp.data.size(); ++i) {
            const double d = fp.data[i] - ft.data[i];
            dist += d * d;
        }
        total += dist / static_cast<double>(fp.c * fp.d * fp.h * fp.w) / static_cast<double>(fp.n);
    }
    return total;
}

}  // namespace oracle
