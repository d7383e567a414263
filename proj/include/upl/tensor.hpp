#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace upl {

using Shape5 = std::array<std::int64_t, 5>;  // (N, C, D, H, W)

inline std::int64_t shape_numel(const Shape5& s) {
    return s[0] * s[1] * s[2] * s[3] * s[4];
}

inline std::string shape_str(const Shape5& s) {
    std::ostringstream os;
    os << "(" << s[0] << "," << s[1] << "," << s[2] << "," << s[3] << "," << s[4] << ")";
    return os.str();
}

// Dense 5-axis tensor, W fastest-varying, then H, D, C, N.
template <typename T>
struct Tensor5T {
    Shape5 shape{0, 0, 0, 0, 0};
    std::vector<T> data;

    Tensor5T() = default;
    explicit Tensor5T(const Shape5& s) : shape(s), data(static_cast<std::size_t>(shape_numel(s)), T(0)) {
        for (auto d : s) {
            if (d < 0) throw std::invalid_argument("Tensor5: negative extent in " + shape_str(s));
        }
    }
    Tensor5T(const Shape5& s, T fill) : Tensor5T(s) {
        for (auto& v : data) v = fill;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool empty() const { return data.empty(); }

    std::int64_t n() const { return shape[0]; }
    std::int64_t c() const { return shape[1]; }
    std::int64_t d() const { return shape[2]; }
    std::int64_t h() const { return shape[3]; }
    std::int64_t w() const { return shape[4]; }

    std::int64_t index(std::int64_t n_, std::int64_t c_, std::int64_t d_, std::int64_t h_, std::int64_t w_) const {
        return (((n_ * shape[1] + c_) * shape[2] + d_) * shape[3] + h_) * shape[4] + w_;
    }
    T& at(std::int64_t n_, std::int64_t c_, std::int64_t d_, std::int64_t h_, std::int64_t w_) {
        return data[static_cast<std::size_t>(index(n_, c_, d_, h_, w_))];
    }
    const T& at(std::int64_t n_, std::int64_t c_, std::int64_t d_, std::int64_t h_, std::int64_t w_) const {
        return data[static_cast<std::size_t>(index(n_, c_, d_, h_, w_))];
    }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    void fill(T v) {
        for (auto& x : data) x = v;
    }

    bool same_shape(const Tensor5T& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T& v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    T scalar() const {
        if (numel() != 1) throw std::runtime_error("Tensor5: scalar() on tensor of numel " + std::to_string(numel()));
        return data[0];
    }

    template <typename U>
    Tensor5T<U> cast() const {
        Tensor5T<U> out(shape);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }

    static Tensor5T zeros(const Shape5& s) { return Tensor5T(s); }
    static Tensor5T full(const Shape5& s, T v) { return Tensor5T(s, v); }
    static Tensor5T scalar_tensor(T v) { return Tensor5T({1, 1, 1, 1, 1}, v); }
};

using Tensor5f = Tensor5T<float>;
using Tensor5d = Tensor5T<double>;

}  // namespace upl
