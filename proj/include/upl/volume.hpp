#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "upl/tensor.hpp"

namespace upl {

// 3D scalar field with voxel-size metadata; the unit of dataset I/O and
// metric evaluation. data is f32, W fastest-varying.
struct Volume {
    std::array<std::int64_t, 3> dims{0, 0, 0};        // (D, H, W)
    std::array<float, 3> voxel_size{1.0f, 1.0f, 1.0f};  // (dz, dy, dx) in mm
    std::vector<float> data;

    Volume() = default;
    Volume(std::int64_t d, std::int64_t h, std::int64_t w)
        : dims{d, h, w}, data(static_cast<std::size_t>(d * h * w), 0.0f) {
        if (d < 0 || h < 0 || w < 0) throw std::invalid_argument("Volume: negative extent");
    }

    std::int64_t numel() const { return dims[0] * dims[1] * dims[2]; }
    std::int64_t index(std::int64_t z, std::int64_t y, std::int64_t x) const {
        return (z * dims[1] + y) * dims[2] + x;
    }
    float& at(std::int64_t z, std::int64_t y, std::int64_t x) { return data[static_cast<std::size_t>(index(z, y, x))]; }
    const float& at(std::int64_t z, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>(index(z, y, x))];
    }

    bool all_finite() const {
        for (float v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    // wrap as a (1, 1, D, H, W) tensor
    template <typename T>
    Tensor5T<T> to_tensor() const {
        Tensor5T<T> t({1, 1, dims[0], dims[1], dims[2]});
        for (std::size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<T>(data[i]);
        return t;
    }

    template <typename T>
    static Volume from_tensor(const Tensor5T<T>& t) {
        if (t.shape[0] != 1 || t.shape[1] != 1) {
            throw std::invalid_argument("Volume::from_tensor: expected (1,1,D,H,W), got " + shape_str(t.shape));
        }
        Volume v(t.shape[2], t.shape[3], t.shape[4]);
        for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(t.data[i]);
        return v;
    }
};

// row-major 2D image in [0,1], used for MIP panels
struct Image2D {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<float> data;

    Image2D() = default;
    Image2D(std::int64_t h, std::int64_t w) : height(h), width(w), data(static_cast<std::size_t>(h * w), 0.0f) {}
    float& at(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * width + c)]; }
    const float& at(std::int64_t r, std::int64_t c) const { return data[static_cast<std::size_t>(r * width + c)]; }
};

}  // namespace upl
