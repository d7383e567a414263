#include "upl/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace upl {

PhantomKind parse_phantom_kind(const std::string& s) {
    if (s == "root") return PhantomKind::kRoot;
    if (s == "vessel") return PhantomKind::kVessel;
    throw std::invalid_argument("unknown phantom kind '" + s + "'");
}

std::string phantom_kind_str(PhantomKind k) { return k == PhantomKind::kRoot ? "root" : "vessel"; }

namespace {

struct Vec3 {
    double z, y, x;
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.z + b.z, a.y + b.y, a.x + b.x}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a.z - b.z, a.y - b.y, a.x - b.x}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.z, s * a.y, s * a.x}; }
double dot(Vec3 a, Vec3 b) { return a.z * b.z + a.y * b.y + a.x * b.x; }
double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
Vec3 normalized(Vec3 a) {
    const double n = norm(a);
    return n > 0 ? (1.0 / n) * a : Vec3{1, 0, 0};
}

struct Segment {
    Vec3 p0, p1;
    double r0, r1;
    double intensity;
};

// Gaussian radial profile: intensity * exp(-d^2 / (2 (r/2)^2)); contributions
// beyond 2r are below 3.4e-4 and are cut off.
void rasterize(Volume& vol, const Segment& s) {
    const double rmax = std::max(s.r0, s.r1);
    const double cut = 2.0 * rmax + 1.0;
    const std::int64_t z0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(std::min(s.p0.z, s.p1.z) - cut)));
    const std::int64_t z1 = std::min<std::int64_t>(vol.dims[0] - 1, static_cast<std::int64_t>(std::ceil(std::max(s.p0.z, s.p1.z) + cut)));
    const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(std::min(s.p0.y, s.p1.y) - cut)));
    const std::int64_t y1 = std::min<std::int64_t>(vol.dims[1] - 1, static_cast<std::int64_t>(std::ceil(std::max(s.p0.y, s.p1.y) + cut)));
    const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(std::min(s.p0.x, s.p1.x) - cut)));
    const std::int64_t x1 = std::min<std::int64_t>(vol.dims[2] - 1, static_cast<std::int64_t>(std::ceil(std::max(s.p0.x, s.p1.x) + cut)));

    const Vec3 axis = s.p1 - s.p0;
    const double len2 = dot(axis, axis);
    for (std::int64_t z = z0; z <= z1; ++z) {
        for (std::int64_t y = y0; y <= y1; ++y) {
            for (std::int64_t x = x0; x <= x1; ++x) {
                const Vec3 p{static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)};
                double t = len2 > 0 ? dot(p - s.p0, axis) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const Vec3 c = s.p0 + t * axis;
                const double d = norm(p - c);
                const double r = s.r0 + t * (s.r1 - s.r0);
                if (d > 2.0 * r) continue;
                const double sig = r * 0.5;
                const double v = s.intensity * std::exp(-0.5 * d * d / (sig * sig));
                float& cell = vol.at(z, y, x);
                cell = std::max(cell, static_cast<float>(v));
            }
        }
    }
}

// unit vector with direction perturbed by `amount`; exactly `dir` at amount 0
Vec3 perturb(Vec3 dir, double amount, Rng& rng) {
    const Vec3 noise{amount * rng.normal(), amount * rng.normal(), amount * rng.normal()};
    return normalized(dir + noise);
}

void grow_root(Volume& vol, const PhantomSpec& spec, Rng& rng) {
    for (std::int64_t s = 0; s < spec.n_structures; ++s) {
        // start on the top face at a voxel center so straight tubes pass
        // exactly through voxel centers
        const double y = 0.5 + static_cast<double>(rng.index(static_cast<std::uint64_t>(spec.dims[1] - 1)));
        const double x = 0.5 + static_cast<double>(rng.index(static_cast<std::uint64_t>(spec.dims[2] - 1)));
        Vec3 pos{0.0, y, x};
        Vec3 dir = normalized(Vec3{1.0, spec.tortuosity * rng.normal(), spec.tortuosity * rng.normal()});
        const double intensity = rng.uniform(spec.intensity_min, spec.intensity_max);
        const double max_len = static_cast<double>(spec.dims[0]) * 1.5;
        const std::int64_t steps = static_cast<std::int64_t>(max_len);
        for (std::int64_t i = 0; i < steps; ++i) {
            const double t0 = static_cast<double>(i) / static_cast<double>(steps);
            const double t1 = static_cast<double>(i + 1) / static_cast<double>(steps);
            const double r0 = spec.radius_max + t0 * (spec.radius_min - spec.radius_max);
            const double r1 = spec.radius_max + t1 * (spec.radius_min - spec.radius_max);
            const Vec3 next = pos + dir;
            rasterize(vol, {pos, next, r0, r1, intensity});
            pos = next;
            if (pos.z > spec.dims[0] + 2 || pos.y < -2 || pos.y > spec.dims[1] + 2 || pos.x < -2 ||
                pos.x > spec.dims[2] + 2) {
                break;
            }
            dir = perturb(dir, spec.tortuosity, rng);
            if (dir.z < 0.2) {  // keep growing downward
                dir.z = 0.2;
                dir = normalized(dir);
            }
        }
    }
}

void grow_vessel(Volume& vol, const PhantomSpec& spec, Rng& rng) {
    struct Branch {
        Vec3 pos, dir;
        double radius;
        int depth;
    };
    const Vec3 center{0.5 * static_cast<double>(spec.dims[0]), 0.5 * static_cast<double>(spec.dims[1]),
                      0.5 * static_cast<double>(spec.dims[2])};
    std::vector<Branch> queue;
    for (std::int64_t s = 0; s < spec.n_structures; ++s) {
        const Vec3 dir = normalized(Vec3{rng.normal(), rng.normal(), rng.normal()});
        queue.push_back({center, dir, spec.radius_max, 0});
    }
    const double intensity = rng.uniform(spec.intensity_min, spec.intensity_max);
    const std::int64_t max_steps = spec.dims[0] + spec.dims[1] + spec.dims[2];
    std::size_t qi = 0;
    while (qi < queue.size() && queue.size() < 512) {
        Branch b = queue[qi++];
        for (std::int64_t i = 0; i < max_steps; ++i) {
            const Vec3 next = b.pos + b.dir;
            rasterize(vol, {b.pos, next, b.radius, b.radius, intensity});
            b.pos = next;
            if (b.pos.z < -2 || b.pos.z > spec.dims[0] + 2 || b.pos.y < -2 || b.pos.y > spec.dims[1] + 2 ||
                b.pos.x < -2 || b.pos.x > spec.dims[2] + 2) {
                break;
            }
            b.dir = perturb(b.dir, spec.tortuosity, rng);
            if (rng.uniform() < spec.branching_prob && b.radius > spec.radius_min) {
                const double child_r = std::max(spec.radius_min, 0.75 * b.radius);
                const Vec3 child_dir = perturb(b.dir, 0.8, rng);
                queue.push_back({b.pos, child_dir, child_r, b.depth + 1});
                b.radius = std::max(spec.radius_min, 0.85 * b.radius);
            }
        }
    }
}

}  // namespace

Volume generate_phantom(const PhantomSpec& spec) {
    for (auto d : spec.dims) {
        if (d < 16) throw std::invalid_argument("generate_phantom: dims must be >= 16");
    }
    if (spec.radius_min < 0.5) throw std::invalid_argument("generate_phantom: radius_min must be >= 0.5 voxels");
    const std::int64_t min_dim = std::min({spec.dims[0], spec.dims[1], spec.dims[2]});
    if (spec.radius_max > static_cast<double>(min_dim) / 4.0) {
        throw std::invalid_argument("generate_phantom: radius " + std::to_string(spec.radius_max) +
                                    " exceeds dims/4, structures cannot fit");
    }
    if (spec.intensity_min <= 0.0 || spec.intensity_max > 1.0 || spec.intensity_min > spec.intensity_max) {
        throw std::invalid_argument("generate_phantom: intensity range must lie in (0,1]");
    }

    Volume vol(spec.dims[0], spec.dims[1], spec.dims[2]);
    Rng rng(mix_seed(spec.seed, spec.kind == PhantomKind::kRoot ? 0xA001 : 0xA002));
    if (spec.n_structures == 0) return vol;
    if (spec.kind == PhantomKind::kRoot) {
        grow_root(vol, spec, rng);
    } else {
        grow_vessel(vol, spec, rng);
    }
    return vol;
}

Volume add_rician_noise(const Volume& v, const NoiseSpec& spec) {
    if (spec.level <= 0.0) throw std::invalid_argument("add_rician_noise: noise level must be > 0");
    Rng rng(mix_seed(spec.seed, 0xB001));
    Volume out = v;
    const double sigma = spec.level;
    for (auto& x : out.data) {
        const double n1 = sigma * rng.normal();
        const double n2 = sigma * rng.normal();
        const double re = static_cast<double>(x) + n1;
        x = static_cast<float>(std::sqrt(re * re + n2 * n2));
    }
    return out;
}

Volume random_crop(const Volume& v, std::int64_t size, Rng& rng, std::array<std::int64_t, 3>* offsets) {
    for (auto d : v.dims) {
        if (size > d) {
            throw std::invalid_argument("random_crop: size " + std::to_string(size) + " exceeds volume dims");
        }
    }
    std::array<std::int64_t, 3> off{};
    for (int i = 0; i < 3; ++i) {
        off[static_cast<std::size_t>(i)] =
            static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(v.dims[static_cast<std::size_t>(i)] - size + 1)));
    }
    if (offsets) *offsets = off;
    return crop_at(v, size, off);
}

Volume crop_at(const Volume& v, std::int64_t size, const std::array<std::int64_t, 3>& offsets) {
    for (int i = 0; i < 3; ++i) {
        if (offsets[static_cast<std::size_t>(i)] < 0 ||
            offsets[static_cast<std::size_t>(i)] + size > v.dims[static_cast<std::size_t>(i)]) {
            throw std::invalid_argument("crop_at: crop outside volume");
        }
    }
    Volume out(size, size, size);
    out.voxel_size = v.voxel_size;
    for (std::int64_t z = 0; z < size; ++z)
        for (std::int64_t y = 0; y < size; ++y)
            for (std::int64_t x = 0; x < size; ++x)
                out.at(z, y, x) = v.at(z + offsets[0], y + offsets[1], x + offsets[2]);
    return out;
}

Volume normalize_volume(const Volume& v) {
    float mx = 0.0f;
    for (float x : v.data) mx = std::max(mx, x);
    if (!(mx > 0.0f)) throw std::domain_error("normalize_volume: all-zero volume");
    Volume out = v;
    for (auto& x : out.data) x /= mx;
    return out;
}

}  // namespace upl
