#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "upl/rng.hpp"
#include "upl/volume.hpp"

namespace upl {

enum class PhantomKind { kRoot, kVessel };

PhantomKind parse_phantom_kind(const std::string& s);
std::string phantom_kind_str(PhantomKind k);

struct PhantomSpec {
    PhantomKind kind = PhantomKind::kVessel;
    std::array<std::int64_t, 3> dims{64, 64, 64};  // (D, H, W)
    std::int64_t n_structures = 6;
    double radius_min = 1.0;  // voxels
    double radius_max = 3.0;
    double intensity_min = 0.6;
    double intensity_max = 1.0;
    double branching_prob = 0.06;  // vessel only, per step
    double tortuosity = 0.25;
    std::uint64_t seed = 1;
};

struct NoiseSpec {
    double level = 0.10;  // sigma relative to the unit data range
    std::uint64_t seed = 1;
};

// Seeded synthetic volume of line-like tubes with Gaussian radial profiles
// on a zero background; values in [0,1].
Volume generate_phantom(const PhantomSpec& spec);

// out = sqrt((v + n1)^2 + n2^2), n1/n2 iid N(0, level^2); no re-normalization
Volume add_rician_noise(const Volume& v, const NoiseSpec& spec);

// axis-aligned cube crop with uniformly random offsets; offsets returned so a
// paired volume can be cropped at the same place
Volume random_crop(const Volume& v, std::int64_t size, Rng& rng, std::array<std::int64_t, 3>* offsets = nullptr);
Volume crop_at(const Volume& v, std::int64_t size, const std::array<std::int64_t, 3>& offsets);

// divides by the global maximum; rejects all-zero volumes
Volume normalize_volume(const Volume& v);

}  // namespace upl
