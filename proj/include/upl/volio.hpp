#pragma once

#include <string>

#include "upl/volume.hpp"

namespace upl {

enum class RawDtype { kF32, kU16 };
enum class Endianness { kLittle, kBig };
enum class MipAxis { kAxial, kCoronal, kSagittal };

// UVOL: magic "UVOL", version u16=1, dims (D,H,W) as u32, voxel size as f32,
// then raw little-endian f32 data. Round-trips are bit-identical.
void save_uvol(const Volume& v, const std::string& path);
Volume load_uvol(const std::string& path);

// serialize to an in-memory byte string (same layout as the file)
std::string uvol_bytes(const Volume& v);

// raw import; u16 values are scaled by 1/65535
Volume import_raw(const std::string& path, std::int64_t d, std::int64_t h, std::int64_t w, RawDtype dtype,
                  Endianness endianness);

// per-pixel maximum along the chosen axis: axial collapses D -> (H,W),
// coronal collapses H -> (D,W), sagittal collapses W -> (D,H)
Image2D mip_project(const Volume& v, MipAxis axis);

// binary PGM P5, maxval 255, byte = round-half-up of 255*x; values must be in [0,1]
void export_pgm(const Image2D& img, const std::string& path);

MipAxis parse_mip_axis(const std::string& s);

}  // namespace upl
