#pragma once

#include <string>
#include <vector>

#include "upl/nets.hpp"

namespace upl {

// UPLCKPT1: magic "UPLCKPT1", then per tensor a u32 name length, the UTF-8
// name, five u32 shape extents, and little-endian f32 data; tensors repeat
// until end of file.
std::string checkpoint_bytes(const std::vector<NamedTensor<float>>& tensors);
std::vector<NamedTensor<float>> checkpoint_from_bytes(const std::string& bytes);

void save_checkpoint(const std::vector<NamedTensor<float>>& tensors, const std::string& path);
std::vector<NamedTensor<float>> load_checkpoint(const std::string& path);

}  // namespace upl
