#pragma once

#include "dhcnet/tensor.hpp"

#include <string>

namespace dhcnet {

// 8-bit RGB PNG writer; values in [0,1] are rounded to bytes. Fixed
// filter/compression settings keep the byte stream deterministic.
void write_png(const std::string& path, const Tensor& image);

// Reads an 8-bit RGB PNG back as a 3 x H x W tensor scaled to [0,1].
Tensor read_png(const std::string& path);

}  // namespace dhcnet
