#pragma once

#include <map>
#include <string>

#include "ovavss/numcore/tensor.hpp"

namespace ovavss::num {

// Versioned binary weight file: magic "OVAVSS1", then one record per
// tensor: u32 name length, utf-8 name, u32 rank, u32 dims[rank], float64
// little-endian payload. Records are written in name order.
void save_checkpoint(const std::string& path,
                     const std::map<std::string, Tensor>& tensors);

// Load errors report the byte offset of the corruption.
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace ovavss::num
