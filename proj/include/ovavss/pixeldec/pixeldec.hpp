#pragma once

#include <array>
#include <vector>

#include "ovavss/fusion/fusion.hpp"

namespace ovavss::model {

inline constexpr int kCe = 128;

struct PixelDecParams {
  // lateral 1x1 projections for levels 1..4 and a 3x3 smoothing conv per
  // level applied after the top-down addition
  std::array<num::ConvParams, 4> lateral;
  std::array<num::ConvParams, 4> smooth;
};

PixelDecParams make_pixeldec(num::ParamStore& store, const std::string& prefix,
                             num::Rng& rng);

struct PixelDecoderOut {
  std::vector<num::Tensor> memory;  // levels 4,3,2, each [C_e,H_k,W_k]
  num::Tensor pixel_embed;          // [C_e, H/4, W/4]
};

// Batched variant used by the model: f_va levels and level1 are [T,C,H,W];
// memory levels and pixel_embed come back batched the same way.
struct PixelDecoderBatchOut {
  std::vector<num::Tensor> memory;  // levels 4,3,2, each [T,C_e,H_k,W_k]
  num::Tensor pixel_embed;          // [T, C_e, H/4, W/4]
};
PixelDecoderBatchOut pixel_decode_batch(const std::vector<num::Tensor>& f_va,
                                        const num::Tensor& level1,
                                        const PixelDecParams& params,
                                        bool top_down = true);

// fused: one frame; level1: [D_1, H/4, W/4] from the pyramid.
PixelDecoderOut pixel_decode(const FusedFrame& fused, const num::Tensor& level1,
                             const PixelDecParams& params, bool top_down = true);

}  // namespace ovavss::model
