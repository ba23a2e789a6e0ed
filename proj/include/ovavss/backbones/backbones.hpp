#pragma once

#include <array>
#include <vector>

#include "ovavss/numcore/nn.hpp"

namespace ovavss::model {

// Four-stage feature hierarchy; level k has spatial dims (H,W)/2^(k+1) and
// channel widths (32, 64, 128, 128).
struct VisualPyramid {
  std::vector<num::Tensor> levels;  // [B, D_k, H_k, W_k], k = 1..4 at index 0..3
};

inline constexpr std::array<int, 4> kPyramidChannels = {32, 64, 128, 128};
inline constexpr int kStemChannels = 16;
inline constexpr int kGnGroups = 8;
inline constexpr int kAudioDim = 128;

struct VisualEncoderParams {
  num::ConvParams stem;
  num::NormParams stem_norm;
  struct Stage {
    num::ConvParams down;    // 3x3 stride 2
    num::NormParams n1;
    num::ConvParams refine;  // 3x3 stride 1
    num::NormParams n2;
  };
  std::array<Stage, 4> stages;
};

VisualEncoderParams make_visual_encoder(num::ParamStore& store,
                                        const std::string& prefix, num::Rng& rng);

// frames: [B,3,H,W], H and W divisible by 32.
VisualPyramid visual_encode_batch(const num::Tensor& frames,
                                  const VisualEncoderParams& params);

// Single-frame convenience: [3,H,W] in, per-level [D_k,H_k,W_k] out.
VisualPyramid visual_encode(const num::Tensor& frame,
                            const VisualEncoderParams& params);

// Two-layer MLP adapter over the 128-d audio feature. The default
// initialization realizes an exact identity (relu(x) - relu(-x) = x) so
// training starts from the raw signature space.
struct AudioEncoderParams {
  num::LinearParams l1;  // 128 -> 256
  num::LinearParams l2;  // 256 -> 128
};

AudioEncoderParams make_audio_encoder(num::ParamStore& store,
                                      const std::string& prefix);

// audio: [T,128] (or [128]); returns the same shape.
num::Tensor audio_encode(const num::Tensor& audio, const AudioEncoderParams& params);

}  // namespace ovavss::model
