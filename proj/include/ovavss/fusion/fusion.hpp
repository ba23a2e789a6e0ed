#pragma once

#include <string>
#include <vector>

#include "ovavss/backbones/backbones.hpp"
#include "ovavss/numcore/nn.hpp"

namespace ovavss::model {

enum class FusionMode { none, add, bi_attn };

std::string fusion_mode_name(FusionMode m);
FusionMode fusion_mode_from_name(const std::string& name);

inline constexpr int kCav = 128;

struct FusionConfig {
  FusionMode mode = FusionMode::bi_attn;
  bool multi_level = true;
  int heads = 1;
};

struct FusionParams {
  // pointwise projection + group norm per fused level (2,3,4)
  std::array<num::ConvParams, 3> level_proj;
  std::array<num::NormParams, 3> level_norm;
  num::LinearParams audio_proj;
  num::NormParams audio_norm;
  num::MhaParams a2v;  // audio query over visual tokens
  num::MhaParams v2a;  // visual queries over the audio token
};

FusionParams make_fusion(num::ParamStore& store, const std::string& prefix,
                         const FusionConfig& cfg, num::Rng& rng);

// Step (1)-(2) of the fuse contract, exposed for the residual-identity and
// branch-isolation tests.
struct ProjectedInputs {
  num::Tensor audio_token;                 // [1, C_av]
  std::vector<num::Tensor> level_tokens;   // per level [H_k*W_k, C_av]
  std::vector<std::pair<int, int>> dims;   // (H_k, W_k) per level
};
ProjectedInputs project_inputs(const num::Tensor& audio, const VisualPyramid& pyramid,
                               const FusionParams& params);

struct FusedFrame {
  num::Tensor f_av;                 // [C_av]
  std::vector<num::Tensor> f_va;    // levels 2,3,4, each [C_av, H_k, W_k]
};

// audio: [128]; pyramid: per-frame levels [D_k,H_k,W_k] (all 4 present).
FusedFrame early_fuse(const num::Tensor& audio, const VisualPyramid& pyramid,
                      const FusionParams& params, const FusionConfig& cfg);

}  // namespace ovavss::model
