#include "ovavss/fusion/fusion.hpp"

#include <stdexcept>

namespace ovavss::model {

using namespace ovavss::num;

std::string fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::none: return "none";
    case FusionMode::add: return "add";
    case FusionMode::bi_attn: return "bi_attn";
  }
  throw std::invalid_argument("bad fusion mode");
}

FusionMode fusion_mode_from_name(const std::string& name) {
  if (name == "none") return FusionMode::none;
  if (name == "add") return FusionMode::add;
  if (name == "bi_attn") return FusionMode::bi_attn;
  throw std::invalid_argument("unknown fusion mode: " + name);
}

FusionParams make_fusion(ParamStore& store, const std::string& prefix,
                         const FusionConfig& cfg, Rng& rng) {
  FusionParams p;
  for (int i = 0; i < 3; ++i) {
    const int cin = kPyramidChannels[static_cast<std::size_t>(i + 1)];  // levels 2,3,4
    const std::string base = prefix + ".level" + std::to_string(i + 2);
    p.level_proj[static_cast<std::size_t>(i)] =
        make_conv(store, base + ".proj", cin, kCav, 1, 1, 0, rng);
    p.level_norm[static_cast<std::size_t>(i)] = make_norm(store, base + ".norm", kCav);
  }
  p.audio_proj = make_linear(store, prefix + ".audio.proj", kAudioDim, kCav, rng);
  p.audio_norm = make_norm(store, prefix + ".audio.norm", kCav);
  p.a2v = make_mha(store, prefix + ".a2v", kCav, cfg.heads, rng);
  p.v2a = make_mha(store, prefix + ".v2a", kCav, cfg.heads, rng);
  return p;
}

ProjectedInputs project_inputs(const Tensor& audio, const VisualPyramid& pyramid,
                               const FusionParams& params) {
  if (pyramid.levels.size() != 4) {
    throw std::invalid_argument("early_fuse: pyramid must have 4 levels, got " +
                                std::to_string(pyramid.levels.size()));
  }
  if (audio.rank() != 1 || audio.dim(0) != kAudioDim) {
    throw std::invalid_argument("early_fuse: audio must be [128], got " +
                                shape_str(audio.shape()));
  }
  ProjectedInputs out;
  Tensor a = linear(reshape(audio, {1, kAudioDim}), params.audio_proj);
  a = group_norm(reshape(a, {kCav}), kGnGroups, params.audio_norm.gamma,
                 params.audio_norm.beta);
  out.audio_token = reshape(a, {1, kCav});
  for (int i = 0; i < 3; ++i) {
    const Tensor& level = pyramid.levels[static_cast<std::size_t>(i + 1)];
    if (level.rank() != 3) {
      throw std::invalid_argument("early_fuse: pyramid level must be [C,H,W]");
    }
    const int h = level.dim(1), w = level.dim(2);
    Tensor proj = conv(reshape(level, {1, level.dim(0), h, w}),
                       params.level_proj[static_cast<std::size_t>(i)]);
    proj = group_norm(proj, kGnGroups, params.level_norm[static_cast<std::size_t>(i)].gamma,
                      params.level_norm[static_cast<std::size_t>(i)].beta);
    // [1,C,H,W] -> tokens [H*W, C]
    out.level_tokens.push_back(transpose(reshape(proj, {kCav, h * w})));
    out.dims.emplace_back(h, w);
  }
  return out;
}

FusedFrame early_fuse(const Tensor& audio, const VisualPyramid& pyramid,
                      const FusionParams& params, const FusionConfig& cfg) {
  ProjectedInputs in = project_inputs(audio, pyramid, params);
  Tensor audio_tok = in.audio_token;
  std::vector<Tensor> vis = in.level_tokens;

  switch (cfg.mode) {
    case FusionMode::none:
      break;
    case FusionMode::add: {
      const Tensor a_vec = reshape(audio_tok, {kCav});
      if (cfg.multi_level) {
        for (Tensor& tokens : vis) tokens = add_rowwise(tokens, a_vec);
      } else {
        vis[2] = add_rowwise(vis[2], a_vec);
      }
      break;
    }
    case FusionMode::bi_attn: {
      if (cfg.multi_level) {
        Tensor s = concat_rows(vis);
        Tensor f_av = add(multi_head_attention(audio_tok, s, s, params.a2v), audio_tok);
        Tensor f_va = add(multi_head_attention(s, audio_tok, audio_tok, params.v2a), s);
        audio_tok = f_av;
        int offset = 0;
        for (int i = 0; i < 3; ++i) {
          const int rows = in.dims[static_cast<std::size_t>(i)].first *
                           in.dims[static_cast<std::size_t>(i)].second;
          vis[static_cast<std::size_t>(i)] = slice_rows(f_va, offset, rows);
          offset += rows;
        }
      } else {
        Tensor s = vis[2];  // coarsest level only
        Tensor f_av = add(multi_head_attention(audio_tok, s, s, params.a2v), audio_tok);
        vis[2] = add(multi_head_attention(s, audio_tok, audio_tok, params.v2a), s);
        audio_tok = f_av;
      }
      break;
    }
  }

  FusedFrame out;
  out.f_av = reshape(audio_tok, {kCav});
  for (int i = 0; i < 3; ++i) {
    const auto [h, w] = in.dims[static_cast<std::size_t>(i)];
    out.f_va.push_back(reshape(transpose(vis[static_cast<std::size_t>(i)]), {kCav, h, w}));
  }
  return out;
}

}  // namespace ovavss::model
