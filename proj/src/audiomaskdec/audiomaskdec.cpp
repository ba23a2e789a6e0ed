#include "ovavss/audiomaskdec/audiomaskdec.hpp"

#include <cmath>
#include <stdexcept>

namespace ovavss::model {

using namespace ovavss::num;

std::string audio_prompt_name(AudioPromptMode m) {
  switch (m) {
    case AudioPromptMode::none: return "none";
    case AudioPromptMode::concat_add: return "concat_add";
    case AudioPromptMode::cross_attn: return "cross_attn";
    case AudioPromptMode::audiomaskdec: return "audiomaskdec";
  }
  throw std::invalid_argument("bad audio prompt mode");
}

AudioPromptMode audio_prompt_from_name(const std::string& name) {
  if (name == "none") return AudioPromptMode::none;
  if (name == "concat_add") return AudioPromptMode::concat_add;
  if (name == "cross_attn") return AudioPromptMode::cross_attn;
  if (name == "audiomaskdec") return AudioPromptMode::audiomaskdec;
  throw std::invalid_argument("unknown audio prompt mode: " + name);
}

MaskDecParams make_maskdec(ParamStore& store, const std::string& prefix,
                           const MaskDecConfig& cfg, Rng& rng) {
  const int c = cfg.channels;
  MaskDecParams p;
  p.query_content = store.add(prefix + ".query_content",
                              xavier_uniform({cfg.n_queries, c}, c, c, rng));
  p.query_pe = store.add(prefix + ".query_pe",
                         xavier_uniform({cfg.n_queries, c}, c, c, rng));
  p.temporal_pe = store.add(prefix + ".temporal_pe",
                            xavier_uniform({cfg.max_frames, c}, c, c, rng));
  p.level_emb = store.add(prefix + ".level_emb", xavier_uniform({3, c}, c, c, rng));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    DecoderLayerParams lp;
    lp.st_cross = make_mha(store, base + ".st_cross", c, cfg.heads, rng);
    lp.n_st = make_norm(store, base + ".n_st", c);
    lp.obj_self = make_mha(store, base + ".obj_self", c, cfg.heads, rng);
    lp.n_obj = make_norm(store, base + ".n_obj", c);
    lp.audio_self = make_mha(store, base + ".audio_self", c, cfg.heads, rng);
    lp.n_audio = make_norm(store, base + ".n_audio", c);
    lp.audio_cross = make_mha(store, base + ".audio_cross", c, cfg.heads, rng);
    lp.n_ac = make_norm(store, base + ".n_ac", c);
    lp.ffn1 = make_linear(store, base + ".ffn1", c, cfg.ffn_hidden, rng);
    lp.ffn2 = make_linear(store, base + ".ffn2", cfg.ffn_hidden, c, rng);
    lp.n_ffn = make_norm(store, base + ".n_ffn", c);
    p.layers.push_back(std::move(lp));
  }
  p.dec_norm = make_norm(store, prefix + ".dec_norm", c);
  p.sound_head = make_mlp(store, prefix + ".sound_head", {c, c, c, 2}, rng);
  p.mask_head = make_mlp(store, prefix + ".mask_head", {c, c, c, kCe}, rng);
  p.concat_add_proj =
      make_linear(store, prefix + ".concat_add_proj", cfg.max_frames * c, c, rng);
  p.pre_cross = make_mha(store, prefix + ".pre_cross", c, cfg.heads, rng);
  p.pre_cross_norm = make_norm(store, prefix + ".pre_cross_norm", c);
  return p;
}

Tensor sound_head(const Tensor& embeddings, const MaskDecParams& params) {
  return mlp(embeddings, params.sound_head);
}

Tensor mask_head(const Tensor& embeddings, const Tensor& pixel_mat,
                 const MaskDecParams& params) {
  const Tensor mask_emb = mlp(embeddings, params.mask_head);
  if (mask_emb.dim(1) != pixel_mat.dim(0)) {
    throw std::invalid_argument(
        "mask_head: embedding dim " + std::to_string(mask_emb.dim(1)) +
        " does not match pixel embedding dim " + std::to_string(pixel_mat.dim(0)));
  }
  return matmul(mask_emb, pixel_mat);
}

namespace {

struct MemoryTokens {
  std::vector<Tensor> tokens;  // per level [T*HW, C]
  std::vector<Tensor> key_pe;  // per level [T*HW, C]
  std::vector<std::pair<int, int>> dims;
  Tensor pixel_mat;  // [C_e, T*h*w]
  int t = 0, ph = 0, pw = 0;
};

MemoryTokens build_memory(const PixelDecoderBatchOut& memory,
                          const MaskDecParams& params) {
  MemoryTokens out;
  out.t = memory.pixel_embed.dim(0);
  out.ph = memory.pixel_embed.dim(2);
  out.pw = memory.pixel_embed.dim(3);
  const int c = memory.pixel_embed.dim(1);
  for (std::size_t lvl = 0; lvl < memory.memory.size(); ++lvl) {
    const Tensor& m = memory.memory[lvl];
    const int t = m.dim(0), h = m.dim(2), w = m.dim(3);
    const int hw = h * w;
    std::vector<Tensor> frame_tokens, frame_pe;
    Tensor ones = Tensor::full({hw, 1}, 1.0);
    for (int ti = 0; ti < t; ++ti) {
      Tensor frame = slice_rows(m, ti, 1);  // [1,C,h,w]
      frame_tokens.push_back(transpose(reshape(frame, {c, hw})));
      Tensor pe = add(slice_rows(params.level_emb, static_cast<int>(lvl), 1),
                      slice_rows(params.temporal_pe, ti, 1));  // [1,C]
      frame_pe.push_back(matmul(ones, pe));
    }
    out.tokens.push_back(concat_rows(frame_tokens));
    out.key_pe.push_back(concat_rows(frame_pe));
    out.dims.emplace_back(h, w);
  }
  std::vector<Tensor> pixel_cols;
  for (int ti = 0; ti < out.t; ++ti) {
    Tensor frame = slice_rows(memory.pixel_embed, ti, 1);
    pixel_cols.push_back(reshape(frame, {c, out.ph * out.pw}));
  }
  out.pixel_mat = concat_cols(pixel_cols);
  return out;
}

LayerOutput apply_heads(const Tensor& q, const MemoryTokens& mem,
                        const MaskDecParams& params) {
  LayerOutput out;
  out.embeddings = layer_norm(q, params.dec_norm.gamma, params.dec_norm.beta);
  out.sound_logits = sound_head(out.embeddings, params);
  out.sounding =
      reshape(slice_cols(softmax(out.sound_logits, -1), 0, 1), {q.dim(0)});
  Tensor logits = mask_head(out.embeddings, mem.pixel_mat, params);
  out.mask_logits = reshape(logits, {q.dim(0), mem.t, mem.ph, mem.pw});
  return out;
}

// Nearest-cell attention bias from the previous prediction: cells whose
// sigmoid stays below 0.5 are suppressed. Detached from the tape.
Tensor attention_bias(const LayerOutput& prev, int level_h, int level_w) {
  const int n = prev.mask_logits.dim(0), t = prev.mask_logits.dim(1);
  const int h = prev.mask_logits.dim(2), w = prev.mask_logits.dim(3);
  Tensor bias = Tensor::zeros({n, t * level_h * level_w});
  for (int qi = 0; qi < n; ++qi) {
    bool any = false;
    for (int ti = 0; ti < t; ++ti) {
      for (int y = 0; y < level_h; ++y) {
        for (int x = 0; x < level_w; ++x) {
          const int sy = y * h / level_h, sx = x * w / level_w;
          const double logit =
              prev.mask_logits.data()[((static_cast<std::size_t>(qi) * t + ti) * h + sy) * w + sx];
          const bool on = logit > 0.0;  // sigmoid > 0.5
          any = any || on;
          bias.data()[static_cast<std::size_t>(qi) * t * level_h * level_w +
                      (static_cast<std::size_t>(ti) * level_h + y) * level_w + x] =
              on ? 0.0 : -1e9;
        }
      }
    }
    if (!any) {  // nothing predicted: fall back to unrestricted attention
      for (int i = 0; i < t * level_h * level_w; ++i)
        bias.data()[static_cast<std::size_t>(qi) * t * level_h * level_w + i] = 0.0;
    }
  }
  return bias;
}

}  // namespace

std::vector<LayerOutput> decode(const PixelDecoderBatchOut& memory,
                                const Tensor& audio, const MaskDecParams& params,
                                const MaskDecConfig& cfg) {
  if (memory.memory.empty() || !memory.pixel_embed.defined()) {
    throw std::invalid_argument("decode: empty memory");
  }
  const int t = memory.pixel_embed.dim(0);
  if (t < 1) throw std::invalid_argument("decode: need at least one frame");
  if (audio.rank() != 2 || audio.dim(0) != t || audio.dim(1) != cfg.channels) {
    throw std::invalid_argument("decode: audio must be [T," +
                                std::to_string(cfg.channels) + "], got " +
                                shape_str(audio.shape()));
  }
  if (t > cfg.max_frames) {
    throw std::invalid_argument("decode: clip has " + std::to_string(t) +
                                " frames but temporal PE covers " +
                                std::to_string(cfg.max_frames));
  }

  MemoryTokens mem = build_memory(memory, params);
  const Tensor tpe = slice_rows(params.temporal_pe, 0, t);

  Tensor q = params.query_content;
  Tensor a = audio;

  // pre-decoder audio prompt variants
  if (cfg.audio_prompt == AudioPromptMode::concat_add) {
    if (t != cfg.max_frames) {
      throw std::invalid_argument("concat_add prompt requires T == max_frames");
    }
    Tensor flat = reshape(a, {1, t * cfg.channels});
    Tensor prompt = linear(flat, params.concat_add_proj);
    q = add_rowwise(q, reshape(prompt, {cfg.channels}));
  } else if (cfg.audio_prompt == AudioPromptMode::cross_attn) {
    Tensor qn = layer_norm(q, params.pre_cross_norm.gamma, params.pre_cross_norm.beta);
    q = add(q, multi_head_attention(add(qn, params.query_pe), add(a, tpe), a,
                                    params.pre_cross));
  }

  std::vector<LayerOutput> outputs;
  outputs.push_back(apply_heads(q, mem, params));

  const bool audio_layers = cfg.audio_prompt == AudioPromptMode::audiomaskdec;
  const int n_levels = static_cast<int>(mem.tokens.size());
  for (int l = 0; l < cfg.layers; ++l) {
    const DecoderLayerParams& lp = params.layers[static_cast<std::size_t>(l)];
    const int lvl = l % n_levels;  // rotation over levels 4,3,2

    // spatio-temporal cross-attention over all frames' memory tokens
    {
      Tensor bias;
      if (cfg.masked_attention) {
        bias = attention_bias(outputs.back(), mem.dims[static_cast<std::size_t>(lvl)].first,
                              mem.dims[static_cast<std::size_t>(lvl)].second);
      }
      Tensor qn = layer_norm(q, lp.n_st.gamma, lp.n_st.beta);
      q = add(q, multi_head_attention(
                     add(qn, params.query_pe),
                     add(mem.tokens[static_cast<std::size_t>(lvl)],
                         mem.key_pe[static_cast<std::size_t>(lvl)]),
                     mem.tokens[static_cast<std::size_t>(lvl)], lp.st_cross, bias));
    }

    // object self-attention; audio self-attention runs on its own stream
    {
      Tensor qn = layer_norm(q, lp.n_obj.gamma, lp.n_obj.beta);
      Tensor qk = add(qn, params.query_pe);
      q = add(q, multi_head_attention(qk, qk, qn, lp.obj_self));
    }
    if (audio_layers) {
      Tensor an = layer_norm(a, lp.n_audio.gamma, lp.n_audio.beta);
      Tensor ak = add(an, tpe);
      a = add(a, multi_head_attention(ak, ak, an, lp.audio_self));

      Tensor qn = layer_norm(q, lp.n_ac.gamma, lp.n_ac.beta);
      q = add(q, multi_head_attention(add(qn, params.query_pe), add(a, tpe), a,
                                      lp.audio_cross));
    }

    // feedforward
    {
      Tensor qn = layer_norm(q, lp.n_ffn.gamma, lp.n_ffn.beta);
      q = add(q, linear(relu(linear(qn, lp.ffn1)), lp.ffn2));
    }

    outputs.push_back(apply_heads(q, mem, params));
  }
  return outputs;
}

std::vector<LayerOutput> decode(const std::vector<PixelDecoderOut>& memory,
                                const std::vector<Tensor>& audio,
                                const MaskDecParams& params, const MaskDecConfig& cfg) {
  if (memory.empty()) throw std::invalid_argument("decode: empty memory");
  if (memory.size() != audio.size()) {
    throw std::invalid_argument("decode: memory and audio frame counts differ");
  }
  PixelDecoderBatchOut batched;
  const std::size_t n_levels = memory[0].memory.size();
  for (std::size_t lvl = 0; lvl < n_levels; ++lvl) {
    std::vector<Tensor> frames;
    for (const PixelDecoderOut& m : memory) {
      const Tensor& level = m.memory[lvl];
      frames.push_back(reshape(level, {1, level.dim(0), level.dim(1), level.dim(2)}));
    }
    batched.memory.push_back(concat_rows(frames));
  }
  std::vector<Tensor> pix;
  std::vector<Tensor> audio_rows;
  for (std::size_t i = 0; i < memory.size(); ++i) {
    const Tensor& pe = memory[i].pixel_embed;
    pix.push_back(reshape(pe, {1, pe.dim(0), pe.dim(1), pe.dim(2)}));
    audio_rows.push_back(reshape(audio[i], {1, cfg.channels}));
  }
  batched.pixel_embed = concat_rows(pix);
  return decode(batched, concat_rows(audio_rows), params, cfg);
}

}  // namespace ovavss::model
