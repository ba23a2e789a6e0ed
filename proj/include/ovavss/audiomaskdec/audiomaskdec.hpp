#pragma once

#include <string>
#include <vector>

#include "ovavss/numcore/nn.hpp"
#include "ovavss/pixeldec/pixeldec.hpp"

namespace ovavss::model {

enum class AudioPromptMode { none, concat_add, cross_attn, audiomaskdec };

std::string audio_prompt_name(AudioPromptMode m);
AudioPromptMode audio_prompt_from_name(const std::string& name);

struct MaskDecConfig {
  int n_queries = 20;
  int layers = 6;  // multiple of 3 keeps the level rotation balanced
  int channels = 128;
  int heads = 8;
  int ffn_hidden = 512;
  int max_frames = 5;  // temporal PE table length
  AudioPromptMode audio_prompt = AudioPromptMode::audiomaskdec;
  bool masked_attention = false;
};

struct DecoderLayerParams {
  num::MhaParams st_cross;
  num::NormParams n_st;
  num::MhaParams obj_self;
  num::NormParams n_obj;
  num::MhaParams audio_self;
  num::NormParams n_audio;
  num::MhaParams audio_cross;
  num::NormParams n_ac;
  num::LinearParams ffn1, ffn2;
  num::NormParams n_ffn;
};

struct MaskDecParams {
  num::Tensor query_content;  // [N, C]
  num::Tensor query_pe;       // [N, C]
  num::Tensor temporal_pe;    // [max_frames, C]
  num::Tensor level_emb;      // [3, C] for memory levels 4,3,2
  std::vector<DecoderLayerParams> layers;
  num::NormParams dec_norm;
  num::MlpParams sound_head;  // C -> C -> C -> 2
  num::MlpParams mask_head;   // C -> C -> C -> C_e
  // audio-prompt ablation paths (always constructed, used per mode)
  num::LinearParams concat_add_proj;  // max_frames*C -> C
  num::MhaParams pre_cross;
  num::NormParams pre_cross_norm;
};

MaskDecParams make_maskdec(num::ParamStore& store, const std::string& prefix,
                           const MaskDecConfig& cfg, num::Rng& rng);

struct LayerOutput {
  num::Tensor embeddings;    // [N, C]
  num::Tensor sound_logits;  // [N, 2]; channel 0 = sounding
  num::Tensor sounding;      // [N] probabilities
  num::Tensor mask_logits;   // [N, T, h, w]
};

// memory: batched pixel-decoder output for all T frames; audio: [T, C_av]
// visually-enriched audio embeddings. Returns layers+1 output sets (the
// first from the pre-decoder queries).
std::vector<LayerOutput> decode(const PixelDecoderBatchOut& memory,
                                const num::Tensor& audio,
                                const MaskDecParams& params,
                                const MaskDecConfig& cfg);

// Per-frame convenience matching the per-frame pixel decoder contract.
std::vector<LayerOutput> decode(const std::vector<PixelDecoderOut>& memory,
                                const std::vector<num::Tensor>& audio,
                                const MaskDecParams& params,
                                const MaskDecConfig& cfg);

// Heads, exposed for unit tests.
num::Tensor sound_head(const num::Tensor& embeddings, const MaskDecParams& params);
num::Tensor mask_head(const num::Tensor& embeddings, const num::Tensor& pixel_mat,
                      const MaskDecParams& params);

}  // namespace ovavss::model
