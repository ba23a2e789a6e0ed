#include "ovavss/backbones/backbones.hpp"

#include <stdexcept>

namespace ovavss::model {

using namespace ovavss::num;

VisualEncoderParams make_visual_encoder(ParamStore& store,
                                        const std::string& prefix, Rng& rng) {
  VisualEncoderParams p;
  p.stem = make_conv(store, prefix + ".stem", 3, kStemChannels, 3, 2, 1, rng);
  p.stem_norm = make_norm(store, prefix + ".stem_norm", kStemChannels);
  int cin = kStemChannels;
  for (int k = 0; k < 4; ++k) {
    const int cout = kPyramidChannels[static_cast<std::size_t>(k)];
    const std::string base = prefix + ".stage" + std::to_string(k + 1);
    p.stages[static_cast<std::size_t>(k)].down =
        make_conv(store, base + ".down", cin, cout, 3, 2, 1, rng);
    p.stages[static_cast<std::size_t>(k)].n1 = make_norm(store, base + ".n1", cout);
    p.stages[static_cast<std::size_t>(k)].refine =
        make_conv(store, base + ".refine", cout, cout, 3, 1, 1, rng);
    p.stages[static_cast<std::size_t>(k)].n2 = make_norm(store, base + ".n2", cout);
    cin = cout;
  }
  return p;
}

VisualPyramid visual_encode_batch(const Tensor& frames,
                                  const VisualEncoderParams& params) {
  if (frames.rank() != 4 || frames.dim(1) != 3) {
    throw std::invalid_argument("visual_encode: expected [B,3,H,W], got " +
                                shape_str(frames.shape()));
  }
  const int h = frames.dim(2), w = frames.dim(3);
  if (h % 32 != 0 || w % 32 != 0) {
    throw std::invalid_argument("visual_encode: H and W must be divisible by 32, got " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
  Tensor x = gelu(group_norm(conv(frames, params.stem), kGnGroups,
                             params.stem_norm.gamma, params.stem_norm.beta));
  VisualPyramid pyr;
  for (const auto& stage : params.stages) {
    x = gelu(group_norm(conv(x, stage.down), kGnGroups, stage.n1.gamma, stage.n1.beta));
    x = gelu(group_norm(conv(x, stage.refine), kGnGroups, stage.n2.gamma, stage.n2.beta));
    pyr.levels.push_back(x);
  }
  return pyr;
}

VisualPyramid visual_encode(const Tensor& frame, const VisualEncoderParams& params) {
  if (frame.rank() != 3) {
    throw std::invalid_argument("visual_encode: expected [3,H,W], got " +
                                shape_str(frame.shape()));
  }
  Tensor batched = reshape(frame, {1, frame.dim(0), frame.dim(1), frame.dim(2)});
  VisualPyramid pyr = visual_encode_batch(batched, params);
  for (Tensor& level : pyr.levels) {
    level = reshape(level, {level.dim(1), level.dim(2), level.dim(3)});
  }
  return pyr;
}

AudioEncoderParams make_audio_encoder(ParamStore& store, const std::string& prefix) {
  AudioEncoderParams p;
  const int c = kAudioDim;
  Tensor w1 = Tensor::zeros({c, 2 * c});
  for (int i = 0; i < c; ++i) {
    w1.data()[i * 2 * c + i] = 1.0;
    w1.data()[i * 2 * c + c + i] = -1.0;
  }
  Tensor w2 = Tensor::zeros({2 * c, c});
  for (int i = 0; i < c; ++i) {
    w2.data()[i * c + i] = 1.0;
    w2.data()[(c + i) * c + i] = -1.0;
  }
  p.l1.w = store.add(prefix + ".l1.w", w1);
  p.l1.b = store.add(prefix + ".l1.b", Tensor::zeros({2 * c}));
  p.l2.w = store.add(prefix + ".l2.w", w2);
  p.l2.b = store.add(prefix + ".l2.b", Tensor::zeros({c}));
  return p;
}

Tensor audio_encode(const Tensor& audio, const AudioEncoderParams& params) {
  const bool vector_input = audio.rank() == 1;
  if (vector_input && audio.dim(0) != kAudioDim) {
    throw std::invalid_argument("audio_encode: expected dim 128, got " +
                                shape_str(audio.shape()));
  }
  if (!vector_input && (audio.rank() != 2 || audio.dim(1) != kAudioDim)) {
    throw std::invalid_argument("audio_encode: expected [T,128], got " +
                                shape_str(audio.shape()));
  }
  Tensor x = vector_input ? reshape(audio, {1, kAudioDim}) : audio;
  Tensor out = linear(relu(linear(x, params.l1)), params.l2);
  return vector_input ? reshape(out, {kAudioDim}) : out;
}

}  // namespace ovavss::model
