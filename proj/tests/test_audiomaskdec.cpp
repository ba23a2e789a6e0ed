#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ovavss/audiomaskdec/audiomaskdec.hpp"
#include "ovavss/numcore/gradcheck.hpp"

using namespace ovavss;
using namespace ovavss::model;
using num::Tensor;

namespace {

Tensor randn(std::vector<int> shape, num::Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

PixelDecoderBatchOut random_memory(int t, int h, int w, num::Rng& rng) {
  PixelDecoderBatchOut mem;
  mem.memory.push_back(randn({t, kCe, h / 32, w / 32}, rng, 0.5));
  mem.memory.push_back(randn({t, kCe, h / 16, w / 16}, rng, 0.5));
  mem.memory.push_back(randn({t, kCe, h / 8, w / 8}, rng, 0.5));
  mem.pixel_embed = randn({t, kCe, h / 4, w / 4}, rng, 0.5);
  return mem;
}

MaskDecConfig tiny_cfg(int t) {
  MaskDecConfig cfg;
  cfg.n_queries = 2;
  cfg.layers = 3;
  cfg.max_frames = t;
  return cfg;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("decode shape contract and deep supervision count") {
  num::Rng rng(1);
  num::ParamStore store;
  MaskDecConfig cfg = tiny_cfg(1);
  auto params = make_maskdec(store, "dec", cfg, rng);
  PixelDecoderBatchOut mem = random_memory(1, 32, 32, rng);
  Tensor audio = randn({1, 128}, rng);
  auto outputs = decode(mem, audio, params, cfg);
  REQUIRE(static_cast<int>(outputs.size()) == cfg.layers + 1);
  for (const LayerOutput& out : outputs) {
    CHECK(out.mask_logits.shape() == std::vector<int>{2, 1, 8, 8});
    CHECK(out.sound_logits.shape() == std::vector<int>{2, 2});
    CHECK(out.sounding.shape() == std::vector<int>{2});
    for (double v : out.sounding.vec()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    // two-channel softmax sums to one
    Tensor probs = num::softmax(out.sound_logits, -1);
    for (int q = 0; q < 2; ++q)
      CHECK(std::abs(probs.data()[q * 2] + probs.data()[q * 2 + 1] - 1.0) < 1e-9);
  }
  PixelDecoderBatchOut empty;
  CHECK_THROWS_AS(decode(empty, audio, params, cfg), std::invalid_argument);
}

TEST_CASE("zero audio with zeroed audio-branch projections equals deleted audio layers") {
  num::Rng rng(2);
  num::ParamStore store;
  MaskDecConfig cfg = tiny_cfg(2);
  auto params = make_maskdec(store, "dec", cfg, rng);
  for (auto& layer : params.layers) {
    for (Tensor* t : {&layer.audio_cross.o.w, &layer.audio_cross.o.b,
                      &layer.audio_self.o.w, &layer.audio_self.o.b})
      for (std::size_t i = 0; i < t->numel(); ++i) t->data()[i] = 0.0;
  }
  PixelDecoderBatchOut mem = random_memory(2, 32, 32, rng);
  Tensor zero_audio = Tensor::zeros({2, 128});
  auto with_audio = decode(mem, zero_audio, params, cfg);

  MaskDecConfig none_cfg = cfg;
  none_cfg.audio_prompt = AudioPromptMode::none;
  auto without = decode(mem, zero_audio, params, none_cfg);
  REQUIRE(with_audio.size() == without.size());
  for (std::size_t i = 0; i < with_audio.size(); ++i) {
    CHECK(max_abs_diff(with_audio[i].mask_logits, without[i].mask_logits) < 1e-9);
    CHECK(max_abs_diff(with_audio[i].sound_logits, without[i].sound_logits) < 1e-9);
  }
}

TEST_CASE("query permutation equivariance") {
  num::Rng rng(3);
  num::ParamStore store;
  MaskDecConfig cfg = tiny_cfg(2);
  cfg.n_queries = 5;
  auto params = make_maskdec(store, "dec", cfg, rng);
  PixelDecoderBatchOut mem = random_memory(2, 32, 32, rng);
  Tensor audio = randn({2, 128}, rng);
  auto base = decode(mem, audio, params, cfg);

  const int perm[5] = {4, 2, 0, 3, 1};
  Tensor qc = Tensor::zeros({5, 128}), qp = Tensor::zeros({5, 128});
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 128; ++c) {
      qc.data()[r * 128 + c] = params.query_content.data()[perm[r] * 128 + c];
      qp.data()[r * 128 + c] = params.query_pe.data()[perm[r] * 128 + c];
    }
  params.query_content.vec() = qc.vec();
  params.query_pe.vec() = qp.vec();
  auto permuted = decode(mem, audio, params, cfg);

  const std::size_t tube = base[0].mask_logits.numel() / 5;
  for (std::size_t li = 0; li < base.size(); ++li) {
    for (int q = 0; q < 5; ++q) {
      for (std::size_t i = 0; i < tube; ++i) {
        CHECK(std::abs(permuted[li].mask_logits.data()[q * tube + i] -
                       base[li].mask_logits.data()[perm[q] * tube + i]) < 1e-9);
      }
      CHECK(std::abs(permuted[li].sounding.data()[q] - base[li].sounding.data()[perm[q]]) < 1e-9);
    }
  }
}

TEST_CASE("temporal audio pathway is live") {
  num::Rng rng(4);
  num::ParamStore store;
  MaskDecConfig cfg = tiny_cfg(3);
  auto params = make_maskdec(store, "dec", cfg, rng);
  PixelDecoderBatchOut mem = random_memory(3, 32, 32, rng);
  Tensor audio = randn({3, 128}, rng);
  auto base = decode(mem, audio, params, cfg);

  Tensor swapped = Tensor::zeros({3, 128});
  for (int c = 0; c < 128; ++c) {
    swapped.data()[0 * 128 + c] = audio.data()[1 * 128 + c];
    swapped.data()[1 * 128 + c] = audio.data()[0 * 128 + c];
    swapped.data()[2 * 128 + c] = audio.data()[2 * 128 + c];
  }
  auto out = decode(mem, swapped, params, cfg);
  double diff = 0.0;
  for (std::size_t i = 0; i < base.back().mask_logits.numel(); ++i)
    diff += std::abs(base.back().mask_logits.data()[i] - out.back().mask_logits.data()[i]);
  CHECK(diff > 1e-6);
}

TEST_CASE("audio prompt modes produce distinct decoders") {
  num::Rng rng(5);
  num::ParamStore store;
  MaskDecConfig cfg = tiny_cfg(2);
  auto params = make_maskdec(store, "dec", cfg, rng);
  PixelDecoderBatchOut mem = random_memory(2, 32, 32, rng);
  Tensor audio = randn({2, 128}, rng);

  std::vector<Tensor> finals;
  for (AudioPromptMode mode : {AudioPromptMode::none, AudioPromptMode::concat_add,
                               AudioPromptMode::cross_attn, AudioPromptMode::audiomaskdec}) {
    MaskDecConfig c2 = cfg;
    c2.audio_prompt = mode;
    finals.push_back(decode(mem, audio, params, c2).back().mask_logits);
  }
  for (std::size_t a = 0; a < finals.size(); ++a)
    for (std::size_t b = a + 1; b < finals.size(); ++b)
      CHECK(max_abs_diff(finals[a], finals[b]) > 1e-9);
}

TEST_CASE("masked attention flag changes outputs and stays finite") {
  num::Rng rng(6);
  num::ParamStore store;
  MaskDecConfig cfg = tiny_cfg(2);
  auto params = make_maskdec(store, "dec", cfg, rng);
  PixelDecoderBatchOut mem = random_memory(2, 32, 32, rng);
  Tensor audio = randn({2, 128}, rng);
  auto base = decode(mem, audio, params, cfg);
  MaskDecConfig masked = cfg;
  masked.masked_attention = true;
  auto out = decode(mem, audio, params, masked);
  CHECK(max_abs_diff(base.back().mask_logits, out.back().mask_logits) > 0.0);
}

TEST_CASE("sound head closed-form cases") {
  num::Rng rng(7);
  num::ParamStore store;
  MaskDecConfig cfg = tiny_cfg(1);
  auto params = make_maskdec(store, "dec", cfg, rng);

  Tensor logits = Tensor::from_data({2, 2}, {0, 0, 10, -10});
  Tensor probs = num::softmax(logits, -1);
  CHECK(probs.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(probs.data()[2] == doctest::Approx(1.0 / (1.0 + std::exp(-20.0))).epsilon(1e-12));
  CHECK(probs.data()[2] > 0.9999999);

  // gradient through the mlp head
  auto f = [&](const Tensor& emb) {
    Tensor out = sound_head(emb, params);
    return num::sum(num::mul(num::softmax(out, -1), out));
  };
  CHECK(num::grad_check(f, randn({3, 128}, rng)) < 1e-4);
}

TEST_CASE("mask head dot-product contract") {
  num::Rng rng(8);
  num::ParamStore store;
  MaskDecConfig cfg = tiny_cfg(1);
  auto params = make_maskdec(store, "dec", cfg, rng);

  // force the mask mlp to emit one-hot channel 5 for any embedding
  for (auto& lin : params.mask_head.layers) {
    for (std::size_t i = 0; i < lin.w.numel(); ++i) lin.w.data()[i] = 0.0;
    for (std::size_t i = 0; i < lin.b.numel(); ++i) lin.b.data()[i] = 0.0;
  }
  params.mask_head.layers.back().b.data()[5] = 1.0;

  Tensor pixel_mat = Tensor::zeros({kCe, 12});
  for (int i = 0; i < 12; ++i) pixel_mat.data()[5 * 12 + i] = 1.0;  // one-hot channel 5
  Tensor emb = randn({4, 128}, rng);
  Tensor logits = mask_head(emb, pixel_mat, params);
  for (double v : logits.vec()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  // zero mask embedding -> zero logits -> sigmoid 0.5 downstream
  params.mask_head.layers.back().b.data()[5] = 0.0;
  Tensor zero_logits = mask_head(emb, pixel_mat, params);
  for (double v : zero_logits.vec()) CHECK(v == 0.0);

  // mismatched pixel dim is a configuration error
  CHECK_THROWS_AS(mask_head(emb, Tensor::zeros({64, 12}), params), std::invalid_argument);
}

TEST_CASE("decode gradient reaches query embeddings") {
  num::Rng rng(9);
  num::ParamStore store;
  MaskDecConfig cfg = tiny_cfg(1);
  cfg.layers = 2;
  auto params = make_maskdec(store, "dec", cfg, rng);
  PixelDecoderBatchOut mem = random_memory(1, 32, 32, rng);
  Tensor audio = randn({1, 128}, rng);
  auto f = [&](const Tensor& q) {
    (void)q;  // aliases query_content
    auto outputs = decode(mem, audio, params, cfg);
    Tensor acc = num::mean(outputs.back().mask_logits);
    return num::add(acc, num::mean(outputs.back().sound_logits));
  };
  CHECK(num::grad_check(f, params.query_content, 1e-5, 64) < 1e-4);
}
