#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ovavss/fusion/fusion.hpp"
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

VisualPyramid random_pyramid(int h, int w, num::Rng& rng) {
  VisualPyramid pyr;
  for (int k = 1; k <= 4; ++k) {
    pyr.levels.push_back(randn(
        {kPyramidChannels[static_cast<std::size_t>(k - 1)], h / (1 << (k + 1)),
         w / (1 << (k + 1))},
        rng, 0.5));
  }
  return pyr;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.vec()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST_CASE("token count for 64x64 is 84") {
  num::Rng rng(1);
  num::ParamStore store;
  FusionConfig cfg;
  auto params = make_fusion(store, "fuse", cfg, rng);
  VisualPyramid pyr = random_pyramid(64, 64, rng);
  ProjectedInputs in = project_inputs(randn({128}, rng), pyr, params);
  int total = 0;
  for (const Tensor& tokens : in.level_tokens) total += tokens.dim(0);
  CHECK(total == 84);  // 8*8 + 4*4 + 2*2
  FusedFrame fused = early_fuse(randn({128}, rng), pyr, params, cfg);
  CHECK(fused.f_av.shape() == std::vector<int>{128});
  CHECK(fused.f_va[0].shape() == std::vector<int>{128, 8, 8});
  CHECK(fused.f_va[1].shape() == std::vector<int>{128, 4, 4});
  CHECK(fused.f_va[2].shape() == std::vector<int>{128, 2, 2});
}

TEST_CASE("single audio key collapses Eq.2 attention to a broadcast") {
  num::Rng rng(2);
  num::ParamStore store;
  FusionConfig cfg;
  auto params = make_fusion(store, "fuse", cfg, rng);
  VisualPyramid pyr = random_pyramid(64, 64, rng);
  Tensor audio = randn({128}, rng);
  ProjectedInputs in = project_inputs(audio, pyr, params);
  FusedFrame fused = early_fuse(audio, pyr, params, cfg);

  // attention weight over one key is exactly 1, so the added branch equals
  // o-proj(v-proj(audio token)) for every visual token
  Tensor branch = num::linear(num::linear(in.audio_token, params.v2a.v), params.v2a.o);
  for (int lvl = 0; lvl < 3; ++lvl) {
    const Tensor& level = fused.f_va[static_cast<std::size_t>(lvl)];
    const int h = level.dim(1), w = level.dim(2);
    const Tensor& s_tokens = in.level_tokens[static_cast<std::size_t>(lvl)];
    for (int i = 0; i < h * w; ++i) {
      for (int c = 0; c < 128; ++c) {
        const double got = level.data()[c * h * w + i];
        const double want = s_tokens.data()[i * 128 + c] + branch.data()[c];
        CHECK(std::abs(got - want) < 1e-9);
      }
    }
  }
}

TEST_CASE("Eq.1 output invariant under joint token permutation") {
  num::Rng rng(3);
  num::ParamStore store;
  FusionConfig cfg;
  auto params = make_fusion(store, "fuse", cfg, rng);
  VisualPyramid pyr = random_pyramid(64, 64, rng);
  Tensor audio = randn({128}, rng);
  ProjectedInputs in = project_inputs(audio, pyr, params);
  Tensor s = num::concat_rows(in.level_tokens);
  Tensor base = num::multi_head_attention(in.audio_token, s, s, params.a2v);

  const int rows = s.dim(0);
  std::vector<int> perm(static_cast<std::size_t>(rows));
  for (int i = 0; i < rows; ++i) perm[static_cast<std::size_t>(i)] = (i * 37 + 11) % rows;
  Tensor sp = Tensor::zeros(s.shape());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < 128; ++c)
      sp.data()[r * 128 + c] = s.data()[perm[static_cast<std::size_t>(r)] * 128 + c];
  Tensor permuted = num::multi_head_attention(in.audio_token, sp, sp, params.a2v);
  for (int c = 0; c < 128; ++c)
    CHECK(std::abs(base.data()[c] - permuted.data()[c]) < 1e-12);
}

TEST_CASE("residual identity with zeroed output projections") {
  num::Rng rng(4);
  num::ParamStore store;
  FusionConfig cfg;
  auto params = make_fusion(store, "fuse", cfg, rng);
  for (Tensor* t : {&params.a2v.o.w, &params.a2v.o.b, &params.v2a.o.w, &params.v2a.o.b})
    for (std::size_t i = 0; i < t->numel(); ++i) t->data()[i] = 0.0;
  VisualPyramid pyr = random_pyramid(64, 64, rng);
  Tensor audio = randn({128}, rng);
  ProjectedInputs in = project_inputs(audio, pyr, params);
  FusedFrame fused = early_fuse(audio, pyr, params, cfg);
  for (int c = 0; c < 128; ++c)
    CHECK(fused.f_av.data()[c] == in.audio_token.data()[c]);
  for (int lvl = 0; lvl < 3; ++lvl) {
    const Tensor& level = fused.f_va[static_cast<std::size_t>(lvl)];
    const Tensor& tokens = in.level_tokens[static_cast<std::size_t>(lvl)];
    const int hw = level.dim(1) * level.dim(2);
    for (int i = 0; i < hw; ++i)
      for (int c = 0; c < 128; ++c)
        CHECK(level.data()[c * hw + i] == tokens.data()[i * 128 + c]);
  }
}

TEST_CASE("zeroing audio changes f_va exactly by the attention branch") {
  num::Rng rng(5);
  num::ParamStore store;
  FusionConfig cfg;
  auto params = make_fusion(store, "fuse", cfg, rng);
  VisualPyramid pyr = random_pyramid(32, 32, rng);
  Tensor audio = randn({128}, rng);
  FusedFrame with_audio = early_fuse(audio, pyr, params, cfg);
  FusedFrame without = early_fuse(Tensor::zeros({128}), pyr, params, cfg);

  ProjectedInputs in_a = project_inputs(audio, pyr, params);
  ProjectedInputs in_z = project_inputs(Tensor::zeros({128}), pyr, params);
  Tensor s = num::concat_rows(in_a.level_tokens);
  Tensor branch_a = num::multi_head_attention(s, in_a.audio_token, in_a.audio_token, params.v2a);
  Tensor branch_z = num::multi_head_attention(s, in_z.audio_token, in_z.audio_token, params.v2a);

  int offset = 0;
  for (int lvl = 0; lvl < 3; ++lvl) {
    const Tensor& la = with_audio.f_va[static_cast<std::size_t>(lvl)];
    const Tensor& lz = without.f_va[static_cast<std::size_t>(lvl)];
    const int hw = la.dim(1) * la.dim(2);
    for (int i = 0; i < hw; ++i)
      for (int c = 0; c < 128; ++c) {
        const double delta = la.data()[c * hw + i] - lz.data()[c * hw + i];
        const double want = branch_a.data()[(offset + i) * 128 + c] -
                            branch_z.data()[(offset + i) * 128 + c];
        CHECK(std::abs(delta - want) < 1e-9);
      }
    offset += hw;
  }
}

TEST_CASE("fusion ablation modes change the outputs appropriately") {
  num::Rng rng(6);
  num::ParamStore store;
  FusionConfig cfg;
  auto params = make_fusion(store, "fuse", cfg, rng);
  VisualPyramid pyr = random_pyramid(32, 32, rng);
  Tensor audio = randn({128}, rng);
  ProjectedInputs in = project_inputs(audio, pyr, params);

  FusionConfig none_cfg = cfg;
  none_cfg.mode = FusionMode::none;
  FusedFrame none = early_fuse(audio, pyr, params, none_cfg);
  // none: outputs are exactly the projections
  for (int c = 0; c < 128; ++c)
    CHECK(none.f_av.data()[c] == in.audio_token.data()[c]);

  FusionConfig add_cfg = cfg;
  add_cfg.mode = FusionMode::add;
  FusedFrame added = early_fuse(audio, pyr, params, add_cfg);
  for (int lvl = 0; lvl < 3; ++lvl) {
    const Tensor& level = added.f_va[static_cast<std::size_t>(lvl)];
    const Tensor& tokens = in.level_tokens[static_cast<std::size_t>(lvl)];
    const int hw = level.dim(1) * level.dim(2);
    for (int i = 0; i < hw; ++i)
      for (int c = 0; c < 128; ++c)
        CHECK(level.data()[c * hw + i] ==
              doctest::Approx(tokens.data()[i * 128 + c] + in.audio_token.data()[c])
                  .epsilon(1e-12));
  }

  FusionConfig single = cfg;
  single.multi_level = false;
  FusedFrame single_out = early_fuse(audio, pyr, params, single);
  // levels 2 and 3 untouched by attention in single-level mode
  for (int lvl = 0; lvl < 2; ++lvl) {
    const Tensor& level = single_out.f_va[static_cast<std::size_t>(lvl)];
    const Tensor& tokens = in.level_tokens[static_cast<std::size_t>(lvl)];
    const int hw = level.dim(1) * level.dim(2);
    for (int i = 0; i < hw; ++i)
      for (int c = 0; c < 128; ++c)
        CHECK(level.data()[c * hw + i] == tokens.data()[i * 128 + c]);
  }
  CHECK(max_abs(num::sub(single_out.f_va[2], none.f_va[2])) > 0.0);
}

TEST_CASE("gradient check through the full fuse op") {
  num::Rng rng(7);
  num::ParamStore store;
  FusionConfig cfg;
  auto params = make_fusion(store, "fuse", cfg, rng);
  VisualPyramid pyr = random_pyramid(32, 32, rng);
  auto f = [&](const Tensor& x) {
    FusedFrame fused = early_fuse(x, pyr, params, cfg);
    Tensor acc = num::sum(num::mul(fused.f_av, fused.f_av));
    for (const Tensor& level : fused.f_va)
      acc = num::add(acc, num::sum(num::mul(level, level)));
    return acc;
  };
  CHECK(num::grad_check(f, randn({128}, rng)) < 1e-4);

  Tensor audio = randn({128}, rng);
  auto g = [&](const Tensor& wt) {
    (void)wt;  // aliases the Eq.1 query projection
    FusedFrame fused = early_fuse(audio, pyr, params, cfg);
    Tensor acc = num::sum(num::mul(fused.f_av, fused.f_av));
    for (const Tensor& level : fused.f_va)
      acc = num::add(acc, num::sum(num::mul(level, level)));
    return acc;
  };
  CHECK(num::grad_check(g, params.a2v.q.w, 1e-5, 128) < 1e-4);
}
