#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ovavss/matchloss/matchloss.hpp"
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

CostMatrix matrix_from(int n, int k, const std::vector<double>& values) {
  CostMatrix m;
  m.n = n;
  m.k = k;
  m.values = values;
  m.terms.resize(values.size());
  return m;
}

// exhaustive minimum over injective gt->query assignments
double brute_force_min(const CostMatrix& cost) {
  std::vector<int> queries(static_cast<std::size_t>(cost.n));
  std::iota(queries.begin(), queries.end(), 0);
  double best = 1e300;
  std::vector<int> pick(static_cast<std::size_t>(cost.k));
  std::function<void(int, double, std::uint64_t)> rec = [&](int g, double acc,
                                                            std::uint64_t used) {
    if (g == cost.k) {
      best = std::min(best, acc);
      return;
    }
    for (int q = 0; q < cost.n; ++q) {
      if (used & (1ULL << q)) continue;
      rec(g + 1, acc + cost.at(q, g), used | (1ULL << q));
    }
  };
  rec(0, 0.0, 0);
  return best;
}

LayerOutput synthetic_output(const Tensor& sound_logits, const Tensor& mask_logits) {
  LayerOutput out;
  out.sound_logits = sound_logits;
  out.sounding = num::reshape(
      num::slice_cols(num::softmax(sound_logits, -1), 0, 1), {sound_logits.dim(0)});
  out.mask_logits = mask_logits;
  out.embeddings = Tensor::zeros({sound_logits.dim(0), 1});
  return out;
}

}  // namespace

TEST_CASE("hungarian hand case and zero diagonal") {
  CostMatrix m = matrix_from(2, 2, {1, 2, 3, 1});
  Assignment a = hungarian(m);
  REQUIRE(a.pairs.size() == 2);
  CHECK(a.pairs[0] == std::pair<int, int>(0, 0));
  CHECK(a.pairs[1] == std::pair<int, int>(1, 1));
  CHECK(a.total == 2.0);

  num::Rng rng(3);
  CostMatrix d = matrix_from(4, 4, std::vector<double>(16, 0.0));
  for (int q = 0; q < 4; ++q)
    for (int g = 0; g < 4; ++g)
      d.values[static_cast<std::size_t>(q) * 4 + g] = q == g ? 0.0 : 1.0 + rng.uniform();
  Assignment id = hungarian(d);
  CHECK(id.total == 0.0);
  for (int g = 0; g < 4; ++g) CHECK(id.pairs[static_cast<std::size_t>(g)].first == g);
}

TEST_CASE("hungarian rejects K > N and non-finite costs") {
  CHECK_THROWS_AS(hungarian(matrix_from(1, 2, {1, 2})), std::invalid_argument);
  CHECK_THROWS_AS(hungarian(matrix_from(1, 1, {std::nan("")})), std::invalid_argument);
}

TEST_CASE("hungarian equals brute force for K <= 6") {
  num::Rng rng(77);
  for (int k = 1; k <= 6; ++k) {
    for (int trial = 0; trial < 30; ++trial) {
      const int n = k + static_cast<int>(rng.uniform_int(4));
      CostMatrix m = matrix_from(n, k, {});
      m.values.resize(static_cast<std::size_t>(n) * k);
      m.terms.resize(m.values.size());
      for (double& v : m.values) v = rng.uniform(-2.0, 5.0);
      Assignment a = hungarian(m);
      REQUIRE(static_cast<int>(a.pairs.size()) == k);
      // validity: injective in both coordinates
      std::vector<int> qs, gs;
      for (auto [q, g] : a.pairs) {
        qs.push_back(q);
        gs.push_back(g);
      }
      std::sort(qs.begin(), qs.end());
      std::sort(gs.begin(), gs.end());
      CHECK(std::adjacent_find(qs.begin(), qs.end()) == qs.end());
      CHECK(std::adjacent_find(gs.begin(), gs.end()) == gs.end());
      CHECK(a.total == doctest::Approx(brute_force_min(m)).epsilon(1e-12));
    }
  }
}

TEST_CASE("focal loss closed forms") {
  // perfect saturated prediction
  Tensor logits = Tensor::from_data({4}, {40, 40, -40, -40});
  Tensor target = Tensor::from_data({4}, {1, 1, 0, 0});
  CHECK(focal_loss(logits, target).item() < 1e-12);

  // gamma=0 with alpha disabled reduces to BCE
  num::Rng rng(5);
  Tensor x = randn({12}, rng, 2.0);
  Tensor t = Tensor::zeros({12});
  for (int i = 0; i < 12; ++i) t.data()[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  const double focal = focal_loss(x, t, -1.0, 0.0).item();
  double bce = 0.0;
  for (int i = 0; i < 12; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-x.data()[i]));
    bce += t.data()[i] == 1.0 ? -std::log(p) : -std::log(1.0 - p);
  }
  bce /= 12.0;
  CHECK(focal == doctest::Approx(bce).epsilon(1e-9));

  // logit 0, target 1: -0.25 * 0.5^2 * log(0.5)
  const double v = focal_loss(Tensor::from_data({1}, {0.0}),
                              Tensor::from_data({1}, {1.0}), 0.25, 2.0).item();
  CHECK(v == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-9));
  CHECK(v == doctest::Approx(0.04332).epsilon(1e-3));
}

TEST_CASE("dice loss closed forms") {
  Tensor ones = Tensor::full({8}, 1.0);
  Tensor zeros = Tensor::zeros({8});
  CHECK(dice_loss(ones, ones).item() == 0.0);
  CHECK(dice_loss(zeros, ones).item() == doctest::Approx(1.0 - 1.0 / 9.0).epsilon(1e-12));

  Tensor half = Tensor::full({8}, 0.5);
  Tensor half_target = Tensor::zeros({8});
  for (int i = 0; i < 4; ++i) half_target.data()[i] = 1.0;
  CHECK(dice_loss(half, half_target).item() == doctest::Approx(4.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("loss op gradients vs finite differences") {
  num::Rng rng(6);
  Tensor target = Tensor::zeros({10});
  for (int i = 0; i < 10; ++i) target.data()[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  CHECK(num::grad_check([&](const Tensor& x) { return focal_loss(x, target); },
                        randn({10}, rng, 2.0)) < 1e-4);
  CHECK(num::grad_check(
            [&](const Tensor& x) { return dice_loss(num::sigmoid(x), target); },
            randn({10}, rng, 2.0)) < 1e-4);
  std::vector<int> flags = {1, 0, 1};
  CHECK(num::grad_check([&](const Tensor& x) { return sounding_bce(x, flags); },
                        randn({3, 2}, rng, 2.0)) < 1e-4);
}

TEST_CASE("build_targets keeps sounding objects and zeroes silent frames") {
  data::VideoSample s;
  const int t_len = 3, fh = 16, fw = 16;
  s.frames = Tensor::zeros({t_len, 3, fh, fw});
  s.audio_feats = Tensor::zeros({t_len, 128});
  data::ObjectTrack sounder;
  sounder.class_id = 2;
  sounder.sounding = {true, false, true};
  sounder.masks = Tensor::zeros({t_len, fh, fw});
  for (int t = 0; t < t_len; ++t)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        sounder.masks.data()[(t * fh + y) * fw + x] = 1.0;
  data::ObjectTrack silent = sounder;
  silent.sounding = {false, false, false};
  s.objects = {sounder, silent};

  GtTargets gt = build_targets(s, 4, 4);
  REQUIRE(gt.tubes.size() == 1);  // silent distractor excluded
  CHECK(gt.object_index[0] == 0);
  const Tensor& tube = gt.tubes[0];
  REQUIRE(tube.shape() == std::vector<int>{3, 4, 4});
  double f0 = 0, f1 = 0, f2 = 0;
  for (int i = 0; i < 16; ++i) {
    f0 += tube.data()[i];
    f1 += tube.data()[16 + i];
    f2 += tube.data()[32 + i];
  }
  CHECK(f0 == 4.0);  // 8x8 block max-pools to 2x2 at stride 4
  CHECK(f1 == 0.0);  // silent frame zeroed
  CHECK(f2 == 4.0);
}

TEST_CASE("total loss K=0 closed form") {
  const int n = 5, layers = 3;
  std::vector<LayerOutput> outputs;
  for (int l = 0; l < layers; ++l) {
    outputs.push_back(synthetic_output(Tensor::zeros({n, 2}),
                                       Tensor::zeros({n, 2, 4, 4})));
  }
  GtTargets gt;  // empty
  LossWeights w;
  LossBreakdown bd;
  Tensor loss = total_loss(outputs, gt, w, &bd);
  CHECK(loss.item() == doctest::Approx(layers * w.ce * std::log(2.0)).epsilon(1e-12));
  CHECK(bd.focal == 0.0);
  CHECK(bd.dice == 0.0);
}

TEST_CASE("oracle-perfect outputs give near-zero loss") {
  num::Rng rng(9);
  const int n = 4, t = 2, h = 4, wd = 4;
  GtTargets gt;
  Tensor tube = Tensor::zeros({t, h, wd});
  for (int i = 0; i < h * wd; ++i) tube.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  gt.tubes.push_back(tube);
  gt.object_index.push_back(0);

  Tensor sound_logits = Tensor::zeros({n, 2});
  for (int q = 0; q < n; ++q) {
    sound_logits.data()[q * 2] = q == 0 ? 40.0 : -40.0;
    sound_logits.data()[q * 2 + 1] = q == 0 ? -40.0 : 40.0;
  }
  Tensor mask_logits = Tensor::full({n, t, h, wd}, -40.0);
  for (std::size_t i = 0; i < tube.numel(); ++i)
    mask_logits.data()[i] = tube.data()[i] == 1.0 ? 40.0 : -40.0;

  std::vector<LayerOutput> outputs = {synthetic_output(sound_logits, mask_logits)};
  Tensor loss = total_loss(outputs, gt, LossWeights{});
  CHECK(loss.item() >= 0.0);
  CHECK(loss.item() < 1e-6);
}

TEST_CASE("loss is exactly invariant to gt and query permutations") {
  num::Rng rng(11);
  const int n = 6, t = 2, h = 4, wd = 4;
  GtTargets gt;
  for (int k = 0; k < 3; ++k) {
    Tensor tube = Tensor::zeros({t, h, wd});
    for (std::size_t i = 0; i < tube.numel(); ++i)
      tube.data()[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    gt.tubes.push_back(tube);
    gt.object_index.push_back(k);
  }
  Tensor sound_logits = randn({n, 2}, rng);
  Tensor mask_logits = randn({n, t, h, wd}, rng);
  std::vector<LayerOutput> base = {synthetic_output(sound_logits, mask_logits)};
  const double loss_base = total_loss(base, gt, LossWeights{}).item();

  GtTargets gt_perm;
  for (int k : {2, 0, 1}) {
    gt_perm.tubes.push_back(gt.tubes[static_cast<std::size_t>(k)]);
    gt_perm.object_index.push_back(k);
  }
  CHECK(total_loss(base, gt_perm, LossWeights{}).item() == loss_base);

  const int perm[6] = {3, 5, 0, 1, 4, 2};
  Tensor sp = Tensor::zeros({n, 2});
  Tensor mp = Tensor::zeros({n, t, h, wd});
  const std::size_t tube_len = static_cast<std::size_t>(t) * h * wd;
  for (int q = 0; q < n; ++q) {
    sp.data()[q * 2] = sound_logits.data()[perm[q] * 2];
    sp.data()[q * 2 + 1] = sound_logits.data()[perm[q] * 2 + 1];
    for (std::size_t i = 0; i < tube_len; ++i)
      mp.data()[q * tube_len + i] = mask_logits.data()[perm[q] * tube_len + i];
  }
  std::vector<LayerOutput> permuted = {synthetic_output(sp, mp)};
  CHECK(total_loss(permuted, gt, LossWeights{}).item() == loss_base);
}

TEST_CASE("loss increases monotonically as a matched mask corrupts") {
  num::Rng rng(13);
  const int n = 3, t = 2, h = 8, wd = 8;
  GtTargets gt;
  Tensor tube = Tensor::zeros({t, h, wd});
  for (std::size_t i = 0; i < tube.numel(); ++i)
    tube.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  gt.tubes.push_back(tube);
  gt.object_index.push_back(0);

  Tensor sound_logits = Tensor::zeros({n, 2});
  sound_logits.data()[0] = 8.0;
  sound_logits.data()[1] = -8.0;

  auto loss_for = [&](double flip_rho) {
    Tensor mask_logits = Tensor::full({n, t, h, wd}, -8.0);
    num::Rng flip_rng(99);
    for (std::size_t i = 0; i < tube.numel(); ++i) {
      double v = tube.data()[i] == 1.0 ? 8.0 : -8.0;
      if (flip_rng.uniform() < flip_rho) v = -v;
      mask_logits.data()[i] = v;
    }
    std::vector<LayerOutput> outputs = {synthetic_output(sound_logits, mask_logits)};
    return total_loss(outputs, gt, LossWeights{}).item();
  };
  const double l0 = loss_for(0.0), l5 = loss_for(0.05), l10 = loss_for(0.10),
               l20 = loss_for(0.20);
  CHECK(l0 < l5);
  CHECK(l5 < l10);
  CHECK(l10 < l20);
}

TEST_CASE("full loss gradient on a 2-query 2-object instance") {
  num::Rng rng(17);
  const int n = 2, t = 1, h = 4, wd = 4;
  GtTargets gt;
  for (int k = 0; k < 2; ++k) {
    Tensor tube = Tensor::zeros({t, h, wd});
    for (std::size_t i = 0; i < tube.numel(); ++i)
      tube.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    gt.tubes.push_back(tube);
    gt.object_index.push_back(k);
  }
  // x packs mask logits [n*t*h*w] then sound logits [n*2]
  const int mask_len = n * t * h * wd;
  auto f = [&](const Tensor& x) {
    Tensor flat = num::reshape(x, {1, mask_len + n * 2});
    Tensor mask = num::reshape(num::slice_cols(flat, 0, mask_len), {n, t, h, wd});
    Tensor sound = num::reshape(num::slice_cols(flat, mask_len, n * 2), {n, 2});
    LayerOutput out;
    out.sound_logits = sound;
    out.sounding = num::reshape(num::slice_cols(num::softmax(sound, -1), 0, 1), {n});
    out.mask_logits = mask;
    out.embeddings = Tensor::zeros({n, 1});
    std::vector<LayerOutput> outputs = {out};
    return total_loss(outputs, gt, LossWeights{});
  };
  CHECK(num::grad_check(f, randn({mask_len + n * 2}, rng), 1e-5) < 1e-4);
}
