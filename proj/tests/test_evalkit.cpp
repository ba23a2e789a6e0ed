#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ovavss/evalkit/evalkit.hpp"

using namespace ovavss;
using namespace ovavss::evalkit;
using num::Tensor;

namespace {

Tensor id_map(int h, int w, int cls, int x0, int x1, int y0, int y1) {
  Tensor m = Tensor::zeros({h, w});
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.data()[y * w + x] = cls;
  return m;
}

}  // namespace

TEST_CASE("accumulate basic IoU cases") {
  Report r;
  Tensor gt = id_map(8, 8, 1, 0, 5, 0, 2);  // 10 pixels of class 1
  accumulate(gt, gt, r);
  CHECK(r.counts.at(1).intersection == 10.0);
  CHECK(r.counts.at(1).union_ == 10.0);

  Report r2;
  // pred 4 px, gt 4 px, overlap 2 -> IoU 2/6
  Tensor pred = id_map(8, 8, 3, 0, 4, 0, 1);
  Tensor gt2 = id_map(8, 8, 3, 2, 6, 0, 1);
  accumulate(pred, gt2, r2);
  CHECK(r2.counts.at(3).intersection == 2.0);
  CHECK(r2.counts.at(3).union_ == 6.0);
  std::map<int, data::Split> split = {{3, data::Split::base}};
  EvalReport rep = finalize(r2, split);
  CHECK(rep.per_class_iou.at(3) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  // absent classes never enter the mean
  CHECK(r2.counts.count(7) == 0);

  CHECK_THROWS_AS(accumulate(Tensor::zeros({4, 4}), Tensor::zeros({5, 5}), r2),
                  std::invalid_argument);
}

TEST_CASE("paper table harmonics reproduce within 0.01") {
  CHECK(std::abs(harmonic_mean(55.43, 29.14) - 38.20) < 0.01);
  CHECK(std::abs(harmonic_mean(13.55, 8.53) - 10.47) < 0.01);
  // symmetric case is exact
  CHECK(harmonic_mean(0.371, 0.371) == 0.371);
  CHECK(harmonic_mean(0.0, 0.0) == 0.0);
}

TEST_CASE("finalize split means and harmonic from accumulators") {
  Report r;
  r.counts[1] = {5543, 10000};  // base IoU .5543
  r.counts[7] = {2914, 10000};  // novel IoU .2914
  std::map<int, data::Split> split = {{1, data::Split::base}, {7, data::Split::novel}};
  EvalReport rep = finalize(r, split);
  CHECK(rep.base == doctest::Approx(0.5543).epsilon(1e-12));
  CHECK(rep.novel == doctest::Approx(0.2914).epsilon(1e-12));
  CHECK(std::abs(rep.harmonic * 100 - 38.20) < 0.01);
  CHECK(rep.miou == doctest::Approx((0.5543 + 0.2914) / 2).epsilon(1e-12));

  // AM-HM ordering
  CHECK(rep.harmonic <= rep.miou + 1e-15);
  CHECK(rep.harmonic <= std::max(rep.base, rep.novel));
}

TEST_CASE("accumulation is order invariant and reports merge") {
  num::Rng rng(3);
  std::vector<Tensor> preds, gts;
  for (int i = 0; i < 6; ++i) {
    Tensor p = Tensor::zeros({8, 8});
    Tensor g = Tensor::zeros({8, 8});
    for (int j = 0; j < 64; ++j) {
      p.data()[j] = static_cast<double>(rng.uniform_int(4));
      g.data()[j] = static_cast<double>(rng.uniform_int(4));
    }
    preds.push_back(p);
    gts.push_back(g);
  }
  Report fwd, rev, merged_a, merged_b;
  for (int i = 0; i < 6; ++i) accumulate(preds[i], gts[i], fwd);
  for (int i = 5; i >= 0; --i) accumulate(preds[i], gts[i], rev);
  for (int i = 0; i < 3; ++i) accumulate(preds[i], gts[i], merged_a);
  for (int i = 3; i < 6; ++i) accumulate(preds[i], gts[i], merged_b);
  merged_a.merge(merged_b);
  for (const auto& [cls, acc] : fwd.counts) {
    CHECK(acc.intersection == rev.counts.at(cls).intersection);
    CHECK(acc.union_ == rev.counts.at(cls).union_);
    CHECK(acc.intersection == merged_a.counts.at(cls).intersection);
    CHECK(acc.union_ == merged_a.counts.at(cls).union_);
  }
}

TEST_CASE("per-class IoU bounds and overall mean position") {
  Report r;
  r.counts[1] = {30, 60};
  r.counts[2] = {10, 100};
  r.counts[5] = {80, 80};
  std::map<int, data::Split> split = {{1, data::Split::base},
                                      {2, data::Split::base},
                                      {5, data::Split::novel}};
  EvalReport rep = finalize(r, split);
  double lo = 1e9, hi = -1e9;
  for (const auto& [cls, iou] : rep.per_class_iou) {
    CHECK(iou >= 0.0);
    CHECK(iou <= 1.0);
    lo = std::min(lo, iou);
    hi = std::max(hi, iou);
  }
  CHECK(rep.miou >= lo);
  CHECK(rep.miou <= hi);
}

TEST_CASE("assemble_semantic keeps, thresholds and arbitrates queries") {
  const int n = 3, t = 1, h = 4, w = 4, scale = 4;
  model::LayerOutput out;
  out.sounding = Tensor::from_data({n}, {0.9, 0.8, 0.2});
  out.sound_logits = Tensor::zeros({n, 2});
  out.mask_logits = Tensor::full({n, t, h, w}, -10.0);
  // query 0 claims the left half strongly; query 1 claims a overlapping
  // column more strongly; query 2 would claim everything but is not kept
  for (int y = 0; y < h; ++y) {
    out.mask_logits.data()[(0 * t * h + y) * w + 0] = 5.0;
    out.mask_logits.data()[(0 * t * h + y) * w + 1] = 5.0;
    out.mask_logits.data()[(1 * t * h + y) * w + 1] = 9.0;
    for (int x = 0; x < w; ++x)
      out.mask_logits.data()[(2 * t * h + y) * w + x] = 20.0;
  }
  std::vector<int> classes = {4, 7, 9};
  Tensor sem = assemble_semantic(out, classes, h * scale, w * scale);
  REQUIRE(sem.shape() == std::vector<int>{t, h * scale, w * scale});
  // center of cell (y=1, x=0) -> class 4; cell (y=1, x=1) -> class 7
  CHECK(sem.data()[6 * 16 + 2] == 4.0);
  CHECK(sem.data()[6 * 16 + 6] == 7.0);
  // far right: only query 2 wanted it, and it was dropped
  CHECK(sem.data()[6 * 16 + 14] == 0.0);

  // all sounding below threshold -> all background
  model::LayerOutput mute = out;
  mute.sounding = Tensor::from_data({n}, {0.3, 0.4, 0.2});
  Tensor blank = assemble_semantic(mute, classes, h * scale, w * scale);
  for (double v : blank.vec()) CHECK(v == 0.0);
}

TEST_CASE("report json carries the required keys") {
  Report r;
  r.counts[1] = {5, 10};
  std::map<int, data::Split> split = {{1, data::Split::base}};
  EvalReport rep = finalize(r, split);
  const std::string j = report_json(rep, "{\"seed\":1}");
  CHECK(j.find("\"per_class\"") != std::string::npos);
  CHECK(j.find("\"base\"") != std::string::npos);
  CHECK(j.find("\"novel\"") != std::string::npos);
  CHECK(j.find("\"harmonic\"") != std::string::npos);
  CHECK(j.find("\"miou\"") != std::string::npos);
  CHECK(j.find("\"config\"") != std::string::npos);
}
