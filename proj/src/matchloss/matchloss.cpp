#include "ovavss/matchloss/matchloss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ovavss::model {

using namespace ovavss::num;

Assignment hungarian(const CostMatrix& cost) {
  const int k = cost.k, n = cost.n;
  if (k > n) {
    throw std::invalid_argument("hungarian: K=" + std::to_string(k) +
                                " exceeds N=" + std::to_string(n));
  }
  for (double v : cost.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("hungarian: non-finite cost");
  }
  Assignment result;
  if (k == 0) return result;

  // Jonker-Volgenant style shortest augmenting paths with potentials;
  // rows are ground-truth objects, columns are queries (1-based).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(k) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> match(static_cast<std::size_t>(n) + 1, 0);  // column -> row
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= k; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost.at(j - 1, i0 - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  for (int j = 1; j <= n; ++j) {
    const int row = match[static_cast<std::size_t>(j)];
    if (row == 0) continue;
    result.pairs.emplace_back(j - 1, row - 1);
    result.total += cost.at(j - 1, row - 1);
  }
  std::sort(result.pairs.begin(), result.pairs.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  return result;
}

namespace {

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// per-element focal value and d/dlogit
void focal_point(double x, double y, double alpha, double gamma, double* loss,
                 double* dloss) {
  const double p = stable_sigmoid(x);
  if (y != 0.0) {
    const double a = alpha < 0 ? 1.0 : alpha;
    const double log_p = -softplus(-x);
    const double one_m_p = 1.0 - p;
    const double pw = std::pow(one_m_p, gamma);
    *loss = -a * pw * log_p;
    *dloss = a * gamma * p * pw * log_p - a * pw * one_m_p;
  } else {
    const double a = alpha < 0 ? 1.0 : 1.0 - alpha;
    const double log_1mp = -softplus(x);
    const double pw = std::pow(p, gamma);
    *loss = -a * pw * log_1mp;
    *dloss = a * pw * p - a * gamma * (1.0 - p) * pw * log_1mp;
  }
}

// order-independent sum: adds values in ascending order
double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

}  // namespace

Tensor focal_loss(const Tensor& logits, const Tensor& targets, double alpha,
                  double gamma) {
  if (logits.shape() != targets.shape()) {
    throw std::invalid_argument("focal_loss: shape mismatch " + shape_str(logits.shape()) +
                                " vs " + shape_str(targets.shape()));
  }
  const std::size_t n = logits.numel();
  if (n == 0) throw std::invalid_argument("focal_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double l, d;
    focal_point(logits.data()[i], targets.data()[i], alpha, gamma, &l, &d);
    acc += l;
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  check_finite(out, "focal_loss");
  if (taping({&logits})) {
    out.set_requires_grad(true);
    Tensor lc = logits, tc = targets, oc = out;
    Tape::active()->record({logits}, out, [lc, tc, oc, alpha, gamma, n]() mutable {
      if (!oc.has_grad() || !lc.requires_grad()) return;
      const double g = oc.grad()[0] / static_cast<double>(n);
      double* gl = lc.grad();
      for (std::size_t i = 0; i < n; ++i) {
        double l, d;
        focal_point(lc.data()[i], tc.data()[i], alpha, gamma, &l, &d);
        gl[i] += g * d;
      }
    });
  }
  return out;
}

Tensor dice_loss(const Tensor& probs, const Tensor& targets) {
  if (probs.shape() != targets.shape()) {
    throw std::invalid_argument("dice_loss: shape mismatch " + shape_str(probs.shape()) +
                                " vs " + shape_str(targets.shape()));
  }
  const std::size_t n = probs.numel();
  double sum_pt = 0.0, sum_p = 0.0, sum_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_pt += probs.data()[i] * targets.data()[i];
    sum_p += probs.data()[i];
    sum_t += targets.data()[i];
  }
  const double num_ = 2.0 * sum_pt + 1.0;
  const double den = sum_p + sum_t + 1.0;
  Tensor out = Tensor::scalar(1.0 - num_ / den);
  check_finite(out, "dice_loss");
  if (taping({&probs})) {
    out.set_requires_grad(true);
    Tensor pc = probs, tc = targets, oc = out;
    Tape::active()->record({probs}, out, [pc, tc, oc, num_, den]() mutable {
      if (!oc.has_grad() || !pc.requires_grad()) return;
      const double g = oc.grad()[0];
      double* gp = pc.grad();
      const double den2 = den * den;
      for (std::size_t i = 0; i < pc.numel(); ++i) {
        gp[i] += g * (-(2.0 * tc.data()[i] * den - num_) / den2);
      }
    });
  }
  return out;
}

Tensor sounding_bce(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.rank() != 2 || logits.dim(1) != 2) {
    throw std::invalid_argument("sounding_bce: logits must be [N,2], got " +
                                shape_str(logits.shape()));
  }
  const int n = logits.dim(0);
  if (static_cast<int>(targets.size()) != n) {
    throw std::invalid_argument("sounding_bce: target count mismatch");
  }
  std::vector<double> per_query(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double z0 = logits.data()[i * 2], z1 = logits.data()[i * 2 + 1];
    const double m = std::max(z0, z1);
    const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
    per_query[static_cast<std::size_t>(i)] = targets[static_cast<std::size_t>(i)]
                                                 ? lse - z0
                                                 : lse - z1;
  }
  Tensor out = Tensor::scalar(sorted_sum(per_query) / n);
  check_finite(out, "sounding_bce");
  if (taping({&logits})) {
    out.set_requires_grad(true);
    Tensor lc = logits, oc = out;
    std::vector<int> tc = targets;
    Tape::active()->record({logits}, out, [lc, oc, tc, n]() mutable {
      if (!oc.has_grad() || !lc.requires_grad()) return;
      const double g = oc.grad()[0] / n;
      double* gl = lc.grad();
      for (int i = 0; i < n; ++i) {
        const double z0 = lc.data()[i * 2], z1 = lc.data()[i * 2 + 1];
        const double m = std::max(z0, z1);
        const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
        const double s0 = e0 / (e0 + e1), s1 = e1 / (e0 + e1);
        if (tc[static_cast<std::size_t>(i)]) {
          gl[i * 2] += g * (s0 - 1.0);
          gl[i * 2 + 1] += g * s1;
        } else {
          gl[i * 2] += g * s0;
          gl[i * 2 + 1] += g * (s1 - 1.0);
        }
      }
    });
  }
  return out;
}

GtTargets build_targets(const data::VideoSample& sample, int h, int w) {
  GtTargets gt;
  const int t_len = sample.frames.dim(0);
  const int fh = sample.frames.dim(2), fw = sample.frames.dim(3);
  if (fh % h != 0 || fw % w != 0) {
    throw std::invalid_argument("build_targets: frame size not a multiple of mask grid");
  }
  const int sy = fh / h, sx = fw / w;
  for (std::size_t oi = 0; oi < sample.objects.size(); ++oi) {
    const data::ObjectTrack& obj = sample.objects[oi];
    bool sounds = false;
    for (bool b : obj.sounding) sounds = sounds || b;
    if (!sounds) continue;
    Tensor tube = Tensor::zeros({t_len, h, w});
    for (int t = 0; t < t_len; ++t) {
      if (!obj.sounding[static_cast<std::size_t>(t)]) continue;  // silent frame -> zeros
      const double* m = obj.masks.data() + static_cast<std::size_t>(t) * fh * fw;
      double* dst = tube.data() + static_cast<std::size_t>(t) * h * w;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double mx = 0.0;  // max-pool over the sy x sx window
          for (int dy = 0; dy < sy && mx == 0.0; ++dy)
            for (int dx = 0; dx < sx; ++dx)
              if (m[(y * sy + dy) * fw + x * sx + dx] != 0.0) {
                mx = 1.0;
                break;
              }
          dst[y * w + x] = mx;
        }
      }
    }
    gt.tubes.push_back(std::move(tube));
    gt.object_index.push_back(static_cast<int>(oi));
  }
  return gt;
}

CostMatrix build_cost_matrix(const LayerOutput& out, const GtTargets& gt,
                             const LossWeights& weights) {
  const int n = out.mask_logits.dim(0);
  const int k = static_cast<int>(gt.tubes.size());
  const std::size_t tube_len = k > 0 ? gt.tubes[0].numel() : 0;
  CostMatrix cost;
  cost.n = n;
  cost.k = k;
  cost.values.resize(static_cast<std::size_t>(n) * k);
  cost.terms.resize(static_cast<std::size_t>(n) * k);
  for (int q = 0; q < n; ++q) {
    const double* logits = out.mask_logits.data() + static_cast<std::size_t>(q) * tube_len;
    const double p_sound = out.sounding.data()[q];
    for (int g = 0; g < k; ++g) {
      const double* tube = gt.tubes[static_cast<std::size_t>(g)].data();
      double focal_acc = 0.0, sum_pt = 0.0, sum_p = 0.0, sum_t = 0.0;
      for (std::size_t i = 0; i < tube_len; ++i) {
        double l, d;
        focal_point(logits[i], tube[i], weights.focal_alpha, weights.focal_gamma, &l, &d);
        focal_acc += l;
        const double p = stable_sigmoid(logits[i]);
        sum_pt += p * tube[i];
        sum_p += p;
        sum_t += tube[i];
      }
      CostTerms terms;
      terms.focal = focal_acc / static_cast<double>(tube_len);
      terms.dice = 1.0 - (2.0 * sum_pt + 1.0) / (sum_p + sum_t + 1.0);
      terms.sound = 1.0 - p_sound;
      const std::size_t idx = static_cast<std::size_t>(q) * k + g;
      cost.terms[idx] = terms;
      cost.values[idx] =
          weights.focal * terms.focal + weights.dice * terms.dice + weights.ce * terms.sound;
    }
  }
  return cost;
}

Tensor total_loss(const std::vector<LayerOutput>& outputs, const GtTargets& gt,
                  const LossWeights& weights, LossBreakdown* breakdown) {
  if (outputs.empty()) throw std::invalid_argument("total_loss: no outputs");
  const int k = static_cast<int>(gt.tubes.size());
  LossBreakdown acc;
  Tensor total = Tensor::scalar(0.0);
  for (const LayerOutput& out : outputs) {
    const int n = out.mask_logits.dim(0);
    std::vector<int> sound_target(static_cast<std::size_t>(n), 0);
    Tensor layer_loss;
    if (k == 0) {
      Tensor ce = sounding_bce(out.sound_logits, sound_target);
      acc.ce += ce.item();
      layer_loss = mul_scalar(ce, weights.ce);
    } else {
      const CostMatrix cost = build_cost_matrix(out, gt, weights);
      const Assignment assign = hungarian(cost);
      for (const auto& [q, g] : assign.pairs) {
        (void)g;
        sound_target[static_cast<std::size_t>(q)] = 1;
      }
      Tensor ce = sounding_bce(out.sound_logits, sound_target);

      // per-pair mask terms, accumulated in value order so the total is
      // invariant to query/object permutations
      const int t = out.mask_logits.dim(1), h = out.mask_logits.dim(2),
                w = out.mask_logits.dim(3);
      Tensor flat = reshape(out.mask_logits, {n, t * h * w});
      std::vector<Tensor> focal_terms, dice_terms;
      for (const auto& [q, g] : assign.pairs) {
        Tensor row = slice_rows(flat, q, 1);
        Tensor tube = reshape(gt.tubes[static_cast<std::size_t>(g)], {1, t * h * w});
        focal_terms.push_back(focal_loss(row, tube, weights.focal_alpha, weights.focal_gamma));
        dice_terms.push_back(dice_loss(sigmoid(row), tube));
      }
      auto sorted_acc = [](std::vector<Tensor>& terms) {
        std::sort(terms.begin(), terms.end(),
                  [](const Tensor& a, const Tensor& b) { return a.item() < b.item(); });
        Tensor s = terms[0];
        for (std::size_t i = 1; i < terms.size(); ++i) s = add(s, terms[i]);
        return s;
      };
      Tensor focal_mean = mul_scalar(sorted_acc(focal_terms), 1.0 / k);
      Tensor dice_mean = mul_scalar(sorted_acc(dice_terms), 1.0 / k);
      acc.ce += ce.item();
      acc.focal += focal_mean.item();
      acc.dice += dice_mean.item();
      layer_loss = add(mul_scalar(ce, weights.ce),
                       add(mul_scalar(focal_mean, weights.focal),
                           mul_scalar(dice_mean, weights.dice)));
    }
    total = add(total, layer_loss);
  }
  acc.total = total.item();
  if (breakdown) *breakdown = acc;
  return total;
}

}  // namespace ovavss::model
