#pragma once

#include <utility>
#include <vector>

#include "ovavss/audiomaskdec/audiomaskdec.hpp"
#include "ovavss/synthdata/synthdata.hpp"

namespace ovavss::model {

struct CostTerms {
  double sound = 0, focal = 0, dice = 0;
};

// values[n*k_count + k]: cost of assigning query n to ground-truth object k.
struct CostMatrix {
  int n = 0, k = 0;
  std::vector<double> values;
  std::vector<CostTerms> terms;

  double at(int query, int gt) const { return values[static_cast<std::size_t>(query) * k + gt]; }
};

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (query_index, gt_index), length K
  double total = 0.0;
};

// Minimum-cost injective assignment of all K ground-truth objects to
// queries (Kuhn-Munkres on the rectangular matrix). Ties resolve toward
// lower query indices.
Assignment hungarian(const CostMatrix& cost);

// Binary focal loss on logits, mean over elements. alpha < 0 disables the
// alpha weighting (alpha_t = 1), which reduces gamma=0 to plain BCE.
num::Tensor focal_loss(const num::Tensor& logits, const num::Tensor& targets,
                       double alpha = 0.25, double gamma = 2.0);

// Soft dice loss with smoothing 1: 1 - (2*sum(p*t)+1)/(sum(p)+sum(t)+1).
num::Tensor dice_loss(const num::Tensor& probs, const num::Tensor& targets);

// Mean over queries of -log softmax(logits)[target channel]; channel 0 is
// "sounding". Per-query terms are summed in value order so the result is
// invariant to query permutations.
num::Tensor sounding_bce(const num::Tensor& logits, const std::vector<int>& targets);

struct LossWeights {
  double ce = 2.0;
  double focal = 5.0;
  double dice = 5.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

// Ground-truth mask tubes at the mask-logit resolution: objects sounding in
// at least one frame, max-pool downsampled, silent frames zeroed.
struct GtTargets {
  std::vector<num::Tensor> tubes;  // K tensors [T, h, w] with values {0,1}
  std::vector<int> object_index;   // position in VideoSample.objects
};
GtTargets build_targets(const data::VideoSample& sample, int h, int w);

CostMatrix build_cost_matrix(const LayerOutput& out, const GtTargets& gt,
                             const LossWeights& weights);

struct LossBreakdown {
  double ce = 0, focal = 0, dice = 0, total = 0;
};

// Deep-supervised Eq-style total: per output set, match then sum
// ce/focal/dice with the configured weights.
num::Tensor total_loss(const std::vector<LayerOutput>& outputs, const GtTargets& gt,
                       const LossWeights& weights, LossBreakdown* breakdown = nullptr);

}  // namespace ovavss::model
