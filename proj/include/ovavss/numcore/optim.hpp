#pragma once

#include <map>
#include <string>
#include <vector>

#include "ovavss/numcore/nn.hpp"
#include "ovavss/numcore/tensor.hpp"

namespace ovavss::num {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// AdamW: Adam moments plus decoupled weight decay.
class AdamW {
 public:
  using Options = AdamOptions;

  explicit AdamW(ParamStore& store, Options opt = Options());

  // One update from the gradients currently stored on the parameters.
  // `lr_scale` implements the step schedule (1.0 or the decayed factor).
  void step(double lr_scale = 1.0);

  long step_count() const { return t_; }

  // Optimizer state as named tensors, for checkpointing.
  std::map<std::string, Tensor> state() const;
  void load_state(const std::map<std::string, Tensor>& state);

 private:
  ParamStore& store_;
  Options opt_;
  long t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

// Standalone single-parameter AdamW update (exposed for unit tests).
void adam_step(Tensor& param, const double* grad, Tensor& m, Tensor& v, long t,
               const AdamW::Options& opt, double lr_scale = 1.0);

}  // namespace ovavss::num
