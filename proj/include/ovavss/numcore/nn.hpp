#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovavss/numcore/ops.hpp"
#include "ovavss/numcore/prng.hpp"
#include "ovavss/numcore/tensor.hpp"

namespace ovavss::num {

// Named trainable parameters. std::map keeps iteration order stable, which
// the optimizer and checkpoint writer rely on for determinism.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor t) {
    if (params_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    t.set_requires_grad(true);
    params_.emplace(name, t);
    return t;
  }

  Tensor& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }

  const std::map<std::string, Tensor>& all() const { return params_; }
  std::map<std::string, Tensor>& all() { return params_; }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  std::size_t count_values() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
  }

 private:
  std::map<std::string, Tensor> params_;
};

Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);

struct LinearParams {
  Tensor w;  // [in x out]
  Tensor b;  // [out]
};
LinearParams make_linear(ParamStore& store, const std::string& name, int in,
                         int out, Rng& rng);
// x: [R x in] -> [R x out]
Tensor linear(const Tensor& x, const LinearParams& p);

struct ConvParams {
  Tensor w;  // [Cout,Cin,k,k]
  Tensor b;  // [Cout]
  int stride = 1;
  int padding = 0;
};
ConvParams make_conv(ParamStore& store, const std::string& name, int cin,
                     int cout, int kernel, int stride, int padding, Rng& rng);
Tensor conv(const Tensor& x, const ConvParams& p);

struct NormParams {
  Tensor gamma;  // ones
  Tensor beta;   // zeros
};
NormParams make_norm(ParamStore& store, const std::string& name, int c);

struct MhaParams {
  LinearParams q, k, v, o;
  int heads = 1;
};
MhaParams make_mha(ParamStore& store, const std::string& name, int dim,
                   int heads, Rng& rng);

// Standard scaled dot-product attention: q [Lq x C], k/v [Lk x C]; per-head
// softmax(Q K^T / sqrt(d_k)) V, heads concatenated, output projection.
// `score_bias` ([Lq x Lk], optional) is added to the pre-softmax scores.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const MhaParams& p,
                            const Tensor& score_bias = Tensor());

// 3-layer MLP head (relu between layers).
struct MlpParams {
  std::vector<LinearParams> layers;
};
MlpParams make_mlp(ParamStore& store, const std::string& name,
                   const std::vector<int>& dims, Rng& rng);
Tensor mlp(const Tensor& x, const MlpParams& p);

}  // namespace ovavss::num
