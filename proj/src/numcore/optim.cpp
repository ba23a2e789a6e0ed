#include "ovavss/numcore/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ovavss::num {

AdamW::AdamW(ParamStore& store, Options opt) : store_(store), opt_(opt) {
  for (const auto& [name, p] : store_.all()) {
    m_.emplace(name, Tensor::zeros(p.shape()));
    v_.emplace(name, Tensor::zeros(p.shape()));
  }
}

void adam_step(Tensor& param, const double* grad, Tensor& m, Tensor& v, long t,
               const AdamW::Options& opt, double lr_scale) {
  const double lr = opt.lr * lr_scale;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  double* pm = m.data();
  double* pv = v.data();
  double* pp = param.data();
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double g = grad[i];
    pm[i] = opt.beta1 * pm[i] + (1.0 - opt.beta1) * g;
    pv[i] = opt.beta2 * pv[i] + (1.0 - opt.beta2) * g * g;
    const double mhat = pm[i] / bc1;
    const double vhat = pv[i] / bc2;
    pp[i] -= lr * (mhat / (std::sqrt(vhat) + opt.eps)) + lr * opt.weight_decay * pp[i];
  }
}

void AdamW::step(double lr_scale) {
  ++t_;
  for (auto& [name, p] : store_.all()) {
    if (!p.has_grad()) continue;
    adam_step(p, p.grad(), m_.at(name), v_.at(name), t_, opt_, lr_scale);
  }
}

std::map<std::string, Tensor> AdamW::state() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : m_) out.emplace("adam.m." + name, t);
  for (const auto& [name, t] : v_) out.emplace("adam.v." + name, t);
  out.emplace("adam.t", Tensor::scalar(static_cast<double>(t_)));
  return out;
}

void AdamW::load_state(const std::map<std::string, Tensor>& state) {
  for (auto& [name, t] : m_) {
    auto it = state.find("adam.m." + name);
    if (it == state.end()) throw std::runtime_error("optimizer state missing adam.m." + name);
    if (it->second.numel() != t.numel())
      throw std::runtime_error("optimizer state size mismatch for " + name);
    t.vec() = it->second.vec();
  }
  for (auto& [name, t] : v_) {
    auto it = state.find("adam.v." + name);
    if (it == state.end()) throw std::runtime_error("optimizer state missing adam.v." + name);
    t.vec() = it->second.vec();
  }
  auto it = state.find("adam.t");
  if (it == state.end()) throw std::runtime_error("optimizer state missing adam.t");
  t_ = static_cast<long>(it->second.item());
}

}  // namespace ovavss::num
