#include "ovavss/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ovavss::num {

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps, int max_probes) {
  if (eps < 1e-6 || eps > 1e-3) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");
  }
  x.set_requires_grad(true);
  x.zero_grad();

  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = f(x);
    if (!std::isfinite(loss.item())) {
      throw std::runtime_error("grad_check: f(x) is not finite");
    }
    tape.backward(loss);
  }
  std::vector<double> analytic(x.grad(), x.grad() + x.numel());

  std::vector<std::size_t> probes;
  if (max_probes <= 0 || static_cast<std::size_t>(max_probes) >= x.numel()) {
    probes.resize(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) probes[i] = i;
  } else {
    const std::size_t stride = x.numel() / static_cast<std::size_t>(max_probes);
    for (int i = 0; i < max_probes; ++i)
      probes.push_back(static_cast<std::size_t>(i) * stride);
  }

  std::vector<double> numeric(probes.size());
  for (std::size_t pi = 0; pi < probes.size(); ++pi) {
    const std::size_t i = probes[pi];
    const double orig = x.data()[i];
    const double h = eps * std::max(1.0, std::abs(orig));
    x.data()[i] = orig + h;
    const double fp = f(x).item();
    x.data()[i] = orig - h;
    const double fm = f(x).item();
    x.data()[i] = orig;
    numeric[pi] = (fp - fm) / (2.0 * h);
  }

  double gmax = 0.0;
  for (double v : analytic) gmax = std::max(gmax, std::abs(v));
  for (double v : numeric) gmax = std::max(gmax, std::abs(v));
  const double floor = std::max(1e-3 * gmax, 1e-12);

  double worst = 0.0;
  for (std::size_t pi = 0; pi < probes.size(); ++pi) {
    const double a = analytic[probes[pi]];
    const double n = numeric[pi];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

}  // namespace ovavss::num
