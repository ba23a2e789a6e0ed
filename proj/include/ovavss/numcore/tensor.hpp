#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ovavss::num {

// Dense row-major float64 tensor. Value type with shared storage: copies
// alias the same buffer, which is what the tape needs to accumulate
// gradients through a graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return impl_->data.size(); }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& vec() { return impl_->data; }
  const std::vector<double>& vec() const { return impl_->data; }

  double item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool rq) { impl_->requires_grad = rq; }

  // Lazily allocated, zero-initialized, same size as data.
  double* grad();
  const std::vector<double>& grad_vec() const { return impl_->grad; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void zero_grad();

  // Identity of the underlying buffer (aliasing check).
  const void* id() const { return impl_.get(); }

  struct Impl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until touched
    bool requires_grad = false;
  };

 private:
  std::shared_ptr<Impl> impl_;
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Throws if any element of t is NaN/Inf; `op` names the producing op.
void check_finite(const Tensor& t, const char* op);

// Reverse-mode tape. Ops append nodes in execution order (topological by
// construction); backward() replays the recorded rules once, in reverse.
class Tape {
 public:
  struct Node {
    std::vector<Tensor> inputs;  // keeps parents alive
    Tensor output;
    std::function<void()> rule;
  };

  // Thread-local active tape; ops record only while one is active.
  static Tape* active();

  void record(std::vector<Tensor> inputs, Tensor output,
              std::function<void()> rule);

  // Seeds d(loss)/d(loss) = 1 and sweeps the recorded nodes in reverse.
  void backward(Tensor& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class TapeScope;
  std::vector<Node> nodes_;
};

// RAII activation of a tape for the enclosing scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// True if recording should happen for an op with these inputs.
bool taping(std::initializer_list<const Tensor*> inputs);

}  // namespace ovavss::num
