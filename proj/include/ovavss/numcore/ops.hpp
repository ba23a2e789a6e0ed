#pragma once

#include <vector>

#include "ovavss/numcore/tensor.hpp"

namespace ovavss::num {

// Elementwise / scalar
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

// x: [R x C], bias: [C], broadcast over rows
Tensor add_rowwise(const Tensor& x, const Tensor& bias);

// Activations
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Shape plumbing (all copies; backward scatters)
Tensor reshape(const Tensor& t, std::vector<int> shape);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& t, int begin, int count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& t, int begin, int count);

// softmax along `axis` (negative counts from the back); stable via
// max-subtraction.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);

// Normalizations. x is treated as [rows x C] with C the last dim.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-12);
// x: [B,C,H,W] (or [C], normalized as one spatial cell); per-group stats.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma,
                  const Tensor& beta, double eps = 1e-5);

// x: [B,Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout]; zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding);

// x: [B,C,H,W] -> [B,C,H*scale,W*scale]; align_corners=false convention.
Tensor bilinear_upsample(const Tensor& x, int scale);

// Reductions
Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);
// [B,C,H,W] -> [B,C], mean over the spatial cells
Tensor spatial_mean(const Tensor& x);

// One-time process init (pins BLAS to a single thread for determinism).
void init_backend();

}  // namespace ovavss::num
