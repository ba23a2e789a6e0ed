#include "ovavss/numcore/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ovavss::num {

Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.data()[i] = rng.uniform(-limit, limit);
  return t;
}

LinearParams make_linear(ParamStore& store, const std::string& name, int in,
                         int out, Rng& rng) {
  LinearParams p;
  p.w = store.add(name + ".w", xavier_uniform({in, out}, in, out, rng));
  p.b = store.add(name + ".b", Tensor::zeros({out}));
  return p;
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  return add_rowwise(matmul(x, p.w), p.b);
}

ConvParams make_conv(ParamStore& store, const std::string& name, int cin,
                     int cout, int kernel, int stride, int padding, Rng& rng) {
  ConvParams p;
  const int fan_in = cin * kernel * kernel;
  const int fan_out = cout * kernel * kernel;
  p.w = store.add(name + ".w",
                  xavier_uniform({cout, cin, kernel, kernel}, fan_in, fan_out, rng));
  p.b = store.add(name + ".b", Tensor::zeros({cout}));
  p.stride = stride;
  p.padding = padding;
  return p;
}

Tensor conv(const Tensor& x, const ConvParams& p) {
  return conv2d(x, p.w, p.b, p.stride, p.padding);
}

NormParams make_norm(ParamStore& store, const std::string& name, int c) {
  NormParams p;
  p.gamma = store.add(name + ".gamma", Tensor::full({c}, 1.0));
  p.beta = store.add(name + ".beta", Tensor::zeros({c}));
  return p;
}

MhaParams make_mha(ParamStore& store, const std::string& name, int dim,
                   int heads, Rng& rng) {
  if (heads < 1 || dim % heads != 0) {
    throw std::invalid_argument("attention dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads));
  }
  MhaParams p;
  p.q = make_linear(store, name + ".q", dim, dim, rng);
  p.k = make_linear(store, name + ".k", dim, dim, rng);
  p.v = make_linear(store, name + ".v", dim, dim, rng);
  p.o = make_linear(store, name + ".o", dim, dim, rng);
  p.heads = heads;
  return p;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const MhaParams& p, const Tensor& score_bias) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw std::invalid_argument("attention expects rank-2 q/k/v");
  }
  const int c = q.dim(1);
  if (k.dim(1) != c || v.dim(1) != c) {
    throw std::invalid_argument("attention: q/k/v feature dims differ");
  }
  if (k.dim(0) != v.dim(0)) {
    throw std::invalid_argument("attention: key/value lengths differ");
  }
  if (c % p.heads != 0) {
    throw std::invalid_argument("attention dim " + std::to_string(c) +
                                " not divisible by heads " + std::to_string(p.heads));
  }
  const int dk = c / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const Tensor qp = linear(q, p.q);
  const Tensor kp = linear(k, p.k);
  const Tensor vp = linear(v, p.v);
  std::vector<Tensor> head_out;
  head_out.reserve(p.heads);
  for (int h = 0; h < p.heads; ++h) {
    const Tensor qh = slice_cols(qp, h * dk, dk);
    const Tensor kh = slice_cols(kp, h * dk, dk);
    const Tensor vh = slice_cols(vp, h * dk, dk);
    Tensor scores = mul_scalar(matmul(qh, transpose(kh)), scale);
    if (score_bias.defined()) scores = add(scores, score_bias);
    const Tensor attn = softmax(scores, -1);
    head_out.push_back(matmul(attn, vh));
  }
  const Tensor ctx = p.heads == 1 ? head_out[0] : concat_cols(head_out);
  return linear(ctx, p.o);
}

MlpParams make_mlp(ParamStore& store, const std::string& name,
                   const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("mlp needs >= 2 dims");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    p.layers.push_back(make_linear(store, name + ".l" + std::to_string(i),
                                   dims[i], dims[i + 1], rng));
  }
  return p;
}

Tensor mlp(const Tensor& x, const MlpParams& p) {
  Tensor h = x;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    h = linear(h, p.layers[i]);
    if (i + 1 < p.layers.size()) h = relu(h);
  }
  return h;
}

}  // namespace ovavss::num
