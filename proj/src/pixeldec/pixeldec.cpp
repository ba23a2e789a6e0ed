#include "ovavss/pixeldec/pixeldec.hpp"

#include <stdexcept>

namespace ovavss::model {

using namespace ovavss::num;

PixelDecParams make_pixeldec(ParamStore& store, const std::string& prefix, Rng& rng) {
  PixelDecParams p;
  const std::array<int, 4> cin = {kPyramidChannels[0], kCav, kCav, kCav};
  for (int k = 0; k < 4; ++k) {
    const std::string base = prefix + ".level" + std::to_string(k + 1);
    p.lateral[static_cast<std::size_t>(k)] =
        make_conv(store, base + ".lateral", cin[static_cast<std::size_t>(k)], kCe, 1, 1, 0, rng);
    p.smooth[static_cast<std::size_t>(k)] =
        make_conv(store, base + ".smooth", kCe, kCe, 3, 1, 1, rng);
  }
  return p;
}

PixelDecoderBatchOut pixel_decode_batch(const std::vector<Tensor>& f_va,
                                        const Tensor& level1,
                                        const PixelDecParams& params, bool top_down) {
  if (f_va.size() != 3) {
    throw std::invalid_argument("pixel_decode: expected 3 fused levels, got " +
                                std::to_string(f_va.size()));
  }
  // laterals, finest to coarsest: index 0 -> level1, 3 -> level4
  std::array<Tensor, 4> lat;
  lat[0] = conv(level1, params.lateral[0]);
  for (int i = 0; i < 3; ++i)
    lat[static_cast<std::size_t>(i + 1)] =
        conv(f_va[static_cast<std::size_t>(i)], params.lateral[static_cast<std::size_t>(i + 1)]);

  // top-down accumulation, then per-level smoothing
  std::array<Tensor, 4> acc;
  acc[3] = lat[3];
  for (int k = 2; k >= 0; --k) {
    acc[static_cast<std::size_t>(k)] =
        top_down ? add(lat[static_cast<std::size_t>(k)],
                       bilinear_upsample(acc[static_cast<std::size_t>(k + 1)], 2))
                 : lat[static_cast<std::size_t>(k)];
  }

  PixelDecoderBatchOut out;
  for (int k = 3; k >= 1; --k) {
    out.memory.push_back(conv(acc[static_cast<std::size_t>(k)],
                              params.smooth[static_cast<std::size_t>(k)]));
  }
  out.pixel_embed = conv(acc[0], params.smooth[0]);
  return out;
}

PixelDecoderOut pixel_decode(const FusedFrame& fused, const Tensor& level1,
                             const PixelDecParams& params, bool top_down) {
  if (level1.rank() != 3) {
    throw std::invalid_argument("pixel_decode: level1 must be [C,H,W], got " +
                                shape_str(level1.shape()));
  }
  std::vector<Tensor> batched;
  for (const Tensor& level : fused.f_va) {
    batched.push_back(reshape(level, {1, level.dim(0), level.dim(1), level.dim(2)}));
  }
  Tensor l1 = reshape(level1, {1, level1.dim(0), level1.dim(1), level1.dim(2)});
  PixelDecoderBatchOut b = pixel_decode_batch(batched, l1, params, top_down);
  PixelDecoderOut out;
  for (const Tensor& m : b.memory)
    out.memory.push_back(reshape(m, {m.dim(1), m.dim(2), m.dim(3)}));
  out.pixel_embed = reshape(b.pixel_embed, {b.pixel_embed.dim(1), b.pixel_embed.dim(2),
                                            b.pixel_embed.dim(3)});
  return out;
}

}  // namespace ovavss::model
