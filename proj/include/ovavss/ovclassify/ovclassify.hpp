#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ovavss/backbones/backbones.hpp"
#include "ovavss/synthdata/synthdata.hpp"

namespace ovavss::model {

enum class CropMode { none, crop_resize, square_crop };

std::string crop_mode_name(CropMode m);
CropMode crop_mode_from_name(const std::string& name);

inline constexpr int kEmbedDim = 64;
inline constexpr int kDefaultCropSize = 32;
inline constexpr double kDefaultTemperature = 100.0;
inline constexpr std::uint64_t kFrozenEncoderSeed = 0x0f20ae11;

struct CropSpec {
  int cx = 0, cy = 0;   // bbox center, pixels
  int side = 0;         // max(bbox_w, bbox_h)
  int pad_left = 0, pad_top = 0, pad_right = 0, pad_bottom = 0;
};

struct Crop {
  num::Tensor image;  // [3, out, out]
  CropSpec spec;
};

// Masked square crop: background zeroed, square window of the bbox's longer
// side around its center, zero-padded where it leaves the frame, resized.
// Empty mask -> nullopt (the object is dropped from classification).
std::optional<Crop> square_crop(const num::Tensor& frame, const num::Tensor& mask,
                                int out_size = kDefaultCropSize);

// Ablation variants: `none` resizes the whole masked frame, `crop_resize`
// resizes the raw bbox (aspect distortion).
std::optional<Crop> crop_for_mode(CropMode mode, const num::Tensor& frame,
                                  const num::Tensor& mask,
                                  int out_size = kDefaultCropSize);

// Frozen toy stand-in for a pretrained image tower: the pyramid encoder at
// a fixed seed, pooled level 4, linear to the embedding space. Never
// trained; parameters are derived from the seed, not checkpointed.
struct FrozenEncoder {
  num::ParamStore store;
  VisualEncoderParams encoder;
  num::LinearParams proj;
};
FrozenEncoder make_frozen_encoder(std::uint64_t seed = kFrozenEncoderSeed);

// L2-normalized embedding of an image [3,S,S] (S divisible by 32).
std::vector<double> embed_image(const FrozenEncoder& enc, const num::Tensor& image);

struct EmbeddingTable {
  int dim = kEmbedDim;
  double temperature = kDefaultTemperature;
  std::map<std::string, std::vector<double>> entries;  // unit-norm vectors

  const std::vector<double>& at(const std::string& name) const;
  std::vector<std::string> names() const;
};

// Offline table from canonical renderings; `views` render-variation seeds
// play the role of prompt templates and are ensemble-averaged.
EmbeddingTable build_class_table(const std::vector<data::ClassSpec>& classes,
                                 const FrozenEncoder& enc, int views = 8,
                                 int crop_size = kDefaultCropSize,
                                 double temperature = kDefaultTemperature);

// File provider: {"dim": D, "temperature": e, "classes": {name: [..]}};
// vectors are normalized on load. Missing required classes -> error listing
// the names.
EmbeddingTable load_class_table(const std::string& path,
                                const std::vector<std::string>& required_names = {});
void save_class_table(const EmbeddingTable& table, const std::string& path);

struct Classification {
  std::string class_name;
  std::vector<double> scores;  // softmax over table.names() order
};

// One result per crop (softmax of temperature-scaled cosine similarity).
std::vector<Classification> classify(const std::vector<num::Tensor>& crops,
                                     const EmbeddingTable& table,
                                     const FrozenEncoder& enc);

// Per-object decision: mean of per-frame distributions, then argmax.
Classification classify_object(const std::vector<num::Tensor>& frame_crops,
                               const EmbeddingTable& table, const FrozenEncoder& enc);

// Bilinear resample of [3,h,w] (or [1,h,w]) to out x out; plain data helper.
num::Tensor resize_bilinear(const num::Tensor& image, int out_size);

}  // namespace ovavss::model
