#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovavss/numcore/prng.hpp"
#include "ovavss/numcore/tensor.hpp"

namespace ovavss::data {

enum class ShapeKind { circle, square, triangle, cross, ring, bar };
enum class Split { base, novel };

std::string shape_kind_name(ShapeKind k);
ShapeKind shape_kind_from_name(const std::string& name);

struct ClassSpec {
  int class_id = 0;  // >= 1; 0 is background
  std::string name;
  ShapeKind shape_kind = ShapeKind::circle;
  int texture_seed = 0;
  std::vector<double> audio_signature;  // dim 128, unit norm
  Split split = Split::base;
};

// x/y velocity in pixels per frame; all geometry in pixel units.
struct ObjectTrack {
  int class_id = 0;
  num::Tensor masks;           // [T,H,W], values {0,1}
  std::vector<bool> sounding;  // one flag per frame
};

struct VideoSample {
  num::Tensor frames;       // [T,3,H,W] in [0,1], 8-bit quantized
  num::Tensor audio_feats;  // [T,128]
  std::vector<ObjectTrack> objects;
  std::string sample_id;
};

struct DatasetConfig {
  int n_train = 300;
  int n_val = 40;
  int n_test = 60;
  int H = 64;
  int W = 64;
  int T = 5;
  std::uint64_t seed = 42;
  std::vector<ClassSpec> roster;  // empty -> default_roster(seed)
};

struct SampleRef {
  std::string split;
  std::string id;
  std::string dir;  // absolute sample directory
};

struct DatasetManifest {
  std::string root;
  DatasetConfig config;
  std::vector<ClassSpec> roster;
  std::vector<SampleRef> samples;

  std::vector<SampleRef> split_samples(const std::string& split) const;
  const ClassSpec& class_by_id(int class_id) const;
  const ClassSpec& class_by_name(const std::string& name) const;
};

// 10 real-word classes, 6 base / 4 novel; near-orthogonal unit signatures.
std::vector<ClassSpec> default_roster(std::uint64_t seed);

// Draws one sample. `split` controls the class filter (train = base only).
VideoSample draw_sample(const DatasetConfig& cfg, const std::vector<ClassSpec>& roster,
                        const std::string& split, std::uint64_t sample_index);

// Writes the dataset tree under `root`. Deterministic: the same config
// produces byte-identical trees.
DatasetManifest generate_dataset(const DatasetConfig& cfg, const std::string& root);

DatasetManifest load_manifest(const std::string& root);
void save_sample(const VideoSample& sample, const std::string& dir);
VideoSample load_sample(const std::string& dir);

// [H,W] map of class ids: pixels of objects sounding at frame t, else 0.
num::Tensor semantic_gt(const VideoSample& sample, int t);

// Canonical rendering of one class for the embedding table: object centered
// on a black background at the given square size. `variant` varies scale and
// texture phase. Returns frame [3,S,S] and mask [S,S].
struct CanonicalView {
  num::Tensor frame;
  num::Tensor mask;
};
CanonicalView render_canonical(const ClassSpec& spec, int size, int variant);

}  // namespace ovavss::data
