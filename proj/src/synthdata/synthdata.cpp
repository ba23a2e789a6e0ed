#include "ovavss/synthdata/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "ovavss/synthdata/image_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ovavss::data {

namespace {

constexpr int kAudioDim = 128;
constexpr double kAudioNoise = 0.1;
// circumscribed-circle factor over the size parameter, for separation tests
constexpr double kShapeRadiusFactor = 1.05;

struct Rgb {
  double r, g, b;
};

struct ClassStyle {
  const char* name;
  ShapeKind kind;
  Rgb color;
};

// 6 base + 4 novel; colors chosen so (shape, color) pairs stay distinct.
constexpr ClassStyle kStyles[10] = {
    {"drum", ShapeKind::circle, {0.85, 0.15, 0.15}},
    {"violin", ShapeKind::square, {0.15, 0.75, 0.20}},
    {"piano", ShapeKind::triangle, {0.20, 0.30, 0.90}},
    {"guitar", ShapeKind::cross, {0.90, 0.85, 0.15}},
    {"trumpet", ShapeKind::ring, {0.85, 0.20, 0.80}},
    {"flute", ShapeKind::bar, {0.15, 0.80, 0.85}},
    {"dog", ShapeKind::circle, {0.95, 0.55, 0.10}},
    {"cat", ShapeKind::square, {0.60, 0.25, 0.85}},
    {"bell", ShapeKind::triangle, {0.90, 0.90, 0.85}},
    {"siren", ShapeKind::bar, {0.10, 0.50, 0.45}},
};

double hash_noise(int x, int y, std::uint64_t seed) {
  std::uint64_t h = seed ^ (static_cast<std::uint64_t>(x) * 73856093ULL) ^
                    (static_cast<std::uint64_t>(y) * 19349663ULL);
  h = num::splitmix64(h);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

bool inside_shape(ShapeKind k, double dx, double dy, double s) {
  switch (k) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= 0.80 * 0.80 * s * s;
    case ShapeKind::square:
      return std::abs(dx) <= 0.70 * s && std::abs(dy) <= 0.70 * s;
    case ShapeKind::triangle: {
      if (dy < -0.75 * s || dy > 0.75 * s) return false;
      const double halfw = 0.72 * s * (dy + 0.75 * s) / (1.5 * s);
      return std::abs(dx) <= halfw;
    }
    case ShapeKind::cross:
      return (std::abs(dx) <= 0.32 * s && std::abs(dy) <= s) ||
             (std::abs(dy) <= 0.32 * s && std::abs(dx) <= s);
    case ShapeKind::ring: {
      const double r2 = dx * dx + dy * dy;
      return r2 >= 0.50 * 0.50 * s * s && r2 <= 0.88 * 0.88 * s * s;
    }
    case ShapeKind::bar:
      return std::abs(dx) <= s && std::abs(dy) <= 0.32 * s;
  }
  return false;
}

double quantize8(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return std::round(v * 255.0) / 255.0;
}

// Perlin-like value noise: bilinear interpolation of a random lattice.
struct ValueNoise {
  int cell;
  int gw, gh;
  std::vector<double> lattice;

  ValueNoise(int h, int w, int cell_size, num::Rng& rng) : cell(cell_size) {
    gw = w / cell + 2;
    gh = h / cell + 2;
    lattice.resize(static_cast<std::size_t>(gw) * gh);
    for (double& v : lattice) v = rng.uniform();
  }

  double at(int y, int x) const {
    const double fy = static_cast<double>(y) / cell;
    const double fx = static_cast<double>(x) / cell;
    const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
    const double wy = fy - y0, wx = fx - x0;
    const double a = lattice[y0 * gw + x0], b = lattice[y0 * gw + x0 + 1];
    const double c = lattice[(y0 + 1) * gw + x0], d = lattice[(y0 + 1) * gw + x0 + 1];
    return (a * (1 - wx) + b * wx) * (1 - wy) + (c * (1 - wx) + d * wx) * wy;
  }
};

void paint_object(num::Tensor& frame, const num::Tensor& mask, const Rgb& color,
                  std::uint64_t tex_seed, int h, int w) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask.data()[y * w + x] == 0.0) continue;
      const double m = 0.86 + 0.14 * hash_noise(x, y, tex_seed);
      frame.data()[0 * h * w + y * w + x] = color.r * m;
      frame.data()[1 * h * w + y * w + x] = color.g * m;
      frame.data()[2 * h * w + y * w + x] = color.b * m;
    }
  }
}

struct Placement {
  double cx, cy, vx, vy, s;
  int class_index;  // roster index
};

num::Tensor raster_track(const Placement& p, ShapeKind kind, int t, int h, int w) {
  num::Tensor mask = num::Tensor::zeros({h, w});
  const double cx = p.cx + p.vx * t;
  const double cy = p.cy + p.vy * t;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (inside_shape(kind, x - cx, y - cy, p.s)) mask.data()[y * w + x] = 1.0;
  return mask;
}

std::string split_name(Split s) { return s == Split::base ? "base" : "novel"; }

Split split_from_name(const std::string& s) {
  if (s == "base") return Split::base;
  if (s == "novel") return Split::novel;
  throw std::runtime_error("unknown class split: " + s);
}

json class_to_json(const ClassSpec& c) {
  return json{{"id", c.class_id},
              {"name", c.name},
              {"shape", shape_kind_name(c.shape_kind)},
              {"texture_seed", c.texture_seed},
              {"split", split_name(c.split)},
              {"signature", c.audio_signature}};
}

ClassSpec class_from_json(const json& j) {
  ClassSpec c;
  c.class_id = j.at("id").get<int>();
  c.name = j.at("name").get<std::string>();
  c.shape_kind = shape_kind_from_name(j.at("shape").get<std::string>());
  c.texture_seed = j.at("texture_seed").get<int>();
  c.split = split_from_name(j.at("split").get<std::string>());
  c.audio_signature = j.at("signature").get<std::vector<double>>();
  return c;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << content;
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

std::string shape_kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
    case ShapeKind::cross: return "cross";
    case ShapeKind::ring: return "ring";
    case ShapeKind::bar: return "bar";
  }
  throw std::invalid_argument("bad shape kind");
}

ShapeKind shape_kind_from_name(const std::string& name) {
  for (int i = 0; i < 6; ++i) {
    const auto k = static_cast<ShapeKind>(i);
    if (shape_kind_name(k) == name) return k;
  }
  throw std::runtime_error("unknown shape kind: " + name);
}

std::vector<ClassSpec> default_roster(std::uint64_t seed) {
  num::Rng rng(seed ^ 0x5157e2a9c3ULL);
  constexpr int n_classes = 10;
  constexpr int n_base = 6;

  // Orthogonalize random vectors, then perturb: pairwise |cos| stays tiny.
  std::vector<std::vector<double>> basis(n_classes, std::vector<double>(kAudioDim));
  for (int c = 0; c < n_classes; ++c) {
    for (int d = 0; d < kAudioDim; ++d) basis[c][d] = rng.normal();
    for (int prev = 0; prev < c; ++prev) {
      double dot = 0.0;
      for (int d = 0; d < kAudioDim; ++d) dot += basis[c][d] * basis[prev][d];
      for (int d = 0; d < kAudioDim; ++d) basis[c][d] -= dot * basis[prev][d];
    }
    double norm = 0.0;
    for (double v : basis[c]) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-9) throw std::runtime_error("degenerate signature basis");
    for (double& v : basis[c]) v /= norm;
  }
  for (int c = 0; c < n_classes; ++c) {
    for (int d = 0; d < kAudioDim; ++d) basis[c][d] += 0.05 * rng.normal();
    double norm = 0.0;
    for (double v : basis[c]) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : basis[c]) v /= norm;
  }
  for (int a = 0; a < n_classes; ++a) {
    for (int b = a + 1; b < n_classes; ++b) {
      double dot = 0.0;
      for (int d = 0; d < kAudioDim; ++d) dot += basis[a][d] * basis[b][d];
      if (std::abs(dot) >= 0.3)
        throw std::runtime_error("signature orthogonalization failed");
    }
  }

  std::vector<ClassSpec> roster;
  for (int c = 0; c < n_classes; ++c) {
    ClassSpec spec;
    spec.class_id = c + 1;
    spec.name = kStyles[c].name;
    spec.shape_kind = kStyles[c].kind;
    spec.texture_seed = static_cast<int>(rng.uniform_int(1 << 30));
    spec.audio_signature = basis[c];
    spec.split = c < n_base ? Split::base : Split::novel;
    roster.push_back(std::move(spec));
  }
  return roster;
}

VideoSample draw_sample(const DatasetConfig& cfg, const std::vector<ClassSpec>& roster,
                        const std::string& split, std::uint64_t sample_index) {
  const int h = cfg.H, w = cfg.W, t_len = cfg.T;
  std::uint64_t split_tag = split == "train" ? 1 : split == "val" ? 2 : 3;
  num::Rng rng = num::derive_rng(cfg.seed ^ (split_tag << 48), sample_index);

  std::vector<int> base_indices;
  for (std::size_t i = 0; i < roster.size(); ++i)
    if (roster[i].split == Split::base) base_indices.push_back(static_cast<int>(i));
  if (split == "train" && base_indices.empty())
    throw std::invalid_argument("train split requires at least one base class");

  // object count: favor multi-object scenes so silent distractors are common
  const double ku = rng.uniform();
  int n_objects = ku < 0.25 ? 1 : (ku < 0.70 ? 2 : 3);

  // class choices; train rejects any draw containing a novel class
  std::vector<int> class_idx;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    class_idx.clear();
    for (int i = 0; i < n_objects; ++i)
      class_idx.push_back(static_cast<int>(rng.uniform_int(roster.size())));
    if (split != "train") break;
    bool any_novel = false;
    for (int ci : class_idx) any_novel = any_novel || roster[ci].split == Split::novel;
    if (!any_novel) break;
    if (attempt == 999) throw std::runtime_error("could not draw an all-base sample");
  }

  // placements with disjoint trajectories
  std::vector<Placement> placements;
  const double smin = 0.16 * std::min(h, w), smax = 0.23 * std::min(h, w);
  for (int i = 0; i < n_objects; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
      Placement p;
      p.s = rng.uniform(smin, smax);
      const double margin = 0.65 * p.s;
      p.cx = rng.uniform(margin, w - 1 - margin);
      p.cy = rng.uniform(margin, h - 1 - margin);
      p.vx = rng.uniform(-2.2, 2.2);
      p.vy = rng.uniform(-2.2, 2.2);
      p.class_index = class_idx[i];
      bool ok = true;
      for (int t = 0; t < t_len && ok; ++t) {
        const double cx = p.cx + p.vx * t, cy = p.cy + p.vy * t;
        const double lim = 0.5 * p.s;
        if (cx < lim || cx > w - 1 - lim || cy < lim || cy > h - 1 - lim) ok = false;
        for (const Placement& q : placements) {
          const double qx = q.cx + q.vx * t, qy = q.cy + q.vy * t;
          const double sep = kShapeRadiusFactor * (p.s + q.s) + 2.0;
          if (std::hypot(cx - qx, cy - qy) < sep) {
            ok = false;
            break;
          }
        }
      }
      if (ok) {
        placements.push_back(p);
        placed = true;
      }
    }
    if (!placed) break;  // scene too crowded; keep what fits
  }
  n_objects = static_cast<int>(placements.size());

  // sounding flags: object 0 is always a sounder; others are usually
  // fully-silent distractors
  std::vector<std::vector<bool>> sounding(n_objects);
  for (int i = 0; i < n_objects; ++i) {
    sounding[i].resize(t_len, false);
    if (i > 0 && rng.uniform() < 0.8) continue;  // silent distractor
    bool state = i == 0 ? true : rng.uniform() < 0.5;
    for (int t = 0; t < t_len; ++t) {
      sounding[i][t] = state;
      if (rng.uniform() < 0.2) state = !state;
    }
    if (i == 0) sounding[i][0] = true;
  }

  VideoSample sample;
  sample.frames = num::Tensor::zeros({t_len, 3, h, w});
  sample.audio_feats = num::Tensor::zeros({t_len, kAudioDim});

  // background: two octaves of value noise, shared by all frames
  const std::uint64_t bg_seed = rng.next_u64();
  num::Rng bg_rng(bg_seed);
  ValueNoise coarse(h, w, 8, bg_rng);
  ValueNoise fine(h, w, 4, bg_rng);
  const std::uint64_t bg_tex = bg_rng.next_u64();

  for (int i = 0; i < n_objects; ++i) {
    ObjectTrack track;
    track.class_id = roster[placements[i].class_index].class_id;
    track.sounding = sounding[i];
    track.masks = num::Tensor::zeros({t_len, h, w});
    sample.objects.push_back(std::move(track));
  }

  for (int t = 0; t < t_len; ++t) {
    num::Tensor frame = num::Tensor::zeros({3, h, w});
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double n = 0.65 * coarse.at(y, x) + 0.35 * fine.at(y, x);
        const double cn = hash_noise(x, y, bg_tex);
        const double base = 0.22 + 0.28 * n;
        frame.data()[0 * h * w + y * w + x] = base + 0.05 * cn;
        frame.data()[1 * h * w + y * w + x] = base + 0.05 * (1.0 - cn);
        frame.data()[2 * h * w + y * w + x] = base;
      }
    }
    for (int i = 0; i < n_objects; ++i) {
      const ClassSpec& spec = roster[placements[i].class_index];
      num::Tensor mask = raster_track(placements[i], spec.shape_kind, t, h, w);
      std::copy(mask.vec().begin(), mask.vec().end(),
                sample.objects[i].masks.data() + static_cast<std::size_t>(t) * h * w);
      paint_object(frame, mask, kStyles[spec.class_id - 1].color,
                   static_cast<std::uint64_t>(spec.texture_seed) * 0x9e3779b9ULL + t,
                   h, w);
    }
    for (std::size_t i = 0; i < frame.numel(); ++i)
      frame.data()[i] = quantize8(frame.data()[i]);
    std::copy(frame.vec().begin(), frame.vec().end(),
              sample.frames.data() + static_cast<std::size_t>(t) * 3 * h * w);

    // audio: sum of sounding signatures plus noise
    double* audio = sample.audio_feats.data() + static_cast<std::size_t>(t) * kAudioDim;
    for (int i = 0; i < n_objects; ++i) {
      if (!sample.objects[i].sounding[t]) continue;
      const auto& sig = roster[placements[i].class_index].audio_signature;
      for (int d = 0; d < kAudioDim; ++d) audio[d] += sig[d];
    }
    for (int d = 0; d < kAudioDim; ++d) audio[d] += kAudioNoise * rng.normal();
  }
  return sample;
}

DatasetManifest generate_dataset(const DatasetConfig& cfg_in, const std::string& root) {
  DatasetConfig cfg = cfg_in;
  if (cfg.H % 32 != 0 || cfg.W % 32 != 0) {
    throw std::invalid_argument("dataset H and W must be multiples of 32, got " +
                                std::to_string(cfg.H) + "x" + std::to_string(cfg.W));
  }
  if (cfg.n_train < 1 || cfg.n_val < 1 || cfg.n_test < 1) {
    throw std::invalid_argument("n_train/n_val/n_test must each be >= 1");
  }
  if (cfg.T < 1) throw std::invalid_argument("T must be >= 1");
  if (cfg.roster.empty()) cfg.roster = default_roster(cfg.seed);

  DatasetManifest manifest;
  manifest.root = root;
  manifest.config = cfg;
  manifest.roster = cfg.roster;

  fs::create_directories(root);
  const std::vector<std::pair<std::string, int>> splits = {
      {"train", cfg.n_train}, {"val", cfg.n_val}, {"test", cfg.n_test}};
  json split_ids = json::object();
  for (const auto& [split, count] : splits) {
    fs::create_directories(fs::path(root) / split);
    std::vector<std::string> ids;
    for (int i = 0; i < count; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "s%06d", i);
      VideoSample sample = draw_sample(cfg, cfg.roster, split, static_cast<std::uint64_t>(i));
      sample.sample_id = buf;
      const std::string dir = (fs::path(root) / split / buf).string();
      save_sample(sample, dir);
      ids.push_back(buf);
      manifest.samples.push_back({split, buf, dir});
    }
    split_ids[split] = ids;
  }

  json j;
  j["version"] = 1;
  j["seed"] = cfg.seed;
  j["H"] = cfg.H;
  j["W"] = cfg.W;
  j["T"] = cfg.T;
  j["n_train"] = cfg.n_train;
  j["n_val"] = cfg.n_val;
  j["n_test"] = cfg.n_test;
  json classes = json::array();
  for (const ClassSpec& c : cfg.roster) classes.push_back(class_to_json(c));
  j["classes"] = classes;
  j["splits"] = split_ids;
  write_text_file((fs::path(root) / "manifest.json").string(), j.dump(2) + "\n");
  return manifest;
}

DatasetManifest load_manifest(const std::string& root) {
  const json j = read_json_file((fs::path(root) / "manifest.json").string());
  DatasetManifest m;
  m.root = root;
  m.config.seed = j.at("seed").get<std::uint64_t>();
  m.config.H = j.at("H").get<int>();
  m.config.W = j.at("W").get<int>();
  m.config.T = j.at("T").get<int>();
  m.config.n_train = j.at("n_train").get<int>();
  m.config.n_val = j.at("n_val").get<int>();
  m.config.n_test = j.at("n_test").get<int>();
  for (const json& cj : j.at("classes")) m.roster.push_back(class_from_json(cj));
  m.config.roster = m.roster;
  for (const auto& [split, ids] : j.at("splits").items()) {
    for (const json& id : ids) {
      const std::string sid = id.get<std::string>();
      m.samples.push_back({split, sid, (fs::path(root) / split / sid).string()});
    }
  }
  return m;
}

std::vector<SampleRef> DatasetManifest::split_samples(const std::string& split) const {
  std::vector<SampleRef> out;
  for (const SampleRef& s : samples)
    if (s.split == split) out.push_back(s);
  return out;
}

const ClassSpec& DatasetManifest::class_by_id(int class_id) const {
  for (const ClassSpec& c : roster)
    if (c.class_id == class_id) return c;
  throw std::out_of_range("no class with id " + std::to_string(class_id));
}

const ClassSpec& DatasetManifest::class_by_name(const std::string& name) const {
  for (const ClassSpec& c : roster)
    if (c.name == name) return c;
  throw std::out_of_range("no class named " + name);
}

void save_sample(const VideoSample& sample, const std::string& dir) {
  fs::create_directories(dir);
  const int t_len = sample.frames.dim(0);
  const int h = sample.frames.dim(2), w = sample.frames.dim(3);

  for (int t = 0; t < t_len; ++t) {
    ImageU8 img;
    img.width = w;
    img.height = h;
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(h) * w * 3);
    const double* f = sample.frames.data() + static_cast<std::size_t>(t) * 3 * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          img.pixels[(y * w + x) * 3 + c] = static_cast<std::uint8_t>(
              std::lround(f[c * h * w + y * w + x] * 255.0));
    write_ppm((fs::path(dir) / ("frames_" + std::to_string(t) + ".ppm")).string(), img);
  }

  for (std::size_t i = 0; i < sample.objects.size(); ++i) {
    const ObjectTrack& obj = sample.objects[i];
    for (int t = 0; t < t_len; ++t) {
      ImageU8 img;
      img.width = w;
      img.height = h;
      img.channels = 1;
      img.pixels.resize(static_cast<std::size_t>(h) * w);
      const double* m = obj.masks.data() + static_cast<std::size_t>(t) * h * w;
      for (int p = 0; p < h * w; ++p)
        img.pixels[p] = m[p] != 0.0 ? 255 : 0;
      write_pgm((fs::path(dir) / ("mask_obj" + std::to_string(i) + "_t" +
                                  std::to_string(t) + ".pgm")).string(),
                img);
    }
  }

  {
    std::ofstream os(fs::path(dir) / "audio.f64", std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write audio.f64 in " + dir);
    os.write(reinterpret_cast<const char*>(sample.audio_feats.data()),
             static_cast<std::streamsize>(sample.audio_feats.numel() * sizeof(double)));
  }

  json j;
  j["sample_id"] = sample.sample_id;
  j["T"] = t_len;
  j["H"] = h;
  j["W"] = w;
  json objs = json::array();
  for (const ObjectTrack& obj : sample.objects) {
    json oj;
    oj["class_id"] = obj.class_id;
    std::vector<int> flags;
    for (bool b : obj.sounding) flags.push_back(b ? 1 : 0);
    oj["sounding"] = flags;
    objs.push_back(oj);
  }
  j["objects"] = objs;
  write_text_file((fs::path(dir) / "meta.json").string(), j.dump(2) + "\n");
}

VideoSample load_sample(const std::string& dir) {
  const json j = read_json_file((fs::path(dir) / "meta.json").string());
  VideoSample sample;
  sample.sample_id = j.at("sample_id").get<std::string>();
  const int t_len = j.at("T").get<int>();
  const int h = j.at("H").get<int>();
  const int w = j.at("W").get<int>();

  sample.frames = num::Tensor::zeros({t_len, 3, h, w});
  for (int t = 0; t < t_len; ++t) {
    const std::string path = (fs::path(dir) / ("frames_" + std::to_string(t) + ".ppm")).string();
    if (!fs::exists(path)) throw std::runtime_error("missing frame file: " + path);
    ImageU8 img = read_pnm(path);
    if (img.channels != 3 || img.width != w || img.height != h) {
      throw std::runtime_error("frame shape mismatch in " + path + ": got " +
                               std::to_string(img.width) + "x" + std::to_string(img.height));
    }
    double* f = sample.frames.data() + static_cast<std::size_t>(t) * 3 * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          f[c * h * w + y * w + x] = img.pixels[(y * w + x) * 3 + c] / 255.0;
  }

  int obj_index = 0;
  for (const json& oj : j.at("objects")) {
    ObjectTrack obj;
    obj.class_id = oj.at("class_id").get<int>();
    for (int flag : oj.at("sounding").get<std::vector<int>>())
      obj.sounding.push_back(flag != 0);
    if (static_cast<int>(obj.sounding.size()) != t_len)
      throw std::runtime_error("sounding flag count mismatch in " + dir);
    obj.masks = num::Tensor::zeros({t_len, h, w});
    for (int t = 0; t < t_len; ++t) {
      const std::string path =
          (fs::path(dir) / ("mask_obj" + std::to_string(obj_index) + "_t" +
                            std::to_string(t) + ".pgm")).string();
      if (!fs::exists(path)) throw std::runtime_error("missing mask file: " + path);
      ImageU8 img = read_pnm(path);
      if (img.channels != 1 || img.width != w || img.height != h) {
        throw std::runtime_error("mask shape mismatch in " + path + ": got " +
                                 std::to_string(img.width) + "x" + std::to_string(img.height) +
                                 ", expected " + std::to_string(w) + "x" + std::to_string(h));
      }
      double* m = obj.masks.data() + static_cast<std::size_t>(t) * h * w;
      for (int p = 0; p < h * w; ++p) {
        if (img.pixels[p] != 0 && img.pixels[p] != 255)
          throw std::runtime_error("non-binary mask value in " + path);
        m[p] = img.pixels[p] == 255 ? 1.0 : 0.0;
      }
    }
    sample.objects.push_back(std::move(obj));
    ++obj_index;
  }

  {
    const std::string path = (fs::path(dir) / "audio.f64").string();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("missing audio file: " + path);
    sample.audio_feats = num::Tensor::zeros({t_len, kAudioDim});
    is.read(reinterpret_cast<char*>(sample.audio_feats.data()),
            static_cast<std::streamsize>(sample.audio_feats.numel() * sizeof(double)));
    if (is.gcount() !=
        static_cast<std::streamsize>(sample.audio_feats.numel() * sizeof(double)))
      throw std::runtime_error("audio file truncated: " + path);
  }
  return sample;
}

num::Tensor semantic_gt(const VideoSample& sample, int t) {
  const int t_len = sample.frames.dim(0);
  if (t < 0 || t >= t_len)
    throw std::out_of_range("semantic_gt: frame " + std::to_string(t) + " out of range");
  const int h = sample.frames.dim(2), w = sample.frames.dim(3);
  num::Tensor out = num::Tensor::zeros({h, w});
  for (const ObjectTrack& obj : sample.objects) {
    if (!obj.sounding[static_cast<std::size_t>(t)]) continue;
    const double* m = obj.masks.data() + static_cast<std::size_t>(t) * h * w;
    for (int p = 0; p < h * w; ++p)
      if (m[p] != 0.0) out.data()[p] = static_cast<double>(obj.class_id);
  }
  return out;
}

CanonicalView render_canonical(const ClassSpec& spec, int size, int variant) {
  num::Rng rng = num::derive_rng(0xCA50FFULL + static_cast<std::uint64_t>(spec.class_id),
                                 static_cast<std::uint64_t>(variant));
  CanonicalView view;
  view.frame = num::Tensor::zeros({3, size, size});
  view.mask = num::Tensor::zeros({size, size});
  const double s = 0.34 * size * rng.uniform(0.85, 1.15);
  const double cx = size / 2.0 + rng.uniform(-0.04, 0.04) * size;
  const double cy = size / 2.0 + rng.uniform(-0.04, 0.04) * size;
  const Rgb color = kStyles[spec.class_id - 1].color;
  const std::uint64_t tex = static_cast<std::uint64_t>(spec.texture_seed) * 0x9e3779b9ULL +
                            static_cast<std::uint64_t>(variant) * 131ULL;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!inside_shape(spec.shape_kind, x - cx, y - cy, s)) continue;
      view.mask.data()[y * size + x] = 1.0;
      const double m = 0.86 + 0.14 * hash_noise(x, y, tex);
      view.frame.data()[0 * size * size + y * size + x] = quantize8(color.r * m);
      view.frame.data()[1 * size * size + y * size + x] = quantize8(color.g * m);
      view.frame.data()[2 * size * size + y * size + x] = quantize8(color.b * m);
    }
  }
  return view;
}

}  // namespace ovavss::data
