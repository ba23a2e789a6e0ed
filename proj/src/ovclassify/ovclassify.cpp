#include "ovavss/ovclassify/ovclassify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

using json = nlohmann::json;

namespace ovavss::model {

using namespace ovavss::num;

std::string crop_mode_name(CropMode m) {
  switch (m) {
    case CropMode::none: return "none";
    case CropMode::crop_resize: return "crop_resize";
    case CropMode::square_crop: return "square_crop";
  }
  throw std::invalid_argument("bad crop mode");
}

CropMode crop_mode_from_name(const std::string& name) {
  if (name == "none") return CropMode::none;
  if (name == "crop_resize") return CropMode::crop_resize;
  if (name == "square_crop") return CropMode::square_crop;
  throw std::invalid_argument("unknown crop mode: " + name);
}

Tensor resize_bilinear(const Tensor& image, int out_size) {
  if (image.rank() != 3) throw std::invalid_argument("resize_bilinear: expected [C,H,W]");
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out = Tensor::zeros({c, out_size, out_size});
  const double sy = static_cast<double>(h) / out_size;
  const double sx = static_cast<double>(w) / out_size;
  for (int ci = 0; ci < c; ++ci) {
    const double* src = image.data() + static_cast<std::size_t>(ci) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(ci) * out_size * out_size;
    for (int y = 0; y < out_size; ++y) {
      double fy = (y + 0.5) * sy - 0.5;
      fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int x = 0; x < out_size; ++x) {
        double fx = (x + 0.5) * sx - 0.5;
        fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        dst[y * out_size + x] =
            (1 - wy) * ((1 - wx) * src[y0 * w + x0] + wx * src[y0 * w + x1]) +
            wy * ((1 - wx) * src[y1 * w + x0] + wx * src[y1 * w + x1]);
      }
    }
  }
  return out;
}

namespace {

struct Bbox {
  int x0, y0, x1, y1;  // half-open
  bool empty;
};

Bbox mask_bbox(const Tensor& mask) {
  const int h = mask.dim(0), w = mask.dim(1);
  Bbox b{w, h, 0, 0, true};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask.data()[y * w + x] != 0.0) {
        b.empty = false;
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x + 1);
        b.y1 = std::max(b.y1, y + 1);
      }
  return b;
}

Tensor masked_frame(const Tensor& frame, const Tensor& mask) {
  const int h = frame.dim(1), w = frame.dim(2);
  Tensor out = Tensor::zeros(frame.shape());
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < h * w; ++p)
      out.data()[c * h * w + p] = frame.data()[c * h * w + p] * mask.data()[p];
  return out;
}

// Extracts window [x0,x0+side) x [y0,y0+side), zero outside the frame.
Tensor extract_window(const Tensor& image, int x0, int y0, int side) {
  const int h = image.dim(1), w = image.dim(2);
  Tensor out = Tensor::zeros({3, side, side});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < side; ++y) {
      const int sy = y0 + y;
      if (sy < 0 || sy >= h) continue;
      for (int x = 0; x < side; ++x) {
        const int sx = x0 + x;
        if (sx < 0 || sx >= w) continue;
        out.data()[(c * side + y) * side + x] = image.data()[(c * h + sy) * w + sx];
      }
    }
  return out;
}

}  // namespace

std::optional<Crop> square_crop(const Tensor& frame, const Tensor& mask, int out_size) {
  if (frame.rank() != 3 || mask.rank() != 2 || frame.dim(1) != mask.dim(0) ||
      frame.dim(2) != mask.dim(1)) {
    throw std::invalid_argument("square_crop: frame [3,H,W] and mask [H,W] must agree");
  }
  const Bbox bb = mask_bbox(mask);
  if (bb.empty) return std::nullopt;
  Crop crop;
  crop.spec.side = std::max(bb.x1 - bb.x0, bb.y1 - bb.y0);
  crop.spec.cx = (bb.x0 + bb.x1) / 2;
  crop.spec.cy = (bb.y0 + bb.y1) / 2;
  const int x0 = crop.spec.cx - crop.spec.side / 2;
  const int y0 = crop.spec.cy - crop.spec.side / 2;
  const int h = frame.dim(1), w = frame.dim(2);
  crop.spec.pad_left = std::max(0, -x0);
  crop.spec.pad_top = std::max(0, -y0);
  crop.spec.pad_right = std::max(0, x0 + crop.spec.side - w);
  crop.spec.pad_bottom = std::max(0, y0 + crop.spec.side - h);
  Tensor window = extract_window(masked_frame(frame, mask), x0, y0, crop.spec.side);
  crop.image = resize_bilinear(window, out_size);
  return crop;
}

std::optional<Crop> crop_for_mode(CropMode mode, const Tensor& frame,
                                  const Tensor& mask, int out_size) {
  const Bbox bb = mask_bbox(mask);
  if (bb.empty) return std::nullopt;
  switch (mode) {
    case CropMode::square_crop:
      return square_crop(frame, mask, out_size);
    case CropMode::crop_resize: {
      Crop crop;
      crop.spec.cx = (bb.x0 + bb.x1) / 2;
      crop.spec.cy = (bb.y0 + bb.y1) / 2;
      crop.spec.side = std::max(bb.x1 - bb.x0, bb.y1 - bb.y0);
      Tensor masked = masked_frame(frame, mask);
      const int bw = bb.x1 - bb.x0, bh = bb.y1 - bb.y0;
      Tensor window = Tensor::zeros({3, bh, bw});
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < bh; ++y)
          for (int x = 0; x < bw; ++x)
            window.data()[(c * bh + y) * bw + x] =
                masked.data()[(c * frame.dim(1) + bb.y0 + y) * frame.dim(2) + bb.x0 + x];
      crop.image = resize_bilinear(window, out_size);
      return crop;
    }
    case CropMode::none: {
      Crop crop;
      crop.spec.cx = frame.dim(2) / 2;
      crop.spec.cy = frame.dim(1) / 2;
      crop.spec.side = std::max(frame.dim(1), frame.dim(2));
      crop.image = resize_bilinear(masked_frame(frame, mask), out_size);
      return crop;
    }
  }
  throw std::invalid_argument("bad crop mode");
}

FrozenEncoder make_frozen_encoder(std::uint64_t seed) {
  FrozenEncoder enc;
  Rng rng(seed);
  enc.encoder = make_visual_encoder(enc.store, "frozen", rng);
  enc.proj = make_linear(enc.store, "frozen.proj", kPyramidChannels[3], kEmbedDim, rng);
  for (auto& [name, t] : enc.store.all()) t.set_requires_grad(false);
  return enc;
}

std::vector<double> embed_image(const FrozenEncoder& enc, const Tensor& image) {
  if (image.rank() != 3) throw std::invalid_argument("embed_image: expected [3,S,S]");
  VisualPyramid pyr = visual_encode(image, enc.encoder);
  const Tensor& l4 = pyr.levels[3];
  Tensor pooled = spatial_mean(reshape(l4, {1, l4.dim(0), l4.dim(1), l4.dim(2)}));
  Tensor emb = linear(pooled, enc.proj);
  std::vector<double> v(emb.data(), emb.data() + emb.numel());
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm < 1e-12) norm = 1.0;
  for (double& x : v) x /= norm;
  return v;
}

const std::vector<double>& EmbeddingTable::at(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw std::out_of_range("no embedding for class " + name);
  return it->second;
}

std::vector<std::string> EmbeddingTable::names() const {
  std::vector<std::string> out;
  for (const auto& [name, vec] : entries) out.push_back(name);
  return out;
}

namespace {

void normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm < 1e-12) throw std::runtime_error("cannot normalize zero embedding");
  for (double& x : v) x /= norm;
}

}  // namespace

EmbeddingTable build_class_table(const std::vector<data::ClassSpec>& classes,
                                 const FrozenEncoder& enc, int views, int crop_size,
                                 double temperature) {
  if (views < 1) throw std::invalid_argument("build_class_table: views must be >= 1");
  EmbeddingTable table;
  table.dim = kEmbedDim;
  table.temperature = temperature;
  for (const data::ClassSpec& spec : classes) {
    if (table.entries.count(spec.name))
      throw std::invalid_argument("duplicate class name: " + spec.name);
    std::vector<double> mean(kEmbedDim, 0.0);
    for (int v = 0; v < views; ++v) {
      data::CanonicalView view = data::render_canonical(spec, crop_size, v);
      auto crop = square_crop(view.frame, view.mask, crop_size);
      if (!crop) throw std::runtime_error("canonical render produced empty mask for " + spec.name);
      const std::vector<double> emb = embed_image(enc, crop->image);
      for (int d = 0; d < kEmbedDim; ++d) mean[static_cast<std::size_t>(d)] += emb[static_cast<std::size_t>(d)];
    }
    for (double& x : mean) x /= views;
    normalize(mean);
    table.entries.emplace(spec.name, std::move(mean));
  }
  return table;
}

EmbeddingTable load_class_table(const std::string& path,
                                const std::vector<std::string>& required_names) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open embedding file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed embedding file " + path + ": " + e.what());
  }
  EmbeddingTable table;
  table.dim = j.at("dim").get<int>();
  table.temperature = j.at("temperature").get<double>();
  for (const auto& [name, vec] : j.at("classes").items()) {
    std::vector<double> v = vec.get<std::vector<double>>();
    if (static_cast<int>(v.size()) != table.dim)
      throw std::runtime_error("embedding for " + name + " has wrong dimension");
    normalize(v);
    table.entries.emplace(name, std::move(v));
  }
  std::string missing;
  for (const std::string& name : required_names) {
    if (!table.entries.count(name)) missing += missing.empty() ? name : ", " + name;
  }
  if (!missing.empty()) {
    throw std::runtime_error("embedding file " + path + " missing classes: " + missing);
  }
  return table;
}

void save_class_table(const EmbeddingTable& table, const std::string& path) {
  json j;
  j["dim"] = table.dim;
  j["temperature"] = table.temperature;
  json classes = json::object();
  for (const auto& [name, vec] : table.entries) classes[name] = vec;
  j["classes"] = classes;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write embedding file: " + path);
  os << j.dump(2) << "\n";
}

namespace {

std::vector<double> score_distribution(const std::vector<double>& emb,
                                       const EmbeddingTable& table) {
  std::vector<double> logits;
  logits.reserve(table.entries.size());
  for (const auto& [name, vec] : table.entries) {
    double cos = 0.0;
    for (std::size_t d = 0; d < vec.size(); ++d) cos += emb[d] * vec[d];
    logits.push_back(table.temperature * cos);
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    z += l;
  }
  for (double& l : logits) l /= z;
  return logits;
}

}  // namespace

std::vector<Classification> classify(const std::vector<Tensor>& crops,
                                     const EmbeddingTable& table,
                                     const FrozenEncoder& enc) {
  if (table.entries.empty()) throw std::invalid_argument("classify: empty embedding table");
  const std::vector<std::string> names = table.names();
  std::vector<Classification> out;
  for (const Tensor& crop : crops) {
    const std::vector<double> emb = embed_image(enc, crop);
    Classification c;
    c.scores = score_distribution(emb, table);
    c.class_name = names[static_cast<std::size_t>(
        std::max_element(c.scores.begin(), c.scores.end()) - c.scores.begin())];
    out.push_back(std::move(c));
  }
  return out;
}

Classification classify_object(const std::vector<Tensor>& frame_crops,
                               const EmbeddingTable& table, const FrozenEncoder& enc) {
  if (frame_crops.empty()) throw std::invalid_argument("classify_object: no crops");
  const std::vector<Classification> per_frame = classify(frame_crops, table, enc);
  Classification result;
  result.scores.assign(table.entries.size(), 0.0);
  for (const Classification& c : per_frame)
    for (std::size_t i = 0; i < c.scores.size(); ++i) result.scores[i] += c.scores[i];
  for (double& s : result.scores) s /= static_cast<double>(per_frame.size());
  const std::vector<std::string> names = table.names();
  result.class_name = names[static_cast<std::size_t>(
      std::max_element(result.scores.begin(), result.scores.end()) - result.scores.begin())];
  return result;
}

}  // namespace ovavss::model
