#include "ovavss/evalkit/evalkit.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <stdexcept>

using json = nlohmann::json;

namespace ovavss::evalkit {

using num::Tensor;

void Report::merge(const Report& other) {
  for (const auto& [cls, acc] : other.counts) {
    counts[cls].intersection += acc.intersection;
    counts[cls].union_ += acc.union_;
  }
}

void accumulate(const Tensor& pred, const Tensor& gt, Report& report) {
  if (pred.shape() != gt.shape()) {
    throw std::invalid_argument("accumulate: shape mismatch " + num::shape_str(pred.shape()) +
                                " vs " + num::shape_str(gt.shape()));
  }
  std::set<int> classes;
  for (double v : pred.vec())
    if (v != 0.0) classes.insert(static_cast<int>(v));
  for (double v : gt.vec())
    if (v != 0.0) classes.insert(static_cast<int>(v));
  for (int cls : classes) {
    auto& acc = report.counts[cls];
    const double c = static_cast<double>(cls);
    for (std::size_t i = 0; i < pred.numel(); ++i) {
      const bool p = pred.data()[i] == c;
      const bool g = gt.data()[i] == c;
      if (p && g) acc.intersection += 1;
      if (p || g) acc.union_ += 1;
    }
  }
}

double harmonic_mean(double base, double novel) {
  if (base + novel <= 0.0) return 0.0;
  if (base == novel) return base;  // exact symmetry
  return 2.0 * base * novel / (base + novel);
}

EvalReport finalize(const Report& report, const std::map<int, data::Split>& split_of) {
  EvalReport out;
  double base_sum = 0, novel_sum = 0, all_sum = 0;
  int base_n = 0, novel_n = 0, all_n = 0;
  for (const auto& [cls, acc] : report.counts) {
    if (acc.union_ <= 0.0) continue;  // class absent everywhere: excluded
    const double iou = acc.intersection / acc.union_;
    out.per_class_iou[cls] = iou;
    all_sum += iou;
    ++all_n;
    auto it = split_of.find(cls);
    if (it == split_of.end()) {
      throw std::invalid_argument("finalize: class " + std::to_string(cls) +
                                  " has no base/novel split");
    }
    if (it->second == data::Split::base) {
      base_sum += iou;
      ++base_n;
    } else {
      novel_sum += iou;
      ++novel_n;
    }
  }
  out.base = base_n ? base_sum / base_n : 0.0;
  out.novel = novel_n ? novel_sum / novel_n : 0.0;
  out.miou = all_n ? all_sum / all_n : 0.0;
  out.harmonic = harmonic_mean(out.base, out.novel);
  return out;
}

Tensor assemble_semantic(const model::LayerOutput& final_layer,
                         const std::vector<int>& query_class_ids, int out_h, int out_w,
                         double sound_threshold, double mask_threshold) {
  const int n = final_layer.mask_logits.dim(0);
  const int t = final_layer.mask_logits.dim(1);
  const int h = final_layer.mask_logits.dim(2);
  const int w = final_layer.mask_logits.dim(3);
  if (static_cast<int>(query_class_ids.size()) != n) {
    throw std::invalid_argument("assemble_semantic: class list does not match queries");
  }
  if (out_h % h != 0 || out_w % w != 0 || out_h / h != out_w / w) {
    throw std::invalid_argument("assemble_semantic: output size must be an integer scale");
  }
  const int scale = out_h / h;

  std::vector<int> kept;
  for (int q = 0; q < n; ++q)
    if (final_layer.sounding.data()[q] > sound_threshold) kept.push_back(q);

  Tensor out = Tensor::zeros({t, out_h, out_w});
  if (kept.empty()) return out;

  // upsample kept logits to full resolution
  Tensor flat = num::reshape(final_layer.mask_logits, {n * t, 1, h, w});
  Tensor up = num::bilinear_upsample(flat, scale);  // [n*t,1,H,W]
  for (int ti = 0; ti < t; ++ti) {
    for (int p = 0; p < out_h * out_w; ++p) {
      double best = -1e300;
      int best_q = -1;
      for (int q : kept) {
        const double logit =
            up.data()[(static_cast<std::size_t>(q) * t + ti) * out_h * out_w + p];
        if (logit > best) {
          best = logit;
          best_q = q;
        }
      }
      // label only if the winner is confident (sigmoid > threshold)
      if (best_q >= 0 && best > std::log(mask_threshold / (1.0 - mask_threshold))) {
        out.data()[static_cast<std::size_t>(ti) * out_h * out_w + p] =
            static_cast<double>(query_class_ids[static_cast<std::size_t>(best_q)]);
      }
    }
  }
  return out;
}

std::string report_json(const EvalReport& report, const std::string& config_json) {
  json j;
  json per_class = json::object();
  for (const auto& [cls, iou] : report.per_class_iou)
    per_class[std::to_string(cls)] = iou;
  j["per_class"] = per_class;
  j["base"] = report.base;
  j["novel"] = report.novel;
  j["harmonic"] = report.harmonic;
  j["miou"] = report.miou;
  j["config"] = config_json.empty() ? json::object() : json::parse(config_json);
  return j.dump(2) + "\n";
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "setting,base,novel,harmonic,miou\n";
  char buf[160];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.4f,%.4f\n", r.label.c_str(), r.base,
                  r.novel, r.harmonic, r.miou);
    os << buf;
  }
}

}  // namespace ovavss::evalkit
