#pragma once

#include <map>
#include <string>
#include <vector>

#include "ovavss/audiomaskdec/audiomaskdec.hpp"
#include "ovavss/synthdata/synthdata.hpp"

namespace ovavss::evalkit {

// Dataset-wide per-class intersection/union accumulators. Background (0)
// is never a class. Partial reports merge by summing.
struct Report {
  struct Accum {
    double intersection = 0;
    double union_ = 0;
  };
  std::map<int, Accum> counts;

  void merge(const Report& other);
};

// pred/gt: [H,W] class-id maps.
void accumulate(const num::Tensor& pred, const num::Tensor& gt, Report& report);

struct EvalReport {
  std::map<int, double> per_class_iou;  // classes with union > 0 only
  double base = 0, novel = 0, harmonic = 0, miou = 0;
};

double harmonic_mean(double base, double novel);
EvalReport finalize(const Report& report, const std::map<int, data::Split>& split_of);

// Inference-time map assembly: queries above the sounding threshold compete
// per pixel by upsampled mask sigmoid; winners above the mask threshold
// label the pixel with their class id, everything else is background.
// Returns [T,H,W].
num::Tensor assemble_semantic(const model::LayerOutput& final_layer,
                              const std::vector<int>& query_class_ids, int out_h,
                              int out_w, double sound_threshold = 0.5,
                              double mask_threshold = 0.5);

std::string report_json(const EvalReport& report, const std::string& config_json);

struct AblationRow {
  std::string label;
  double base = 0, novel = 0, harmonic = 0, miou = 0;
};
void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

}  // namespace ovavss::evalkit
