#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "twofold/box.hpp"
#include "twofold/model.hpp"
#include "twofold/sequence.hpp"
#include "twofold/tracker.hpp"

namespace twofold {

double iou(const BoundingBox& a, const BoundingBox& b);
double center_error(const BoundingBox& a, const BoundingBox& b);

// IoU thresholds 0, 0.05, ..., 1 (21 values).
std::vector<double> success_thresholds();
// Center error thresholds 0, 1, ..., 50 px.
std::vector<double> precision_thresholds();

// Fraction of IoUs strictly above each threshold.
std::vector<double> success_curve(std::span<const double> ious);
// Fraction of errors at or below each threshold.
std::vector<double> precision_curve(std::span<const double> errors);
double success_auc(std::span<const double> ious);
double precision_at(std::span<const double> errors, double threshold = 20.0);

struct SequenceResult {
  std::string name;
  std::vector<BoundingBox> boxes;  // tracker output, one per frame
  std::vector<double> ious;        // annotated frames only
  std::vector<double> errors;
  double seconds = 0.0;
  std::string failure;  // non-empty when the sequence was skipped
};

struct EvalReport {
  std::vector<SequenceResult> sequences;
  std::vector<double> success;
  std::vector<double> precision;
  double auc = 0.0;
  double precision20 = 0.0;
  double fps = 0.0;  // reported only
  std::size_t frames = 0;

  nlohmann::json to_json() const;
  // `kind,threshold,value` rows for both curves.
  void write_csv(std::ostream& out) const;
};

// Aggregates every annotated frame of every sequence with equal weight.
EvalReport aggregate(std::vector<SequenceResult> results);
// Mean of per-sequence AUCs, for comparison with the per-frame figure.
double per_video_auc(const EvalReport& report);

// Produces one box per frame, the first being the initial annotation.
using TrackerFn = std::function<std::vector<BoundingBox>(const Sequence&)>;

TrackerFn model_tracker(const TwofoldModel& model, const TrackConfig& config);
TrackerFn ground_truth_tracker();
TrackerFn static_tracker();

// One-pass evaluation. Sequences are independent and may run on `jobs`
// threads; the report does not depend on the thread count.
EvalReport run_ope(std::span<const Sequence> dataset, const TrackerFn& tracker, std::size_t jobs = 1);
// Loads each directory first; load failures become skipped entries.
EvalReport run_ope(std::span<const std::filesystem::path> dirs, const TrackerFn& tracker,
                   std::size_t jobs = 1);

struct LambdaRow {
  double lambda;
  double auc;
  double precision20;
};
struct LambdaSearch {
  double best_lambda = 0.0;
  std::vector<LambdaRow> table;
};
// 0.1, 0.3, 0.5, 0.7, 0.9.
std::vector<double> lambda_grid();
// Best AUC wins; ties keep the smaller lambda.
LambdaSearch grid_search_lambda(const TwofoldModel& model, std::span<const Sequence> validation,
                                const TrackConfig& base, std::size_t jobs = 1);

// The six rows, in order: App. only, Sem. only, App.+Sem., +ML, +Att., +ML+Att.
std::vector<std::string> ablation_variants();
struct AblationRow {
  std::string variant;
  bool present = false;
  double auc = 0.0;
  double precision20 = 0.0;
};
// `models` is indexed like ablation_variants(); nullptr marks a missing row.
std::vector<AblationRow> ablation_table(std::span<const TwofoldModel* const> models,
                                        std::span<const Sequence> dataset, const TrackConfig& config,
                                        std::size_t jobs = 1);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace twofold
