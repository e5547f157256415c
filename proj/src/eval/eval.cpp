#include "twofold/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ostream>
#include <thread>

#include "twofold/errors.hpp"

namespace twofold {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.left(), b.left()));
  const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top()));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double center_error(const BoundingBox& a, const BoundingBox& b) {
  return std::hypot(a.cx - b.cx, a.cy - b.cy);
}

std::vector<double> success_thresholds() {
  std::vector<double> t(21);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) / 20.0;
  return t;
}

std::vector<double> precision_thresholds() {
  std::vector<double> t(51);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  return t;
}

namespace {

void require_nonempty(std::span<const double> v, const char* what) {
  if (v.empty()) throw ContractViolation(std::string(what) + ": no frames to score");
}

}  // namespace

std::vector<double> success_curve(std::span<const double> ious) {
  require_nonempty(ious, "success_curve");
  std::vector<double> curve;
  for (double t : success_thresholds()) {
    const auto n = std::count_if(ious.begin(), ious.end(), [t](double v) { return v > t; });
    curve.push_back(static_cast<double>(n) / static_cast<double>(ious.size()));
  }
  return curve;
}

std::vector<double> precision_curve(std::span<const double> errors) {
  require_nonempty(errors, "precision_curve");
  std::vector<double> curve;
  for (double t : precision_thresholds()) {
    const auto n = std::count_if(errors.begin(), errors.end(), [t](double v) { return v <= t; });
    curve.push_back(static_cast<double>(n) / static_cast<double>(errors.size()));
  }
  return curve;
}

double success_auc(std::span<const double> ious) {
  const std::vector<double> curve = success_curve(ious);
  double sum = 0.0;
  for (double v : curve) sum += v;
  return sum / static_cast<double>(curve.size());
}

double precision_at(std::span<const double> errors, double threshold) {
  require_nonempty(errors, "precision_at");
  const auto n = std::count_if(errors.begin(), errors.end(), [threshold](double v) { return v <= threshold; });
  return static_cast<double>(n) / static_cast<double>(errors.size());
}

EvalReport aggregate(std::vector<SequenceResult> results) {
  EvalReport report;
  std::vector<double> ious, errors;
  double seconds = 0.0;
  std::size_t tracked = 0;
  for (const SequenceResult& r : results) {
    if (!r.failure.empty()) continue;
    ious.insert(ious.end(), r.ious.begin(), r.ious.end());
    errors.insert(errors.end(), r.errors.begin(), r.errors.end());
    seconds += r.seconds;
    tracked += r.boxes.size();
  }
  report.sequences = std::move(results);
  report.frames = ious.size();
  if (!ious.empty()) {
    report.success = success_curve(ious);
    report.precision = precision_curve(errors);
    report.auc = success_auc(ious);
    report.precision20 = precision_at(errors, 20.0);
  }
  report.fps = seconds > 0.0 ? static_cast<double>(tracked) / seconds : 0.0;
  return report;
}

double per_video_auc(const EvalReport& report) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const SequenceResult& r : report.sequences) {
    if (!r.failure.empty() || r.ious.empty()) continue;
    sum += success_auc(r.ious);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json seqs = nlohmann::json::array();
  for (const SequenceResult& r : sequences) {
    nlohmann::json j = {{"name", r.name}, {"frames", r.boxes.size()}};
    if (r.failure.empty()) {
      j["auc"] = r.ious.empty() ? 0.0 : success_auc(r.ious);
      j["precision20"] = r.errors.empty() ? 0.0 : precision_at(r.errors);
    } else {
      j["skipped"] = r.failure;
    }
    seqs.push_back(std::move(j));
  }
  return {{"auc", auc},
          {"precision20", precision20},
          {"frames", frames},
          {"fps", fps},
          {"success_thresholds", success_thresholds()},
          {"success", success},
          {"precision_thresholds", precision_thresholds()},
          {"precision", precision},
          {"per_video_auc", per_video_auc(*this)},
          {"sequences", seqs}};
}

void EvalReport::write_csv(std::ostream& out) const {
  const auto old = out.precision(9);
  out << "kind,threshold,value\n";
  const auto st = success_thresholds();
  for (std::size_t i = 0; i < success.size(); ++i) out << "success," << st[i] << ',' << success[i] << '\n';
  const auto pt = precision_thresholds();
  for (std::size_t i = 0; i < precision.size(); ++i) out << "precision," << pt[i] << ',' << precision[i] << '\n';
  out.precision(old);
}

TrackerFn model_tracker(const TwofoldModel& model, const TrackConfig& config) {
  config.validate();
  return [&model, config](const Sequence& seq) { return track_sequence(seq, model, config); };
}

TrackerFn ground_truth_tracker() {
  return [](const Sequence& seq) {
    std::vector<BoundingBox> out;
    BoundingBox last = seq.first_box();
    for (const auto& b : seq.boxes) {
      if (b) last = *b;
      out.push_back(last);
    }
    return out;
  };
}

TrackerFn static_tracker() {
  return [](const Sequence& seq) { return std::vector<BoundingBox>(seq.size(), seq.first_box()); };
}

namespace {

SequenceResult score(const Sequence& seq, const TrackerFn& tracker) {
  SequenceResult r;
  r.name = seq.name;
  const auto start = std::chrono::steady_clock::now();
  r.boxes = tracker(seq);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (r.boxes.size() != seq.size()) {
    throw ContractViolation("tracker returned " + std::to_string(r.boxes.size()) + " boxes for " +
                            std::to_string(seq.size()) + " frames of '" + seq.name + "'");
  }
  for (std::size_t t = 0; t < seq.size() && t < seq.boxes.size(); ++t) {
    if (!seq.boxes[t]) continue;
    r.ious.push_back(iou(r.boxes[t], *seq.boxes[t]));
    r.errors.push_back(center_error(r.boxes[t], *seq.boxes[t]));
  }
  return r;
}

template <typename Job>
std::vector<SequenceResult> run_parallel(std::size_t count, std::size_t jobs, const Job& job) {
  std::vector<SequenceResult> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        results[i] = job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace

EvalReport run_ope(std::span<const Sequence> dataset, const TrackerFn& tracker, std::size_t jobs) {
  return aggregate(run_parallel(dataset.size(), jobs, [&](std::size_t i) { return score(dataset[i], tracker); }));
}

EvalReport run_ope(std::span<const std::filesystem::path> dirs, const TrackerFn& tracker,
                   std::size_t jobs) {
  return aggregate(run_parallel(dirs.size(), jobs, [&](std::size_t i) {
    Sequence seq;
    try {
      seq = load_sequence(dirs[i]);
    } catch (const std::exception& e) {
      SequenceResult skipped;
      skipped.name = dirs[i].filename().string();
      skipped.failure = e.what();
      return skipped;
    }
    return score(seq, tracker);
  }));
}

std::vector<double> lambda_grid() { return {0.1, 0.3, 0.5, 0.7, 0.9}; }

LambdaSearch grid_search_lambda(const TwofoldModel& model, std::span<const Sequence> validation,
                                const TrackConfig& base, std::size_t jobs) {
  if (!model.has_appearance() || !model.has_semantic()) {
    throw ContractViolation("lambda search needs a model with both branches");
  }
  LambdaSearch out;
  double best_auc = -1.0;
  for (double lambda : lambda_grid()) {
    TrackConfig cfg = base;
    cfg.lambda = lambda;
    const EvalReport r = run_ope(validation, model_tracker(model, cfg), jobs);
    out.table.push_back({lambda, r.auc, r.precision20});
    if (r.auc > best_auc) {
      best_auc = r.auc;
      out.best_lambda = lambda;
    }
  }
  return out;
}

std::vector<std::string> ablation_variants() {
  return {"App. only", "Sem. only", "App.+Sem.", "App.+Sem.+ML", "App.+Sem.+Att.", "App.+Sem.+ML+Att."};
}

std::vector<AblationRow> ablation_table(std::span<const TwofoldModel* const> models,
                                        std::span<const Sequence> dataset, const TrackConfig& config,
                                        std::size_t jobs) {
  const auto names = ablation_variants();
  if (models.size() != names.size()) {
    throw ContractViolation("ablation_table expects " + std::to_string(names.size()) + " models");
  }
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < names.size(); ++i) {
    AblationRow row{names[i]};
    if (models[i]) {
      const EvalReport r = run_ope(dataset, model_tracker(*models[i], config), jobs);
      row.present = true;
      row.auc = r.auc;
      row.precision20 = r.precision20;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  const auto old = out.precision(6);
  out << "variant,auc,precision20\n";
  for (const AblationRow& r : rows) {
    out << r.variant << ',';
    if (r.present) {
      out << r.auc << ',' << r.precision20 << '\n';
    } else {
      out << "absent,absent\n";
    }
  }
  out.precision(old);
}

nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const AblationRow& r : rows) {
    if (r.present) {
      out.push_back({{"variant", r.variant}, {"auc", r.auc}, {"precision20", r.precision20}});
    } else {
      out.push_back({{"variant", r.variant}, {"absent", true}});
    }
  }
  return out;
}

}  // namespace twofold
