// twofold: batch command line for data generation, training, tracking and
// evaluation. Exit codes: 0 success, 2 bad input, 3 numeric failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "json_config.hpp"
#include "twofold/errors.hpp"
#include "twofold/eval.hpp"
#include "twofold/model.hpp"
#include "twofold/synthetic.hpp"
#include "twofold/tracker.hpp"
#include "twofold/trainer.hpp"
#include "twofold/weights.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace twofold::cli {
namespace {

constexpr int kInputError = 2;
constexpr int kNumericError = 3;

// Options shared by every command.
struct Common {
  std::string profile = "desk";
  std::uint64_t seed = 1;
  std::size_t jobs = 1;

  NetworkProfile network() const { return NetworkProfile::by_name(profile); }
};

// Which parts of the model a command uses. Unset multilevel/attention
// default to on for semantic runs and must stay unset otherwise.
struct RunConfig {
  bool appearance = true;
  bool semantic = true;
  std::optional<bool> multilevel;
  std::optional<bool> attention;

  void validate() const {
    if (!appearance && !semantic) throw ContractViolation("at least one branch must be enabled");
    if (!semantic && ((multilevel && *multilevel) || (attention && *attention))) {
      throw ContractViolation("--multilevel and --attention need the semantic branch");
    }
  }
  SemanticVariant variant() const { return {multilevel.value_or(true), attention.value_or(true)}; }
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw LoadError("write failed for '" + path.string() + "'");
}

template <typename Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  write_file(path, ss.str());
}

// All loadable sequences below `root`; failures are reported and skipped.
std::vector<Sequence> load_dataset(const fs::path& root) {
  std::vector<Sequence> out;
  for (const fs::path& dir : list_sequences(root)) {
    try {
      out.push_back(load_sequence(dir));
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << dir.string() << ": " << e.what() << "\n";
    }
  }
  if (out.empty()) throw LoadError("no usable sequences under '" + root.string() + "'");
  return out;
}

// Loads a model directory, then drops branches the run does not want.
TwofoldModel load_for_run(const fs::path& dir, const NetworkProfile& profile, const RunConfig& run) {
  run.validate();
  TwofoldModel m = load_model(dir, profile);
  if (!run.appearance) m.anet.reset();
  if (!run.semantic) {
    m.snet.reset();
    m.head.reset();
  }
  if (!m.has_appearance() && !m.has_semantic()) {
    throw LoadError("model directory '" + dir.string() + "' has no usable branch for this run");
  }
  if (m.has_semantic()) {
    const SemanticVariant v = m.head->variant;
    if ((run.multilevel && *run.multilevel != v.multilevel) ||
        (run.attention && *run.attention != v.attention)) {
      throw ContractViolation("requested semantic variant does not match the stored head in '" +
                              dir.string() + "'");
    }
  }
  return m;
}

void add_branch_flags(CLI::App* cmd, RunConfig& run) {
  cmd->add_flag("--appearance,!--no-appearance", run.appearance, "Use the appearance branch");
  cmd->add_flag("--semantic,!--no-semantic", run.semantic, "Use the semantic branch");
  cmd->add_flag("--multilevel,!--no-multilevel", run.multilevel, "Fuse both S-Net taps");
  cmd->add_flag("--attention,!--no-attention", run.attention, "Channel attention");
}

// ---------------------------------------------------------------------------
// gen-synthetic

struct GenArgs {
  fs::path spec, out;
};

int gen_synthetic(const GenArgs& a) {
  const json j = read_json(a.spec);
  if (!j.is_object()) throw FormatError("synthetic spec must be a JSON object");
  std::vector<SyntheticSpec> specs;
  std::size_t images = 0;
  try {
    if (j.contains("benchmark")) {
      const auto more = benchmark_specs(j.at("benchmark").get<BenchmarkSpec>());
      specs.insert(specs.end(), more.begin(), more.end());
    }
    if (j.contains("sequences")) {
      for (const auto& s : j.at("sequences")) specs.push_back(s.get<SyntheticSpec>());
    }
    if (j.contains("classification")) {
      const auto set = make_classification_set(j.at("classification").get<ClassificationSpec>());
      save_classification_set(set, a.out / "classification");
      images = set.size();
    }
    if (!j.contains("benchmark") && !j.contains("sequences") && !j.contains("classification")) {
      specs.push_back(j.get<SyntheticSpec>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad synthetic spec: ") + e.what());
  }
  for (const SyntheticSpec& s : specs) validate(s);
  std::size_t frames = 0;
  for (const SyntheticSpec& s : specs) {
    generate_synthetic(s, a.out / s.name);
    frames += s.frames;
  }
  std::cout << "wrote " << specs.size() << " sequences (" << frames << " frames)";
  if (images) std::cout << " and " << images << " classification images";
  std::cout << " to " << a.out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// pretrain-snet

struct PretrainArgs {
  fs::path data, out, loss_csv;
  PretrainConfig config;
};

int pretrain(const Common& c, PretrainArgs a) {
  const NetworkProfile p = c.network();
  const auto images = load_classification_set(a.data);
  std::mt19937_64 rng(c.seed);
  SNet net = SNet::create(p, rng);
  std::size_t shown = 0;
  const PretrainResult r = pretrain_snet_classifier(images, net, a.config, [&](const LossRecord& rec) {
    if (rec.epoch == shown) return;
    shown = rec.epoch;
    std::cerr << "epoch " << rec.epoch << " first batch loss " << rec.loss << "\n";
  });
  save_snet(net, p, a.out);
  if (a.loss_csv.empty()) a.loss_csv = fs::path(a.out).replace_extension(".loss.csv");
  write_with(a.loss_csv, [&](std::ostream& o) { r.log.write_csv(o); });
  const json summary = {{"classes", r.classes},
                        {"train_accuracy", r.train_accuracy},
                        {"heldout_accuracy", r.heldout_accuracy},
                        {"config", a.config}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string branch;
  fs::path data, out, snet, init, loss_csv;
  RunConfig run;
  SgdConfig sgd;
  double lambda = 0.3;
};

int train(const Common& c, TrainArgs a) {
  const NetworkProfile p = c.network();
  const bool wants_app = a.branch != "semantic";
  const bool wants_sem = a.branch != "appearance";
  a.run.appearance = wants_app;
  a.run.semantic = wants_sem;
  a.run.validate();
  // Each branch draws its own pair stream, even from the same --seed.
  a.sgd.seed = c.seed + (a.branch == "appearance" ? 0 : a.branch == "semantic" ? 1000003 : 2000006);
  a.sgd.validate();
  if (wants_sem && a.snet.empty()) throw ContractViolation("--snet is required for semantic training");

  TwofoldModel model;
  if (!a.init.empty()) {
    model = load_model(a.init, p);
  } else {
    model.profile = p;
  }
  std::mt19937_64 rng(c.seed);
  if (wants_app && !model.anet) model.anet = ANet::create(p, rng);
  if (wants_sem) {
    model.snet = load_snet(a.snet, p);
    if (!model.head || model.head->variant.multilevel != a.run.variant().multilevel ||
        model.head->variant.attention != a.run.variant().attention) {
      model.head = SemanticHead::create(p, a.run.variant(), rng);
    }
  }

  TrackletSampler data(prepare_tracklets(load_dataset(a.data), p, &std::cerr), p);
  std::cerr << "training " << a.branch << " on " << data.size() << " videos\n";
  const StepHook hook = [&](const LossRecord& r) {
    if (r.step % a.sgd.steps_per_epoch == 0) std::cerr << "epoch " << r.epoch << " last loss " << r.loss << "\n";
  };
  TrainLog log;
  if (a.branch == "appearance") {
    log = train_appearance(data, *model.anet, p, a.sgd, hook);
  } else if (a.branch == "semantic") {
    log = train_semantic(data, *model.snet, *model.head, p, a.sgd, hook);
  } else {
    log = train_joint(data, *model.anet, *model.snet, *model.head, p, a.sgd, a.lambda, hook);
  }

  save_model(model, a.out);
  if (a.loss_csv.empty()) a.loss_csv = a.out / ("loss_" + a.branch + ".csv");
  write_with(a.loss_csv, [&](std::ostream& o) { log.write_csv(o); });
  json record = {{"branch", a.branch}, {"profile", p.name}, {"sgd", a.sgd}};
  if (a.branch == "joint") record["lambda"] = a.lambda;
  write_file(a.out / ("train_" + a.branch + ".json"), record.dump(2) + "\n");
  std::cout << "final epoch loss " << log.epoch_mean.back() << "; model written to " << a.out.string()
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// track

struct TrackArgs {
  fs::path model, sequence, out, responses;
  RunConfig run;
  double lambda = 0.3;
  bool normalize = true;
};

int track(const Common& c, const TrackArgs& a) {
  const TwofoldModel model = load_for_run(a.model, c.network(), a.run);
  const Sequence seq = load_sequence(a.sequence);
  TrackConfig cfg;
  cfg.lambda = a.lambda;
  cfg.normalize = a.normalize;
  std::ofstream dump;
  if (!a.responses.empty()) {
    dump.open(a.responses, std::ios::binary);
    if (!dump) throw LoadError("cannot write '" + a.responses.string() + "'");
  }
  const auto start = std::chrono::steady_clock::now();
  const auto boxes = track_sequence(seq, model, cfg, a.responses.empty() ? nullptr : &dump);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_with(a.out, [&](std::ostream& o) { write_track(o, boxes); });
  std::cerr << boxes.size() << " frames, " << std::fixed << std::setprecision(1)
            << (secs > 0 ? boxes.size() / secs : 0.0) << " fps\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  fs::path model, dataset, out, csv;
  std::string tracker = "model";
  RunConfig run;
  double lambda = 0.3;
  bool normalize = true;
};

int eval(const Common& c, const EvalArgs& a) {
  const auto dirs = list_sequences(a.dataset);
  if (dirs.empty()) throw LoadError("no sequences under '" + a.dataset.string() + "'");
  std::optional<TwofoldModel> model;
  TrackerFn fn;
  TrackConfig cfg;
  cfg.lambda = a.lambda;
  cfg.normalize = a.normalize;
  if (a.tracker == "model") {
    if (a.model.empty()) throw ContractViolation("--model is required with --tracker model");
    model = load_for_run(a.model, c.network(), a.run);
    fn = model_tracker(*model, cfg);
  } else if (a.tracker == "ground-truth") {
    fn = ground_truth_tracker();
  } else {
    fn = static_tracker();
  }
  const EvalReport r = run_ope(dirs, fn, c.jobs);
  for (const auto& s : r.sequences) {
    if (!s.failure.empty()) std::cerr << "warning: skipped " << s.name << ": " << s.failure << "\n";
  }
  if (r.frames == 0) throw LoadError("no annotated frames were evaluated");
  json j = r.to_json();
  j["tracker"] = a.tracker;
  j["lambda"] = a.lambda;
  j["normalize"] = a.normalize;
  if (!a.out.empty()) write_file(a.out, j.dump(2) + "\n");
  if (!a.csv.empty()) write_with(a.csv, [&](std::ostream& o) { r.write_csv(o); });
  std::cout << std::setprecision(6) << "AUC " << r.auc << "  precision@20 " << r.precision20 << "  frames "
            << r.frames << "  fps " << std::setprecision(4) << r.fps << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// lambda-search

struct LambdaArgs {
  fs::path model, dataset, out, json_out;
};

int lambda_search(const Common& c, const LambdaArgs& a) {
  const TwofoldModel model = load_model(a.model, c.network());
  const auto validation = load_dataset(a.dataset);
  const LambdaSearch s = grid_search_lambda(model, validation, TrackConfig{}, c.jobs);
  std::ostringstream csv;
  csv << "lambda,auc,precision20\n" << std::setprecision(6);
  for (const auto& row : s.table) csv << row.lambda << ',' << row.auc << ',' << row.precision20 << '\n';
  if (!a.out.empty()) write_file(a.out, csv.str());
  if (!a.json_out.empty()) {
    json rows = json::array();
    for (const auto& row : s.table) rows.push_back({{"lambda", row.lambda}, {"auc", row.auc}, {"precision20", row.precision20}});
    write_file(a.json_out, json{{"best_lambda", s.best_lambda}, {"table", rows}}.dump(2) + "\n");
  }
  std::cout << csv.str() << "best lambda " << s.best_lambda << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ablation

struct AblationArgs {
  fs::path models, dataset, validation, out, json_out;
  double lambda = 0.3;
};

// Subdirectory for each row of ablation_variants().
const std::vector<std::string>& variant_dirs() {
  static const std::vector<std::string> dirs{"app", "sem", "app_sem", "app_sem_ml", "app_sem_att", "app_sem_ml_att"};
  return dirs;
}

int ablation(const Common& c, const AblationArgs& a) {
  const NetworkProfile p = c.network();
  const auto dataset = load_dataset(a.dataset);
  std::vector<Sequence> validation;
  if (!a.validation.empty()) validation = load_dataset(a.validation);

  const auto names = ablation_variants();
  std::vector<AblationRow> rows;
  json lambdas = json::object();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const fs::path dir = a.models / variant_dirs()[i];
    if (!fs::is_directory(dir)) {
      rows.push_back({names[i]});
      continue;
    }
    const TwofoldModel m = load_model(dir, p);
    TrackConfig cfg;
    cfg.lambda = a.lambda;
    if (m.has_appearance() && m.has_semantic() && !validation.empty()) {
      cfg.lambda = grid_search_lambda(m, validation, cfg, c.jobs).best_lambda;
      lambdas[names[i]] = cfg.lambda;
    }
    std::vector<const TwofoldModel*> slot(names.size(), nullptr);
    slot[i] = &m;
    rows.push_back(ablation_table(slot, dataset, cfg, c.jobs)[i]);
    std::cerr << names[i] << ": AUC " << rows.back().auc << "\n";
  }
  std::ostringstream csv;
  write_ablation_csv(csv, rows);
  if (!a.out.empty()) write_file(a.out, csv.str());
  if (!a.json_out.empty()) {
    write_file(a.json_out, json{{"rows", ablation_json(rows)}, {"lambda", lambdas.empty() ? json(a.lambda) : lambdas}}.dump(2) + "\n");
  }
  std::cout << csv.str();
  return 0;
}

// ---------------------------------------------------------------------------
// dump-attention

struct AttentionArgs {
  fs::path model, sequence, out;
};

int dump_attention_cmd(const Common& c, const AttentionArgs& a) {
  RunConfig run;
  run.appearance = false;
  const TwofoldModel model = load_for_run(a.model, c.network(), run);
  if (!model.head->variant.attention) throw ContractViolation("the stored semantic head has no channel attention");
  const Sequence seq = load_sequence(a.sequence);
  const TrackerState st = init(seq.frame(0), seq.first_box(), model, TrackConfig{});
  std::ostringstream csv;
  write_attention_csv(csv, dump_attention(st));
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_file(a.out, csv.str());
  }
  return 0;
}

void add_sgd_options(CLI::App* cmd, SgdConfig& s) {
  cmd->add_option("--epochs", s.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--lr", s.lr, "Learning rate")->capture_default_str();
  cmd->add_option("--lr-late", s.lr_late, "Learning rate from --late-epoch on")->capture_default_str();
  cmd->add_option("--late-epoch", s.late_epoch, "First epoch (0-based) at --lr-late")->capture_default_str();
  cmd->add_option("--batch", s.batch_size, "Pairs per step")->capture_default_str();
  cmd->add_option("--steps", s.steps_per_epoch, "Steps per epoch")->capture_default_str();
  cmd->add_option("--momentum", s.momentum, "SGD momentum")->capture_default_str();
  cmd->add_option("--weight-decay", s.weight_decay, "L2 weight decay")->capture_default_str();
  cmd->add_option("--label-radius", s.label_radius, "Positive radius in response cells")->capture_default_str();
}

int run(int argc, char** argv) {
  CLI::App app{"Two-branch Siamese tracker: data, training, tracking, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values; flags given on the command line win");
  app.allow_config_extras(CLI::config_extras_mode::error);

  Common common;
  app.add_option("--profile", common.profile, "Network profile")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  app.add_option("--seed", common.seed, "Random seed")->capture_default_str();
  app.add_option("--jobs", common.jobs, "Worker threads for evaluation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Render synthetic sequences and classification images");
  gen_cmd->add_option("--spec", gen.spec, "JSON spec")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain-snet", "Pretrain S-Net as a classifier");
  pre_cmd->add_option("--data", pre.data, "Classification set directory")->required();
  pre_cmd->add_option("--out", pre.out, "S-Net weights file")->required();
  pre_cmd->add_option("--loss-csv", pre.loss_csv, "Loss log (default: next to --out)");
  pre_cmd->add_option("--epochs", pre.config.epochs)->capture_default_str();
  pre_cmd->add_option("--lr", pre.config.lr)->capture_default_str();
  pre_cmd->add_option("--batch", pre.config.batch_size)->capture_default_str();
  pre_cmd->add_option("--momentum", pre.config.momentum)->capture_default_str();
  pre_cmd->add_option("--weight-decay", pre.config.weight_decay)->capture_default_str();
  pre_cmd->add_option("--holdout", pre.config.holdout_fraction)->capture_default_str();

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train one branch, or both jointly");
  tr_cmd->add_option("--branch", tr.branch, "Which branch")
      ->required()
      ->check(CLI::IsMember({"appearance", "semantic", "joint"}));
  tr_cmd->add_option("--data", tr.data, "Directory of annotated sequences")->required();
  tr_cmd->add_option("--out", tr.out, "Model directory to write")->required();
  tr_cmd->add_option("--snet", tr.snet, "Pretrained S-Net weights");
  tr_cmd->add_option("--init", tr.init, "Model directory to start from");
  tr_cmd->add_option("--loss-csv", tr.loss_csv, "Loss log (default: <out>/loss_<branch>.csv)");
  tr_cmd->add_option("--lambda", tr.lambda, "Branch weight for joint training")->capture_default_str();
  tr_cmd->add_flag("--multilevel,!--no-multilevel", tr.run.multilevel, "Fuse both S-Net taps");
  tr_cmd->add_flag("--attention,!--no-attention", tr.run.attention, "Channel attention");
  add_sgd_options(tr_cmd, tr.sgd);

  TrackArgs tk;
  auto* tk_cmd = app.add_subcommand("track", "Track one sequence");
  tk_cmd->add_option("--model", tk.model, "Model directory")->required();
  tk_cmd->add_option("--sequence", tk.sequence, "Sequence directory")->required();
  tk_cmd->add_option("--out", tk.out, "Box file (frame,x,y,w,h)")->required();
  tk_cmd->add_option("--responses", tk.responses, "Binary dump of per-scale response maps");
  tk_cmd->add_option("--lambda", tk.lambda, "Appearance weight")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  tk_cmd->add_flag("--normalize,!--no-normalize", tk.normalize, "Min-max normalize each branch before mixing");
  add_branch_flags(tk_cmd, tk.run);

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "One-pass evaluation over a dataset");
  ev_cmd->add_option("--model", ev.model, "Model directory");
  ev_cmd->add_option("--dataset", ev.dataset, "Directory of sequences")->required();
  ev_cmd->add_option("--tracker", ev.tracker, "model, ground-truth or static")
      ->check(CLI::IsMember({"model", "ground-truth", "static"}))
      ->capture_default_str();
  ev_cmd->add_option("--out", ev.out, "Report JSON");
  ev_cmd->add_option("--csv", ev.csv, "Success and precision curves");
  ev_cmd->add_option("--lambda", ev.lambda, "Appearance weight")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  ev_cmd->add_flag("--normalize,!--no-normalize", ev.normalize, "Min-max normalize each branch before mixing");
  add_branch_flags(ev_cmd, ev.run);

  LambdaArgs ls;
  auto* ls_cmd = app.add_subcommand("lambda-search", "Grid search over the branch weight");
  ls_cmd->add_option("--model", ls.model, "Model directory with both branches")->required();
  ls_cmd->add_option("--dataset", ls.dataset, "Validation sequences")->required();
  ls_cmd->add_option("--out", ls.out, "Table CSV");
  ls_cmd->add_option("--json", ls.json_out, "Table JSON");

  AblationArgs ab;
  auto* ab_cmd = app.add_subcommand("ablation", "Evaluate the six model variants");
  ab_cmd->add_option("--models", ab.models,
                     "Directory with app, sem, app_sem, app_sem_ml, app_sem_att, app_sem_ml_att")
      ->required();
  ab_cmd->add_option("--dataset", ab.dataset, "Test sequences")->required();
  ab_cmd->add_option("--validation", ab.validation, "Pick lambda per variant on these sequences");
  ab_cmd->add_option("--lambda", ab.lambda, "Appearance weight without --validation")->capture_default_str();
  ab_cmd->add_option("--out", ab.out, "Table CSV");
  ab_cmd->add_option("--json", ab.json_out, "Table JSON");

  AttentionArgs at;
  auto* at_cmd = app.add_subcommand("dump-attention", "Channel weights for a sequence's first frame");
  at_cmd->add_option("--model", at.model, "Model directory")->required();
  at_cmd->add_option("--sequence", at.sequence, "Sequence directory")->required();
  at_cmd->add_option("--out", at.out, "CSV file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  if (*gen_cmd) return gen_synthetic(gen);
  if (*pre_cmd) return pretrain(common, pre);
  if (*tr_cmd) return train(common, tr);
  if (*tk_cmd) return track(common, tk);
  if (*ev_cmd) return eval(common, ev);
  if (*ls_cmd) return lambda_search(common, ls);
  if (*ab_cmd) return ablation(common, ab);
  return dump_attention_cmd(common, at);
}

}  // namespace
}  // namespace twofold::cli

int main(int argc, char** argv) {
  using namespace twofold;
  try {
    return cli::run(argc, argv);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return cli::kNumericError;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
  } catch (const LoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return cli::kInputError;
}
