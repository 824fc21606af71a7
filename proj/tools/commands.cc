#include "commands.h"

#include <algorithm>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "idsbd/error.h"
#include "idsbd/explain.h"
#include "idsbd/features.h"
#include "idsbd/forest.h"
#include "idsbd/io.h"
#include "idsbd/metrics.h"
#include "idsbd/mlp.h"
#include "idsbd/parallel.h"
#include "idsbd/traffic.h"
#include "json.hpp"

namespace idsbd::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Globals {
  std::string run_dir = ".";
  int threads = 0;
};

fs::path Resolve(const Globals& g, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : fs::path(g.run_dir) / path;
}

// Models keep their normalization next to them: rf.json -> rf.norm.json.
fs::path NormPath(const fs::path& model) {
  fs::path p = model;
  p.replace_extension(".norm.json");
  return p;
}

// Numbers and booleans keep their type; everything else stays a string.
ordered_json TypedValue(const std::string& s) {
  ordered_json v = ordered_json::parse(s, nullptr, false);
  if (v.is_number() || v.is_boolean()) return v;
  return s;
}

// Every option of the subcommand, as given or defaulted.
ordered_json OptionsToJson(const CLI::App& sub) {
  ordered_json j = ordered_json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      if (results.size() == 1) {
        j[name] = TypedValue(results.front());
      } else {
        j[name] = ordered_json::array();
        for (const auto& r : results) j[name].push_back(TypedValue(r));
      }
    } else {
      j[name] = TypedValue(opt->get_default_str());
    }
  }
  return j;
}

// Sidecar provenance record written next to every artifact.
class Provenance {
 public:
  Provenance(std::string command, ordered_json options,
             std::vector<std::string> argv)
      : command_(std::move(command)),
        options_(std::move(options)),
        argv_(std::move(argv)) {}

  void Record(const fs::path& artifact) const {
    ordered_json j;
    j["command"] = command_;
    j["artifact"] = artifact.filename().string();
    j["options"] = options_;
    j["argv"] = argv_;
    WriteJsonFile(artifact.string() + ".meta.json", j);
  }

 private:
  std::string command_;
  ordered_json options_;
  std::vector<std::string> argv_;
};

struct Model {
  std::optional<Forest> forest;
  std::optional<Mlp> mlp;
  NormStats norm;

  std::unique_ptr<Predictor> MakePredictor() const {
    if (forest) return std::make_unique<ForestPredictor>(*forest, norm);
    return std::make_unique<MlpPredictor<float>>(*mlp, norm);
  }
  Eigen::VectorXd ScoreNormalized(const FeatureMatrix& z) const {
    return forest ? PredictScores(*forest, z) : mlp->Predict(z);
  }
};

Model LoadModel(const fs::path& path) {
  const ordered_json j = ReadJsonFile(path);
  Model m;
  if (j.contains("trees")) {
    m.forest = ForestFromJson(j);
  } else if (j.contains("layers")) {
    m.mlp = MlpFromJson<float>(j);
  } else {
    throw ParseError(path.string() + ": neither a forest nor an MLP model");
  }
  const fs::path norm = NormPath(path);
  m.norm = NormStatsFromJson(ReadJsonFile(norm));
  const int want = m.forest ? m.forest->n_features : m.mlp->inputs();
  if (static_cast<int>(m.norm.mean.size()) != want) {
    throw DimensionError(norm.string() + ": width does not match the model");
  }
  return m;
}

Mlp LoadMlpModel(const fs::path& path, NormStats* norm) {
  Model m = LoadModel(path);
  if (!m.mlp) throw ConfigError(path.string() + ": not an MLP model");
  *norm = m.norm;
  return *m.mlp;
}

Forest LoadForestModel(const fs::path& path, NormStats* norm) {
  Model m = LoadModel(path);
  if (!m.forest) throw ConfigError(path.string() + ": not a forest model");
  *norm = m.norm;
  return *m.forest;
}

void SaveModelNorm(const fs::path& model, const NormStats& norm,
                   const Provenance& prov) {
  WriteJsonFile(NormPath(model), NormStatsToJson(norm));
  prov.Record(model);
  prov.Record(NormPath(model));
}

EvalSet LoadEvalSet(const fs::path& test, const fs::path& backdoor,
                    const NormStats& norm, int target) {
  const Dataset t = ReadDatasetCsv(test);
  const Dataset b = ReadDatasetCsv(backdoor);
  EvalSet e;
  e.clean_x = ZScoreApply(norm, t.x);
  e.clean_y = t.y;
  e.backdoor_x = ZScoreApply(norm, b.x);
  e.target_label = target;
  if (e.backdoor_x.rows() == 0) {
    throw ConfigError(backdoor.string() + ": no backdoored rows");
  }
  return e;
}

Dataset ScaledValidation(const fs::path& path, double scale,
                         std::uint64_t seed) {
  Dataset v = ReadDatasetCsv(path);
  if (scale >= 1.0) return v;
  std::vector<int> all(static_cast<std::size_t>(v.x.rows()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return v.Subset(Subsample(all, scale, seed));
}

ordered_json MetricsFor(const Model& m, const FeatureMatrix& clean_z,
                        const Eigen::VectorXi& y,
                        const FeatureMatrix* backdoor_z, int target) {
  const Eigen::VectorXi pred = ThresholdScores(m.ScoreNormalized(clean_z));
  MetricsReport r = ComputeMetrics(ComputeConfusion(y, pred));
  if (backdoor_z != nullptr) {
    r.backdoor_accuracy = TargetRate(m.ScoreNormalized(*backdoor_z), target);
  }
  return MetricsToJson(r);
}

fs::path MetricsPath(const fs::path& model) {
  fs::path p = model;
  p.replace_extension(".metrics.json");
  return p;
}

void WriteMetrics(const fs::path& path, const ordered_json& metrics,
                  const Provenance& prov) {
  WriteJsonFile(path, metrics);
  prov.Record(path);
}

std::pair<double, double> ParseRange(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw ConfigError("range must look like lo:hi, got '" + text + "'");
  }
  const double lo = ParseDouble(text.substr(0, colon), "--range");
  const double hi = ParseDouble(text.substr(colon + 1), "--range");
  if (!(lo < hi)) throw ConfigError("range must satisfy lo < hi");
  return {lo, hi};
}

// Numeric CSVs (curves, logs) as {columns, rows}; other cells kept as text.
ordered_json CsvToJson(const std::string& text) {
  ordered_json out;
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    if (end > start) lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  out["columns"] = ordered_json::array();
  out["rows"] = ordered_json::array();
  if (lines.empty()) return out;
  for (std::string_view c : SplitCsvLine(lines.front())) {
    out["columns"].push_back(std::string(c));
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    ordered_json row = ordered_json::array();
    for (std::string_view c : SplitCsvLine(lines[i])) {
      try {
        row.push_back(ParseDouble(c, "cell"));
      } catch (const ParseError&) {
        row.push_back(std::string(c));
      }
    }
    out["rows"].push_back(std::move(row));
  }
  return out;
}

bool IsCurveHeader(const std::string& header) {
  for (const char* prefix : {"step,", "epoch,", "prune_step,", "feature_name,"}) {
    if (header.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

using Action = std::function<void(const Provenance&)>;

}  // namespace

int Run(const std::vector<std::string>& args) {
  Globals g;
  g.threads = DefaultThreadCount();
  CLI::App app{
      "Backdoored network-intrusion-detection experiments: synthetic flows, "
      "poisoning, random forest and MLP models, pruning defenses and "
      "explainability curves."};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.add_option("--run-dir", g.run_dir,
                 "Directory that relative input and output paths refer to");
  app.add_option("--threads", g.threads,
                 "Worker threads (default: $IDSBD_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  std::vector<std::pair<CLI::App*, Action>> commands;
  auto add = [&](const std::string& name, const std::string& help) {
    return app.add_subcommand(name, help);
  };
  auto bind = [&](CLI::App* sub, Action action) {
    commands.emplace_back(sub, std::move(action));
  };

  // generate
  {
    auto* sub = add("generate", "Generate labeled synthetic flows (JSON lines)");
    auto gen = std::make_shared<GenConfig>();
    auto out = std::make_shared<std::string>("flows.jsonl");
    sub->add_option("--seed", gen->seed, "Random seed");
    sub->add_option("--benign", gen->n_benign, "Number of benign flows");
    sub->add_option("--attack", gen->n_attack, "Number of attack flows");
    sub->add_option("--jitter-rate", gen->benign_ttl_jitter_rate,
                    "Fraction of benign flows with a non-constant TTL");
    sub->add_option("--jitter-attack-share", gen->jitter_attack_shape_share,
                    "Share of those flows shaped like attack traffic");
    sub->add_option("-o,--out", *out, "Output flows file");
    bind(sub, [&g, gen, out](const Provenance& prov) {
      const fs::path path = Resolve(g, *out);
      WriteFlows(path, GenerateFlows(*gen));
      prov.Record(path);
    });
  }

  // split
  {
    auto* sub = add("split", "Stratified 4:1:1 split of a flows file");
    struct Opts {
      std::string in = "flows.jsonl";
      std::uint64_t seed = 2;
      std::string train = "train.jsonl";
      std::string validation = "validation.jsonl";
      std::string test = "test.jsonl";
      double validation_scale = 1.0;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("-i,--in", o->in, "Input flows file");
    sub->add_option("--seed", o->seed, "Random seed");
    sub->add_option("--train", o->train, "Training flows output");
    sub->add_option("--validation", o->validation, "Validation flows output");
    sub->add_option("--test", o->test, "Test flows output");
    sub->add_option("--validation-scale", o->validation_scale,
                    "Keep this fraction of the validation flows")
        ->check(CLI::Range(1e-9, 1.0));
    bind(sub, [&g, o](const Provenance& prov) {
      const std::vector<Flow> flows = ReadFlows(Resolve(g, o->in));
      Eigen::VectorXi labels(static_cast<Eigen::Index>(flows.size()));
      for (std::size_t i = 0; i < flows.size(); ++i) {
        labels[static_cast<Eigen::Index>(i)] = flows[i].label;
      }
      const SplitSpec spec = Split(labels, o->seed);
      auto pick = [&](const std::vector<int>& idx) {
        std::vector<Flow> out;
        for (int i : idx) out.push_back(flows[static_cast<std::size_t>(i)]);
        return out;
      };
      std::vector<int> validation = spec.validation;
      if (o->validation_scale < 1.0) {
        validation = Subsample(validation, o->validation_scale, o->seed);
      }
      for (const auto& [name, idx] :
           {std::pair{o->train, spec.train}, std::pair{o->validation, validation},
            std::pair{o->test, spec.test}}) {
        const fs::path path = Resolve(g, name);
        WriteFlows(path, pick(idx));
        prov.Record(path);
      }
    });
  }

  // poison
  {
    auto* sub = add("poison", "Append relabeled backdoored copies of flows");
    struct Opts {
      std::string in = "train.jsonl";
      std::string out = "train_poisoned.jsonl";
      double rate = 0.5;
      int target = kBenign;
      std::uint64_t seed = 3;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("-i,--in", o->in, "Input flows file");
    sub->add_option("-o,--out", o->out, "Output flows file");
    sub->add_option("--rate", o->rate, "Poisoning rate");
    sub->add_option("--target", o->target, "Target label")
        ->check(CLI::IsMember({0, 1}));
    sub->add_option("--seed", o->seed, "Random seed");
    bind(sub, [&g, o](const Provenance& prov) {
      const std::vector<Flow> flows = ReadFlows(Resolve(g, o->in));
      const fs::path path = Resolve(g, o->out);
      WriteFlows(path, PoisonTrainingSet(flows, o->rate, o->target, o->seed));
      prov.Record(path);
    });
  }

  // featurize
  {
    auto* sub = add("featurize", "Flows to a feature CSV");
    struct Opts {
      std::string in = "train.jsonl";
      std::string out = "train.csv";
      std::string backdoor = "none";
      int target = kBenign;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("-i,--in", o->in, "Input flows file");
    sub->add_option("-o,--out", o->out, "Output CSV");
    sub->add_option("--backdoor", o->backdoor,
                    "none: flows as given; attack: backdoored copies of flows "
                    "not labeled --target; paired: those flows clean, then "
                    "backdoored")
        ->check(CLI::IsMember({"none", "attack", "paired"}));
    sub->add_option("--target", o->target, "Backdoor target label")
        ->check(CLI::IsMember({0, 1}));
    bind(sub, [&g, o](const Provenance& prov) {
      std::vector<Flow> flows = ReadFlows(Resolve(g, o->in));
      if (o->backdoor != "none") {
        std::vector<Flow> clean;
        std::vector<Flow> backdoored;
        for (const Flow& f : flows) {
          if (f.label == o->target) continue;
          clean.push_back(f);
          backdoored.push_back(InjectBackdoor(f));
        }
        if (o->backdoor == "attack") {
          flows = std::move(backdoored);
        } else {
          flows = std::move(clean);
          flows.insert(flows.end(), backdoored.begin(), backdoored.end());
        }
      }
      const fs::path path = Resolve(g, o->out);
      WriteDatasetCsv(path, Featurize(flows));
      prov.Record(path);
    });
  }

  // train-rf
  {
    auto* sub = add("train-rf", "Train a random forest");
    struct Opts {
      std::string train = "train.csv";
      std::string out = "rf.json";
      ForestParams params;
    };
    auto o = std::make_shared<Opts>();
    o->params.seed = 4;
    sub->add_option("--train", o->train, "Training CSV");
    sub->add_option("-o,--out", o->out, "Output model");
    sub->add_option("--trees", o->params.n_estimators, "Number of trees")
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-depth", o->params.max_depth, "-1 for unbounded");
    sub->add_option("--min-samples-leaf", o->params.min_samples_leaf,
                    "Minimum rows per leaf")
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-features", o->params.max_features,
                    "Features tried per split; 0 for sqrt(d)");
    sub->add_option("--seed", o->params.seed, "Random seed");
    bind(sub, [&g, o](const Provenance& prov) {
      const Dataset raw = ReadDatasetCsv(Resolve(g, o->train));
      const NormStats norm = ZScoreFit(raw);
      const Forest forest =
          TrainForest(ZScoreApply(norm, raw), o->params, g.threads);
      const fs::path path = Resolve(g, o->out);
      SaveForest(forest, path);
      SaveModelNorm(path, norm, prov);
      std::cout << "trained " << forest.trees.size() << " trees, "
                << forest.LeafCount() << " leaves\n";
    });
  }

  // train-mlp
  {
    auto* sub = add("train-mlp", "Train a multilayer perceptron");
    struct Opts {
      std::string train = "train.csv";
      std::string out = "mlp.json";
      int layers = 5;
      int width = 512;
      MlpShape shape;
      TrainParams params;
    };
    auto o = std::make_shared<Opts>();
    o->params.seed = 5;
    sub->add_option("--train", o->train, "Training CSV");
    sub->add_option("-o,--out", o->out, "Output model");
    sub->add_option("--layers", o->layers, "Hidden layers")
        ->check(CLI::PositiveNumber);
    sub->add_option("--width", o->width, "Neurons per hidden layer")
        ->check(CLI::PositiveNumber);
    sub->add_option("--dropout", o->shape.dropout_rate, "Dropout rate")
        ->check(CLI::Range(0.0, 0.99));
    sub->add_option("--epochs", o->params.epochs, "Training epochs")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--batch", o->params.batch, "Mini-batch size")
        ->check(CLI::PositiveNumber);
    sub->add_option("--lr", o->params.lr, "Learning rate");
    sub->add_option("--momentum", o->params.momentum, "SGD momentum");
    sub->add_option("--seed", o->params.seed, "Random seed");
    bind(sub, [&g, o](const Provenance& prov) {
      const Dataset raw = ReadDatasetCsv(Resolve(g, o->train));
      const NormStats norm = ZScoreFit(raw);
      MlpShape shape = o->shape;
      shape.hidden.assign(static_cast<std::size_t>(o->layers), o->width);
      const Mlp mlp = TrainMlp<float>(
          ZScoreApply(norm, raw), shape, o->params, nullptr);
      const fs::path path = Resolve(g, o->out);
      SaveMlp(mlp, path);
      SaveModelNorm(path, norm, prov);
    });
  }

  // eval
  {
    auto* sub = add("eval", "Detection metrics and backdoor accuracy");
    struct Opts {
      std::string model = "rf.json";
      std::string test = "test.csv";
      std::string backdoor;
      std::string out;
      int target = kBenign;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--model", o->model, "Forest or MLP model");
    sub->add_option("--test", o->test, "Clean test CSV");
    sub->add_option("--backdoor", o->backdoor,
                    "CSV of backdoored attack rows (optional)");
    sub->add_option("--target", o->target, "Backdoor target label")
        ->check(CLI::IsMember({0, 1}));
    sub->add_option("-o,--out", o->out,
                    "Output JSON (default: <model>.metrics.json)");
    bind(sub, [&g, o](const Provenance& prov) {
      const fs::path model_path = Resolve(g, o->model);
      const Model m = LoadModel(model_path);
      const Dataset test = ReadDatasetCsv(Resolve(g, o->test));
      std::optional<FeatureMatrix> bd;
      if (!o->backdoor.empty()) {
        bd = ZScoreApply(m.norm, ReadDatasetCsv(Resolve(g, o->backdoor)).x);
      }
      const ordered_json metrics =
          MetricsFor(m, ZScoreApply(m.norm, test.x), test.y,
                     bd ? &*bd : nullptr, o->target);
      const fs::path out =
          o->out.empty() ? MetricsPath(model_path) : Resolve(g, o->out);
      WriteMetrics(out, metrics, prov);
      std::cout << metrics.dump() << "\n";
    });
  }

  // prune-rf
  {
    auto* sub = add("prune-rf", "Leaf-pruning defense for a random forest");
    struct Opts {
      std::string model = "rf.json";
      std::string validation = "validation.csv";
      std::string test = "test.csv";
      std::string backdoor = "backdoor.csv";
      std::string out = "rf_pruned.json";
      std::string curve = "rf_prune_curve.csv";
      int variant = 3;
      double fraction = 0.9;
      double checkpoint_every = 0.01;
      double validation_scale = 1.0;
      std::uint64_t seed = 6;
      int target = kBenign;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--model", o->model, "Forest model");
    sub->add_option("--validation", o->validation, "Clean validation CSV");
    sub->add_option("--test", o->test, "Clean test CSV");
    sub->add_option("--backdoor", o->backdoor, "Backdoored attack CSV");
    sub->add_option("-o,--out", o->out, "Pruned model");
    sub->add_option("--curve", o->curve, "Accuracy curve CSV");
    sub->add_option("--variant", o->variant,
                    "1: least used leaves; 2: least used benign leaves; "
                    "3: as 2, shallow leaves first on ties")
        ->check(CLI::IsMember({1, 2, 3}));
    sub->add_option("--fraction", o->fraction,
                    "Fraction of eligible leaves to prune")
        ->check(CLI::Range(0.0, 1.0));
    sub->add_option("--checkpoint-every", o->checkpoint_every,
                    "Pruned fraction between curve points")
        ->check(CLI::Range(1e-6, 1.0));
    sub->add_option("--validation-scale", o->validation_scale,
                    "Use this fraction of the validation rows")
        ->check(CLI::Range(1e-9, 1.0));
    sub->add_option("--seed", o->seed, "Seed for validation subsampling");
    sub->add_option("--target", o->target, "Backdoor target label")
        ->check(CLI::IsMember({0, 1}));
    bind(sub, [&g, o](const Provenance& prov) {
      NormStats norm;
      Forest forest = LoadForestModel(Resolve(g, o->model), &norm);
      const Dataset val = ScaledValidation(Resolve(g, o->validation),
                                           o->validation_scale, o->seed);
      const EvalSet eval = LoadEvalSet(Resolve(g, o->test),
                                       Resolve(g, o->backdoor), norm, o->target);
      PruneOptions opts;
      opts.variant = static_cast<PruneVariant>(o->variant);
      opts.fraction = o->fraction;
      opts.checkpoint_every = o->checkpoint_every;
      const PruneReport report =
          PruneForest(forest, ZScoreApply(norm, val.x), opts, eval);
      const fs::path out = Resolve(g, o->out);
      SaveForest(forest, out);
      SaveModelNorm(out, norm, prov);
      const fs::path curve = Resolve(g, o->curve);
      WriteTextFile(curve, PruneReportCsv(report));
      prov.Record(curve);
      Model m;
      m.forest = std::move(forest);
      const ordered_json metrics = MetricsFor(
          m, eval.clean_x, eval.clean_y, &eval.backdoor_x, o->target);
      WriteMetrics(MetricsPath(out), metrics, prov);
      std::cout << "pruned " << report.steps.size() << " of "
                << report.eligible_leaves << " eligible leaves; "
                << metrics.dump() << "\n";
    });
  }

  // Shared by the MLP defenses.
  struct MlpDefenseOpts {
    std::string model = "mlp.json";
    std::string validation = "validation.csv";
    std::string test = "test.csv";
    std::string backdoor = "backdoor.csv";
    std::string scope = "all";
    std::string mode = "mean";
    double fraction = 0.9;
    double validation_scale = 1.0;
    std::uint64_t seed = 7;
    int target = kBenign;
  };
  auto add_mlp_defense_options = [](CLI::App* sub, MlpDefenseOpts* o,
                                    bool pruning) {
    sub->add_option("--model", o->model, "MLP model");
    sub->add_option("--validation", o->validation, "Clean validation CSV");
    sub->add_option("--test", o->test, "Clean test CSV");
    sub->add_option("--backdoor", o->backdoor, "Backdoored attack CSV");
    sub->add_option("--target", o->target, "Backdoor target label")
        ->check(CLI::IsMember({0, 1}));
    sub->add_option("--validation-scale", o->validation_scale,
                    "Use this fraction of the validation rows")
        ->check(CLI::Range(1e-9, 1.0));
    sub->add_option("--seed", o->seed, "Random seed");
    if (!pruning) return;
    sub->add_option("--scope", o->scope, "Layers to prune from")
        ->check(CLI::IsMember({"all", "first", "last"}));
    sub->add_option("--mode", o->mode,
                    "Activation statistic: mean value or fraction active")
        ->check(CLI::IsMember({"mean", "binary"}));
    sub->add_option("--fraction", o->fraction,
                    "Fraction of in-scope neurons to prune")
        ->check(CLI::Range(0.0, 1.0));
  };

  // prune-mlp
  {
    auto* sub = add("prune-mlp", "Neuron-pruning defense for an MLP");
    auto o = std::make_shared<MlpDefenseOpts>();
    auto out = std::make_shared<std::string>("mlp_pruned.json");
    auto curve = std::make_shared<std::string>("mlp_prune_curve.csv");
    auto log = std::make_shared<std::string>("mlp_prune_log.csv");
    auto checkpoints = std::make_shared<int>(20);
    add_mlp_defense_options(sub, o.get(), true);
    sub->add_option("-o,--out", *out, "Pruned model");
    sub->add_option("--curve", *curve, "Accuracy curve CSV");
    sub->add_option("--log", *log, "Prune order CSV");
    sub->add_option("--checkpoints", *checkpoints, "Curve points")
        ->check(CLI::PositiveNumber);
    bind(sub, [&g, o, out, curve, log, checkpoints](const Provenance& prov) {
      NormStats norm;
      Mlp mlp = LoadMlpModel(Resolve(g, o->model), &norm);
      const Dataset val = ScaledValidation(Resolve(g, o->validation),
                                           o->validation_scale, o->seed);
      const EvalSet eval = LoadEvalSet(Resolve(g, o->test),
                                       Resolve(g, o->backdoor), norm, o->target);
      const ActivationStats stats =
          ComputeActivationStats(mlp, ZScoreApply(norm, val.x));
      const auto order = NeuronPruneOrder(stats, ParsePruneScope(o->scope),
                                          ParseActivationMode(o->mode));
      std::vector<NeuronPruneEntry> pruned;
      const auto points =
          PruneNeuronsSweep(mlp, order, o->fraction, eval, *checkpoints, &pruned);
      const fs::path out_path = Resolve(g, *out);
      SaveMlp(mlp, out_path);
      SaveModelNorm(out_path, norm, prov);
      const fs::path curve_path = Resolve(g, *curve);
      WriteTextFile(curve_path, CurveCsv(points, "step"));
      prov.Record(curve_path);
      const fs::path log_path = Resolve(g, *log);
      WriteTextFile(log_path, PruneLogCsv(pruned));
      prov.Record(log_path);
      Model m;
      m.mlp = std::move(mlp);
      WriteMetrics(MetricsPath(out_path),
                   MetricsFor(m, eval.clean_x, eval.clean_y, &eval.backdoor_x,
                              o->target),
                   prov);
    });
  }

  // finetune
  {
    auto* sub = add("finetune", "Continue training an MLP on clean data");
    auto o = std::make_shared<MlpDefenseOpts>();
    auto params = std::make_shared<TrainParams>();
    auto out = std::make_shared<std::string>("mlp_finetuned.json");
    auto curve = std::make_shared<std::string>("mlp_finetune_curve.csv");
    add_mlp_defense_options(sub, o.get(), false);
    sub->add_option("--epochs", params->epochs, "Fine-tuning epochs")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--batch", params->batch, "Mini-batch size")
        ->check(CLI::PositiveNumber);
    sub->add_option("--lr", params->lr, "Learning rate");
    sub->add_option("--momentum", params->momentum, "SGD momentum");
    sub->add_option("-o,--out", *out, "Fine-tuned model");
    sub->add_option("--curve", *curve, "Per-epoch accuracy curve CSV");
    bind(sub, [&g, o, params, out, curve](const Provenance& prov) {
      NormStats norm;
      Mlp mlp = LoadMlpModel(Resolve(g, o->model), &norm);
      const Dataset val = ScaledValidation(Resolve(g, o->validation),
                                           o->validation_scale, o->seed);
      const EvalSet eval = LoadEvalSet(Resolve(g, o->test),
                                       Resolve(g, o->backdoor), norm, o->target);
      TrainParams p = *params;
      p.seed = o->seed;
      const auto points =
          Finetune(mlp, ZScoreApply(norm, val.x), val.y, p, eval);
      const fs::path out_path = Resolve(g, *out);
      SaveMlp(mlp, out_path);
      SaveModelNorm(out_path, norm, prov);
      const fs::path curve_path = Resolve(g, *curve);
      WriteTextFile(curve_path, CurveCsv(points, "epoch"));
      prov.Record(curve_path);
      Model m;
      m.mlp = std::move(mlp);
      WriteMetrics(MetricsPath(out_path),
                   MetricsFor(m, eval.clean_x, eval.clean_y, &eval.backdoor_x,
                              o->target),
                   prov);
    });
  }

  // fine-prune
  {
    auto* sub = add("fine-prune", "Neuron pruning followed by fine-tuning");
    auto o = std::make_shared<MlpDefenseOpts>();
    auto params = std::make_shared<TrainParams>();
    auto out = std::make_shared<std::string>("mlp_fine_pruned.json");
    auto summary = std::make_shared<std::string>("fine_prune.summary.json");
    add_mlp_defense_options(sub, o.get(), true);
    sub->add_option("--epochs", params->epochs, "Fine-tuning epochs")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--lr", params->lr, "Learning rate");
    sub->add_option("-o,--out", *out, "Resulting model");
    sub->add_option("--summary", *summary, "Summary JSON with both curves");
    bind(sub, [&g, o, params, out, summary](const Provenance& prov) {
      NormStats norm;
      Mlp mlp = LoadMlpModel(Resolve(g, o->model), &norm);
      const Dataset val = ScaledValidation(Resolve(g, o->validation),
                                           o->validation_scale, o->seed);
      const EvalSet eval = LoadEvalSet(Resolve(g, o->test),
                                       Resolve(g, o->backdoor), norm, o->target);
      TrainParams p = *params;
      p.seed = o->seed;
      const FinePruneReport r = FinePrune(
          mlp, ZScoreApply(norm, val.x), val.y, ParsePruneScope(o->scope),
          ParseActivationMode(o->mode), o->fraction, p, eval);
      const fs::path out_path = Resolve(g, *out);
      SaveMlp(mlp, out_path);
      SaveModelNorm(out_path, norm, prov);
      ordered_json j;
      j["pruned_neurons"] = r.prune_log.size();
      j["backdoor_accuracy_before"] = r.backdoor_before;
      j["backdoor_accuracy_after"] = r.backdoor_after;
      j["backdoor_dropped"] = r.backdoor_dropped;
      j["prune_curve"] = CsvToJson(CurveCsv(r.prune_curve, "step"));
      j["finetune_curve"] = CsvToJson(CurveCsv(r.finetune_curve, "epoch"));
      const fs::path summary_path = Resolve(g, *summary);
      WriteJsonFile(summary_path, j);
      prov.Record(summary_path);
      Model m;
      m.mlp = std::move(mlp);
      WriteMetrics(MetricsPath(out_path),
                   MetricsFor(m, eval.clean_x, eval.clean_y, &eval.backdoor_x,
                              o->target),
                   prov);
    });
  }

  // explain
  {
    auto* sub = add("explain", "Partial dependence or ALE curve of a feature");
    struct Opts {
      std::string model = "rf.json";
      std::string data = "test.csv";
      std::string feature = "fwd_stdev_ttl";
      std::string kind = "pdp";
      std::string rows = "all";
      std::string range;
      int points = 51;
      int k = 10;
      std::string out;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--model", o->model, "Forest or MLP model");
    sub->add_option("--data", o->data, "Rows to average over (CSV)");
    sub->add_option("--feature", o->feature, "Feature name");
    sub->add_option("--kind", o->kind, "Curve type")
        ->check(CLI::IsMember({"pdp", "ale"}));
    sub->add_option("--rows", o->rows,
                    "all rows, or only rows labeled attack / benign")
        ->check(CLI::IsMember({"all", "attack", "benign"}));
    sub->add_option("--range", o->range,
                    "Linear grid lo:hi instead of data quantiles");
    sub->add_option("--points", o->points, "Grid points")
        ->check(CLI::Range(2, 100000));
    sub->add_option("--k", o->k, "ALE neighbors per interval")
        ->check(CLI::PositiveNumber);
    sub->add_option("-o,--out", o->out,
                    "Output CSV (default: <model>.<kind>.<feature>.csv)");
    bind(sub, [&g, o](const Provenance& prov) {
      const fs::path model_path = Resolve(g, o->model);
      const Model m = LoadModel(model_path);
      Dataset data = ReadDatasetCsv(Resolve(g, o->data));
      if (o->rows != "all") {
        const int want = o->rows == "attack" ? kAttack : kBenign;
        std::vector<int> keep;
        for (Eigen::Index i = 0; i < data.y.size(); ++i) {
          if (data.y[i] == want) keep.push_back(static_cast<int>(i));
        }
        data = data.Subset(keep);
      }
      if (data.x.rows() == 0) throw ConfigError("no rows to explain");
      const int feature = FeatureIndex(o->feature);
      std::optional<std::pair<double, double>> range;
      if (!o->range.empty()) range = ParseRange(o->range);
      const auto grid = MakeGrid(data.x, feature, o->points, range);
      const auto predictor = m.MakePredictor();
      const ExplainCurve curve =
          o->kind == "pdp" ? Pdp(*predictor, data.x, feature, grid)
                           : Ale(*predictor, data.x, feature, grid, o->k);
      fs::path out = Resolve(g, o->out);
      if (o->out.empty()) {
        out = model_path;
        out.replace_extension("." + o->kind + "." + o->feature + ".csv");
      }
      WriteTextFile(out, ExplainCurveCsv(curve));
      prov.Record(out);
    });
  }

  // correlate
  {
    auto* sub = add("correlate",
                    "Per-neuron correlation with the backdoor along a prune log");
    struct Opts {
      std::string model = "mlp.json";
      std::string data = "probe.csv";
      std::string log = "mlp_prune_log.csv";
      std::string out = "correlation.csv";
      int refresh_every = 0;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--model", o->model, "Unpruned MLP model");
    sub->add_option("--data", o->data,
                    "CSV with clean and backdoored rows (featurize "
                    "--backdoor paired)");
    sub->add_option("--log", o->log, "Prune order CSV from prune-mlp");
    sub->add_option("-o,--out", o->out, "Output CSV");
    sub->add_option("--refresh-every", o->refresh_every,
                    "Replay the log, recomputing activations every N steps "
                    "(0: use the unpruned model)")
        ->check(CLI::NonNegativeNumber);
    bind(sub, [&g, o](const Provenance& prov) {
      NormStats norm;
      const Mlp mlp = LoadMlpModel(Resolve(g, o->model), &norm);
      const Dataset data = ReadDatasetCsv(Resolve(g, o->data));
      const fs::path log_path = Resolve(g, o->log);
      const auto log = ParsePruneLogCsv(ReadTextFile(log_path), log_path.string());
      const auto records = NeuronBackdoorCorrelation(
          mlp, ZScoreApply(norm, data.x), data.bd, log, o->refresh_every);
      const fs::path out = Resolve(g, o->out);
      WriteTextFile(out, CorrelationCsv(records));
      prov.Record(out);
    });
  }

  // report
  {
    auto* sub = add("report", "Collate a run directory into one JSON summary");
    auto out = std::make_shared<std::string>("report.json");
    sub->add_option("-o,--out", *out, "Output JSON");
    bind(sub, [&g, out](const Provenance& prov) {
      const fs::path dir(g.run_dir);
      if (!fs::is_directory(dir)) {
        throw ConfigError(dir.string() + ": not a directory");
      }
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      const fs::path out_path = Resolve(g, *out);
      ordered_json metrics = ordered_json::object();
      ordered_json summaries = ordered_json::object();
      ordered_json curves = ordered_json::object();
      auto ends_with = [](const std::string& s, const std::string& suffix) {
        return s.size() >= suffix.size() &&
               s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
      };
      for (const fs::path& f : files) {
        const std::string name = f.filename().string();
        if (fs::exists(out_path) && fs::equivalent(f, out_path)) continue;
        if (ends_with(name, ".meta.json")) continue;
        if (ends_with(name, ".metrics.json")) {
          metrics[name.substr(0, name.size() - 13)] = ReadJsonFile(f);
        } else if (ends_with(name, ".summary.json")) {
          summaries[name.substr(0, name.size() - 13)] = ReadJsonFile(f);
        } else if (ends_with(name, ".csv")) {
          const std::string text = ReadTextFile(f);
          const std::string header = text.substr(0, text.find('\n'));
          if (IsCurveHeader(header)) curves[name] = CsvToJson(text);
        }
      }
      ordered_json j;
      j["run_dir"] = dir.string();
      j["metrics"] = std::move(metrics);
      j["summaries"] = std::move(summaries);
      j["curves"] = std::move(curves);
      WriteJsonFile(out_path, j);
      prov.Record(out_path);
    });
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    for (const auto& [sub, action] : commands) {
      if (sub->parsed()) {
        action(Provenance(sub->get_name(), OptionsToJson(*sub), args));
      }
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace idsbd::cli
