#include "idsbd/pipeline.h"

#include "idsbd/error.h"

namespace idsbd {

nlohmann::ordered_json ConfigToJson(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["n_benign"] = c.gen.n_benign;
  j["n_attack"] = c.gen.n_attack;
  j["benign_ttl_jitter_rate"] = c.gen.benign_ttl_jitter_rate;
  j["jitter_attack_shape_share"] = c.gen.jitter_attack_shape_share;
  j["poison_rate"] = c.poison_rate;
  j["target_label"] = c.target_label;
  j["forest"] = {{"n_estimators", c.forest.n_estimators},
                 {"max_depth", c.forest.max_depth},
                 {"min_samples_leaf", c.forest.min_samples_leaf},
                 {"max_features", c.forest.max_features}};
  j["mlp"] = {{"hidden", c.mlp_shape.hidden},
              {"dropout_rate", c.mlp_shape.dropout_rate},
              {"epochs", c.mlp_train.epochs},
              {"batch", c.mlp_train.batch},
              {"lr", c.mlp_train.lr},
              {"momentum", c.mlp_train.momentum}};
  j["validation_scale"] = c.validation_scale;
  return j;
}

std::vector<Flow> SelectFlows(const std::vector<Flow>& flows,
                              const std::vector<int>& indices) {
  std::vector<Flow> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(flows[static_cast<std::size_t>(i)]);
  return out;
}

void SplitFlows(const std::vector<Flow>& flows, std::uint64_t seed,
                std::vector<Flow>* train, std::vector<Flow>* validation,
                std::vector<Flow>* test) {
  Eigen::VectorXi labels(static_cast<Eigen::Index>(flows.size()));
  for (std::size_t i = 0; i < flows.size(); ++i) {
    labels[static_cast<Eigen::Index>(i)] = flows[i].label;
  }
  const SplitSpec split = Split(labels, seed);
  *train = SelectFlows(flows, split.train);
  *validation = SelectFlows(flows, split.validation);
  *test = SelectFlows(flows, split.test);
}

ExperimentData BuildExperiment(const ExperimentConfig& config) {
  GenConfig gen = config.gen;
  gen.seed = config.gen_seed();
  const std::vector<Flow> flows = GenerateFlows(gen);

  ExperimentData d;
  std::vector<Flow> clean_train;
  SplitFlows(flows, config.split_seed(), &clean_train, &d.validation_flows,
             &d.test_flows);
  d.train_flows = config.poison_rate > 0.0
                      ? PoisonTrainingSet(clean_train, config.poison_rate,
                                          config.target_label,
                                          config.poison_seed())
                      : clean_train;
  if (config.validation_scale < 1.0) {
    std::vector<int> all(d.validation_flows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    d.validation_flows = SelectFlows(
        d.validation_flows,
        Subsample(all, config.validation_scale, config.subsample_seed()));
  }
  std::vector<Flow> backdoored;
  for (const Flow& f : d.test_flows) {
    if (f.label != config.target_label) {
      d.test_attack_flows.push_back(f);
      backdoored.push_back(InjectBackdoor(f));
    }
  }

  d.train_raw = Featurize(d.train_flows);
  d.validation_raw = Featurize(d.validation_flows);
  d.test_raw = Featurize(d.test_flows);
  d.backdoor_test_raw = Featurize(backdoored).x;

  d.norm = ZScoreFit(d.train_raw);
  d.train = ZScoreApply(d.norm, d.train_raw);
  d.validation = ZScoreApply(d.norm, d.validation_raw);
  d.test = ZScoreApply(d.norm, d.test_raw);
  d.eval.clean_x = d.test.x;
  d.eval.clean_y = d.test.y;
  d.eval.backdoor_x = ZScoreApply(d.norm, d.backdoor_test_raw);
  d.eval.target_label = config.target_label;
  return d;
}

Dataset BackdoorProbeSet(const ExperimentData& data) {
  std::vector<Flow> flows = data.test_attack_flows;
  for (const Flow& f : data.test_attack_flows) {
    flows.push_back(InjectBackdoor(f));
  }
  return ZScoreApply(data.norm, Featurize(flows));
}

}  // namespace idsbd
