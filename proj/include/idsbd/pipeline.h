#ifndef IDSBD_PIPELINE_H_
#define IDSBD_PIPELINE_H_

#include <cstdint>
#include <vector>

#include "idsbd/features.h"
#include "idsbd/forest.h"
#include "idsbd/metrics.h"
#include "idsbd/mlp.h"
#include "idsbd/traffic.h"
#include "json.hpp"

namespace idsbd {

// Everything needed to reproduce one experiment. Component seeds are
// derived from `seed`.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  GenConfig gen;
  double poison_rate = 0.5;
  int target_label = kBenign;
  ForestParams forest;
  MlpShape mlp_shape;
  TrainParams mlp_train;
  double validation_scale = 1.0;

  std::uint64_t gen_seed() const { return seed; }
  std::uint64_t split_seed() const { return seed + 1; }
  std::uint64_t poison_seed() const { return seed + 2; }
  std::uint64_t forest_seed() const { return seed + 3; }
  std::uint64_t mlp_seed() const { return seed + 4; }
  std::uint64_t subsample_seed() const { return seed + 5; }
};

nlohmann::ordered_json ConfigToJson(const ExperimentConfig& c);

// Flow-level split, poisoning of the training part only, featurization and
// normalization fitted on the (poisoned) training rows.
struct ExperimentData {
  std::vector<Flow> train_flows;  // after poisoning
  std::vector<Flow> validation_flows;
  std::vector<Flow> test_flows;
  std::vector<Flow> test_attack_flows;  // test flows not carrying the target

  Dataset train_raw;
  Dataset validation_raw;
  Dataset test_raw;
  FeatureMatrix backdoor_test_raw;  // test_attack_flows with the backdoor

  NormStats norm;
  Dataset train;  // normalized
  Dataset validation;
  Dataset test;
  EvalSet eval;   // normalized test + backdoored test
};

ExperimentData BuildExperiment(const ExperimentConfig& config);

// Normalized clean test attack flows followed by their backdoored copies;
// `bd` marks the copies. Used for the neuron correlation diagnostic.
Dataset BackdoorProbeSet(const ExperimentData& data);

// Splits flows with the stratified 4:1:1 rule.
void SplitFlows(const std::vector<Flow>& flows, std::uint64_t seed,
                std::vector<Flow>* train, std::vector<Flow>* validation,
                std::vector<Flow>* test);

std::vector<Flow> SelectFlows(const std::vector<Flow>& flows,
                              const std::vector<int>& indices);

}  // namespace idsbd

#endif  // IDSBD_PIPELINE_H_
