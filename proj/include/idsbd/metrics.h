#ifndef IDSBD_METRICS_H_
#define IDSBD_METRICS_H_

#include <cstdint>
#include <optional>
#include <span>

#include <Eigen/Dense>

#include "idsbd/features.h"
#include "json.hpp"

namespace idsbd {

class Predictor;

// Attack (1) is the positive class.
struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
};

Confusion ComputeConfusion(const Eigen::VectorXi& labels,
                           const Eigen::VectorXi& predictions);

// Ratios with a zero denominator are reported as 0 and flagged.
struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double youdens_j = 0.0;
  std::optional<double> backdoor_accuracy;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool specificity_undefined = false;
  bool f1_undefined = false;
  bool accuracy_undefined = false;
};

MetricsReport ComputeMetrics(const Confusion& c);

nlohmann::ordered_json MetricsToJson(const MetricsReport& m);

Eigen::VectorXi ThresholdScores(const Eigen::VectorXd& scores,
                                double threshold = 0.5);
double Accuracy(const Eigen::VectorXd& scores, const Eigen::VectorXi& y);
// Fraction of rows whose thresholded score equals target_label.
double TargetRate(const Eigen::VectorXd& scores, int target_label);

// Injects the backdoor into each (attack) flow, featurizes, scores with
// `model` and returns the fraction classified as target_label. Throws
// ConfigError on empty input or a flow already labeled target_label.
double BackdoorAccuracy(const Predictor& model, std::span<const Flow> attack_flows,
                        int target_label = kBenign);

// Clean labeled rows plus backdoored inputs; used for defense curves.
struct EvalSet {
  FeatureMatrix clean_x;
  Eigen::VectorXi clean_y;
  FeatureMatrix backdoor_x;
  int target_label = kBenign;
};

}  // namespace idsbd

#endif  // IDSBD_METRICS_H_
