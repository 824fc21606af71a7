#include "idsbd/metrics.h"

#include "idsbd/error.h"
#include "idsbd/explain.h"

namespace idsbd {
namespace {

// Returns num / den, or 0 with *undefined set when den == 0.
double Ratio(double num, double den, bool* undefined) {
  if (den == 0.0) {
    *undefined = true;
    return 0.0;
  }
  return num / den;
}

}  // namespace

Confusion ComputeConfusion(const Eigen::VectorXi& labels,
                           const Eigen::VectorXi& predictions) {
  if (labels.size() != predictions.size()) {
    throw DimensionError("labels and predictions differ in length");
  }
  if (labels.size() == 0) throw ConfigError("confusion of zero rows");
  Confusion c;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const bool truth = labels[i] == 1;
    const bool pred = predictions[i] == 1;
    if (truth && pred) ++c.tp;
    if (!truth && pred) ++c.fp;
    if (!truth && !pred) ++c.tn;
    if (truth && !pred) ++c.fn;
  }
  return c;
}

MetricsReport ComputeMetrics(const Confusion& c) {
  MetricsReport m;
  const double tp = static_cast<double>(c.tp);
  const double fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn);
  const double fn = static_cast<double>(c.fn);
  m.accuracy = Ratio(tp + tn, tp + fp + tn + fn, &m.accuracy_undefined);
  m.precision = Ratio(tp, tp + fp, &m.precision_undefined);
  m.recall = Ratio(tp, tp + fn, &m.recall_undefined);
  const double specificity = Ratio(tn, tn + fp, &m.specificity_undefined);
  m.f1 = Ratio(2.0 * m.precision * m.recall, m.precision + m.recall,
               &m.f1_undefined);
  m.f1_undefined = m.f1_undefined || m.precision_undefined || m.recall_undefined;
  m.youdens_j = m.recall + specificity - 1.0;
  return m;
}

nlohmann::ordered_json MetricsToJson(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["youdens_j"] = m.youdens_j;
  if (m.backdoor_accuracy) {
    j["backdoor_accuracy"] = *m.backdoor_accuracy;
  } else {
    j["backdoor_accuracy"] = nullptr;
  }
  nlohmann::ordered_json undefined = nlohmann::ordered_json::array();
  if (m.accuracy_undefined) undefined.push_back("accuracy");
  if (m.precision_undefined) undefined.push_back("precision");
  if (m.recall_undefined) undefined.push_back("recall");
  if (m.f1_undefined) undefined.push_back("f1");
  if (m.specificity_undefined) undefined.push_back("specificity");
  j["undefined"] = undefined;
  return j;
}

Eigen::VectorXi ThresholdScores(const Eigen::VectorXd& scores,
                                double threshold) {
  return (scores.array() >= threshold).cast<int>().matrix();
}

double Accuracy(const Eigen::VectorXd& scores, const Eigen::VectorXi& y) {
  if (scores.size() != y.size()) throw DimensionError("score/label mismatch");
  if (y.size() == 0) return 0.0;
  const Eigen::Index correct = (ThresholdScores(scores).array() == y.array()).count();
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

double TargetRate(const Eigen::VectorXd& scores, int target_label) {
  if (scores.size() == 0) return 0.0;
  const Eigen::Index hits = (ThresholdScores(scores).array() == target_label).count();
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double BackdoorAccuracy(const Predictor& model,
                        std::span<const Flow> attack_flows, int target_label) {
  if (attack_flows.empty()) {
    throw ConfigError("backdoor accuracy needs at least one flow");
  }
  std::vector<Flow> injected;
  injected.reserve(attack_flows.size());
  for (const Flow& f : attack_flows) {
    if (f.label == target_label) {
      throw ConfigError("flow " + f.id + " already carries the target label");
    }
    injected.push_back(InjectBackdoor(f));
  }
  return TargetRate(model.Score(Featurize(injected).x), target_label);
}

}  // namespace idsbd
