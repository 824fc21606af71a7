#ifndef IDSBD_MLP_H_
#define IDSBD_MLP_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "idsbd/features.h"
#include "idsbd/metrics.h"
#include "json.hpp"

namespace idsbd {

// Fully connected layer; weights are (outputs x inputs). A pruned neuron
// has its weight row and bias zeroed and its output forced to 0.
template <typename Scalar>
struct DenseLayer {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix w;
  Vector b;
  Eigen::Array<bool, Eigen::Dynamic, 1> pruned;

  Eigen::Index inputs() const { return w.cols(); }
  Eigen::Index outputs() const { return w.rows(); }
};

struct MlpShape {
  std::vector<int> hidden = {512, 512, 512, 512, 512};
  double dropout_rate = 0.2;
};

struct TrainParams {
  int epochs = 20;
  int batch = 256;
  double lr = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 1;
};

// Feed-forward binary classifier: ReLU hidden layers with inverted dropout,
// one sigmoid output unit. Inputs are rows of a FeatureMatrix.
template <typename Scalar>
class MlpT {
 public:
  using Layer = DenseLayer<Scalar>;
  using Matrix = typename Layer::Matrix;
  using Vector = typename Layer::Vector;

  // He-initialized network.
  static MlpT Create(int inputs, const MlpShape& shape, std::uint64_t seed);

  std::vector<Layer> layers;  // hidden layers, then the output layer
  double dropout_rate = 0.0;

  int inputs() const { return static_cast<int>(layers.front().inputs()); }
  int hidden_layers() const { return static_cast<int>(layers.size()) - 1; }
  std::vector<int> Dims() const;

  // Evaluation-mode sigmoid scores, one per row. Throws DimensionError.
  Eigen::VectorXd Predict(const FeatureMatrix& x) const;

  // Post-ReLU activations of every hidden layer for the given rows
  // (neurons x rows each), evaluation mode.
  std::vector<Matrix> HiddenActivations(const FeatureMatrix& x) const;

  void PruneNeuron(int layer, int neuron);
  // Re-zeroes parameters of pruned neurons.
  void ApplyMasks();
  int PrunedCount() const;

  template <typename Other>
  MlpT<Other> Cast() const {
    MlpT<Other> out;
    out.dropout_rate = dropout_rate;
    for (const Layer& l : layers) {
      out.layers.push_back({l.w.template cast<Other>(),
                            l.b.template cast<Other>(), l.pruned});
    }
    return out;
  }
};

using Mlp = MlpT<float>;

// Mean binary cross-entropy and its gradient w.r.t. every parameter.
// Inputs are samples-as-columns; dropout is disabled.
template <typename Scalar>
struct LossGradient {
  double loss = 0.0;
  std::vector<typename MlpT<Scalar>::Matrix> dw;
  std::vector<typename MlpT<Scalar>::Vector> db;
};

template <typename Scalar>
LossGradient<Scalar> ComputeLossGradient(
    const MlpT<Scalar>& mlp, const typename MlpT<Scalar>::Matrix& x_cols,
    const Eigen::VectorXi& y);

template <typename Scalar>
double ComputeLoss(const MlpT<Scalar>& mlp,
                   const typename MlpT<Scalar>::Matrix& x_cols,
                   const Eigen::VectorXi& y);

// Called after each epoch with (epoch, mean training loss).
using EpochCallback = std::function<void(int, double)>;

// SGD with momentum on mean BCE. Throws TrainingError on a non-finite loss
// (message names epoch and batch). Returns per-epoch mean losses.
template <typename Scalar>
std::vector<double> Train(MlpT<Scalar>& mlp, const FeatureMatrix& x,
                          const Eigen::VectorXi& y, const TrainParams& params,
                          const EpochCallback& on_epoch = {});

template <typename Scalar>
MlpT<Scalar> TrainMlp(const Dataset& train, const MlpShape& shape,
                      const TrainParams& params,
                      std::vector<double>* losses = nullptr);

struct ActivationStats {
  // Per hidden layer, per neuron.
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::VectorXd> binary;  // fraction of rows with output > 0
  std::vector<Eigen::Array<bool, Eigen::Dynamic, 1>> pruned;
};

template <typename Scalar>
ActivationStats ComputeActivationStats(const MlpT<Scalar>& mlp,
                                       const FeatureMatrix& validation);

enum class PruneScope { kAllLayers, kFirstLayer, kLastLayer };
enum class ActivationMode { kMean, kBinary };

PruneScope ParsePruneScope(const std::string& s);
ActivationMode ParseActivationMode(const std::string& s);

struct NeuronPruneEntry {
  int step = 0;
  int layer = 0;
  int neuron = 0;
  double statistic = 0.0;
};

// Neurons in scope, least active first. Already pruned neurons lead; ties
// go to the lower (layer, neuron).
std::vector<NeuronPruneEntry> NeuronPruneOrder(const ActivationStats& stats,
                                               PruneScope scope,
                                               ActivationMode mode);

// Prunes the first floor(fraction * |scope|) neurons of NeuronPruneOrder.
// Returns the pruned entries in order.
template <typename Scalar>
std::vector<NeuronPruneEntry> PruneNeurons(MlpT<Scalar>& mlp,
                                           const ActivationStats& stats,
                                           PruneScope scope,
                                           ActivationMode mode,
                                           double fraction);

struct CurvePoint {
  int step = 0;  // prune step or epoch
  double fraction = 0.0;
  double clean_accuracy = 0.0;
  double backdoor_accuracy = 0.0;
};

template <typename Scalar>
CurvePoint Evaluate(const MlpT<Scalar>& mlp, const EvalSet& eval, int step,
                    double fraction);

// As PruneNeurons, evaluating `eval` at `checkpoints` evenly spaced steps
// (plus step 0).
template <typename Scalar>
std::vector<CurvePoint> PruneNeuronsSweep(
    MlpT<Scalar>& mlp, const std::vector<NeuronPruneEntry>& order,
    double fraction, const EvalSet& eval, int checkpoints,
    std::vector<NeuronPruneEntry>* log = nullptr);

// Continues training on clean rows only; curve has epoch 0 plus one point
// per epoch.
template <typename Scalar>
std::vector<CurvePoint> Finetune(MlpT<Scalar>& mlp, const FeatureMatrix& x,
                                 const Eigen::VectorXi& y,
                                 const TrainParams& params,
                                 const EvalSet& eval);

struct FinePruneReport {
  std::vector<NeuronPruneEntry> prune_log;
  std::vector<CurvePoint> prune_curve;
  std::vector<CurvePoint> finetune_curve;
  double backdoor_before = 0.0;
  double backdoor_after = 0.0;
  bool backdoor_dropped = false;  // fell by at least 0.2
};

template <typename Scalar>
FinePruneReport FinePrune(MlpT<Scalar>& mlp, const FeatureMatrix& validation,
                          const Eigen::VectorXi& validation_y,
                          PruneScope scope, ActivationMode mode,
                          double fraction, const TrainParams& finetune_params,
                          const EvalSet& eval);

struct CorrelationRecord {
  int step = 0;
  int layer = 0;
  int neuron = 0;
  int neuron_id = 0;  // global index over hidden neurons
  double correlation = 0.0;
  bool undefined = false;
};

// Pearson correlation; zero variance on either side yields {0, undefined}.
std::pair<double, bool> PearsonCorrelation(const Eigen::VectorXd& a,
                                           const Eigen::VectorXd& b);

// Correlation of each neuron in `prune_log` with `backdoor` over `x`,
// recorded at its prune step. By default activations come from the
// unpruned model, the same model the prune order was derived from. With
// `refresh_every` > 0 the log is replayed and activations are recomputed
// every `refresh_every` steps.
template <typename Scalar>
std::vector<CorrelationRecord> NeuronBackdoorCorrelation(
    const MlpT<Scalar>& mlp, const FeatureMatrix& x,
    const Eigen::VectorXi& backdoor,
    const std::vector<NeuronPruneEntry>& prune_log, int refresh_every = 0);

template <typename Scalar>
nlohmann::ordered_json MlpToJson(const MlpT<Scalar>& mlp);
template <typename Scalar>
MlpT<Scalar> MlpFromJson(const nlohmann::ordered_json& j);

void SaveMlp(const Mlp& mlp, const std::filesystem::path& path);
Mlp LoadMlp(const std::filesystem::path& path);

std::string CurveCsv(const std::vector<CurvePoint>& curve,
                     const std::string& step_name);
std::string PruneLogCsv(const std::vector<NeuronPruneEntry>& log);
std::vector<NeuronPruneEntry> ParsePruneLogCsv(const std::string& text,
                                               const std::string& where);
std::string CorrelationCsv(const std::vector<CorrelationRecord>& records);

}  // namespace idsbd

#endif  // IDSBD_MLP_H_
