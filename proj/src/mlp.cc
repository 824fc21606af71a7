#include "idsbd/mlp.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "idsbd/error.h"
#include "idsbd/io.h"

namespace idsbd {
namespace {

constexpr Eigen::Index kPredictChunk = 1024;

template <typename S>
using MatrixT = typename MlpT<S>::Matrix;

template <typename S>
struct ForwardCache {
  std::vector<MatrixT<S>> z;     // hidden pre-activations
  std::vector<MatrixT<S>> a;     // a[0] input, a[l + 1] hidden output l
  std::vector<MatrixT<S>> drop;  // inverted-dropout multipliers
};

template <typename S>
void ZeroPrunedRows(const DenseLayer<S>& layer, MatrixT<S>& m) {
  for (Eigen::Index j = 0; j < layer.pruned.size(); ++j) {
    if (layer.pruned[j]) m.row(j).setZero();
  }
}

// Returns output logits (1 x batch). With a cache the intermediate values
// are kept for backprop; with an rng dropout is applied.
template <typename S>
MatrixT<S> Forward(const MlpT<S>& mlp, const MatrixT<S>& x_cols,
                   ForwardCache<S>* cache, std::mt19937_64* dropout_rng) {
  MatrixT<S> a = x_cols;
  if (cache) {
    cache->z.clear();
    cache->a.clear();
    cache->drop.clear();
    cache->a.push_back(a);
  }
  const bool dropout = dropout_rng != nullptr && mlp.dropout_rate > 0.0;
  const S keep_scale = static_cast<S>(1.0 / (1.0 - mlp.dropout_rate));
  for (int l = 0; l < mlp.hidden_layers(); ++l) {
    const auto& layer = mlp.layers[static_cast<std::size_t>(l)];
    MatrixT<S> z = layer.w * a;
    z.colwise() += layer.b;
    a = z.cwiseMax(S(0));
    ZeroPrunedRows(layer, a);
    if (dropout) {
      std::bernoulli_distribution keep(1.0 - mlp.dropout_rate);
      MatrixT<S> mask(a.rows(), a.cols());
      for (Eigen::Index c = 0; c < mask.cols(); ++c) {
        for (Eigen::Index r = 0; r < mask.rows(); ++r) {
          mask(r, c) = keep(*dropout_rng) ? keep_scale : S(0);
        }
      }
      a = a.cwiseProduct(mask);
      if (cache) cache->drop.push_back(std::move(mask));
    }
    if (cache) {
      cache->z.push_back(std::move(z));
      cache->a.push_back(a);
    }
  }
  const auto& out = mlp.layers.back();
  MatrixT<S> logits = out.w * a;
  logits.colwise() += out.b;
  return logits;
}

double BceWithLogits(double z, int y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

double Sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

template <typename S>
double MeanLoss(const MatrixT<S>& logits, const Eigen::VectorXi& y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    total += BceWithLogits(static_cast<double>(logits(0, i)), y[i]);
  }
  return total / static_cast<double>(logits.cols());
}

template <typename S>
void Backward(const MlpT<S>& mlp, const ForwardCache<S>& cache,
              const MatrixT<S>& logits, const Eigen::VectorXi& y,
              LossGradient<S>& grad) {
  const auto n_layers = mlp.layers.size();
  grad.dw.resize(n_layers);
  grad.db.resize(n_layers);
  const double inv_batch = 1.0 / static_cast<double>(logits.cols());
  MatrixT<S> dz(1, logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    dz(0, i) = static_cast<S>(
        (Sigmoid(static_cast<double>(logits(0, i))) - y[i]) * inv_batch);
  }
  const bool dropout = !cache.drop.empty();
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& layer = mlp.layers[l];
    grad.dw[l].noalias() = dz * cache.a[l].transpose();
    grad.db[l] = dz.rowwise().sum();
    if (l == 0) break;
    MatrixT<S> da = layer.w.transpose() * dz;
    if (dropout) da = da.cwiseProduct(cache.drop[l - 1]);
    dz = da.cwiseProduct(
        (cache.z[l - 1].array() > S(0)).template cast<S>().matrix());
    ZeroPrunedRows(mlp.layers[l - 1], dz);
  }
}

template <typename S>
MatrixT<S> Columns(const FeatureMatrix& x, Eigen::Index begin,
                   Eigen::Index count) {
  return x.middleRows(begin, count).transpose().template cast<S>();
}

void CheckInputs(int expected, Eigen::Index cols) {
  if (cols != expected) {
    throw DimensionError("network expects " + std::to_string(expected) +
                         " features, got " + std::to_string(cols));
  }
}

std::vector<int> ScopeLayers(PruneScope scope, int hidden) {
  switch (scope) {
    case PruneScope::kFirstLayer:
      return {0};
    case PruneScope::kLastLayer:
      return {hidden - 1};
    case PruneScope::kAllLayers:
      break;
  }
  std::vector<int> all(static_cast<std::size_t>(hidden));
  std::iota(all.begin(), all.end(), 0);
  return all;
}

void CheckFraction(double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ConfigError("prune fraction must be in [0, 1]");
  }
}

std::size_t PruneCount(double fraction, std::size_t n) {
  return std::min(n, static_cast<std::size_t>(std::floor(
                         fraction * static_cast<double>(n) + 1e-9)));
}

}  // namespace

template <typename S>
MlpT<S> MlpT<S>::Create(int inputs, const MlpShape& shape,
                        std::uint64_t seed) {
  if (inputs < 1) throw ConfigError("network needs at least one input");
  if (shape.hidden.empty()) throw ConfigError("network needs a hidden layer");
  if (!(shape.dropout_rate >= 0.0 && shape.dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1)");
  }
  MlpT<S> mlp;
  mlp.dropout_rate = shape.dropout_rate;
  std::mt19937_64 rng(seed);
  std::vector<int> dims = {inputs};
  for (int h : shape.hidden) {
    if (h < 1) throw ConfigError("hidden layer width must be >= 1");
    dims.push_back(h);
  }
  dims.push_back(1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / dims[l]));
    layer.w.resize(dims[l + 1], dims[l]);
    for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
        layer.w(r, c) = static_cast<S>(init(rng));
      }
    }
    layer.b = Vector::Zero(dims[l + 1]);
    layer.pruned = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(dims[l + 1], false);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

template <typename S>
std::vector<int> MlpT<S>::Dims() const {
  std::vector<int> dims = {inputs()};
  for (const Layer& l : layers) dims.push_back(static_cast<int>(l.outputs()));
  return dims;
}

template <typename S>
Eigen::VectorXd MlpT<S>::Predict(const FeatureMatrix& x) const {
  CheckInputs(inputs(), x.cols());
  Eigen::VectorXd scores(x.rows());
  for (Eigen::Index begin = 0; begin < x.rows(); begin += kPredictChunk) {
    const Eigen::Index n = std::min(kPredictChunk, x.rows() - begin);
    const Matrix logits = Forward<S>(*this, Columns<S>(x, begin, n), nullptr, nullptr);
    for (Eigen::Index i = 0; i < n; ++i) {
      scores[begin + i] = Sigmoid(static_cast<double>(logits(0, i)));
    }
  }
  return scores;
}

template <typename S>
std::vector<typename MlpT<S>::Matrix> MlpT<S>::HiddenActivations(
    const FeatureMatrix& x) const {
  CheckInputs(inputs(), x.cols());
  std::vector<Matrix> out;
  for (int l = 0; l < hidden_layers(); ++l) {
    out.emplace_back(layers[static_cast<std::size_t>(l)].outputs(), x.rows());
  }
  ForwardCache<S> cache;
  for (Eigen::Index begin = 0; begin < x.rows(); begin += kPredictChunk) {
    const Eigen::Index n = std::min(kPredictChunk, x.rows() - begin);
    Forward<S>(*this, Columns<S>(x, begin, n), &cache, nullptr);
    for (int l = 0; l < hidden_layers(); ++l) {
      out[static_cast<std::size_t>(l)].middleCols(begin, n) =
          cache.a[static_cast<std::size_t>(l) + 1];
    }
  }
  return out;
}

template <typename S>
void MlpT<S>::PruneNeuron(int layer, int neuron) {
  if (layer < 0 || layer >= hidden_layers()) {
    throw ConfigError("only hidden neurons can be pruned");
  }
  Layer& l = layers[static_cast<std::size_t>(layer)];
  if (neuron < 0 || neuron >= l.outputs()) {
    throw ConfigError("neuron index out of range");
  }
  l.pruned[neuron] = true;
  l.w.row(neuron).setZero();
  l.b[neuron] = S(0);
}

template <typename S>
void MlpT<S>::ApplyMasks() {
  for (Layer& l : layers) {
    for (Eigen::Index j = 0; j < l.pruned.size(); ++j) {
      if (l.pruned[j]) {
        l.w.row(j).setZero();
        l.b[j] = S(0);
      }
    }
  }
}

template <typename S>
int MlpT<S>::PrunedCount() const {
  int n = 0;
  for (const Layer& l : layers) n += static_cast<int>(l.pruned.count());
  return n;
}

template <typename S>
LossGradient<S> ComputeLossGradient(const MlpT<S>& mlp,
                                    const typename MlpT<S>::Matrix& x_cols,
                                    const Eigen::VectorXi& y) {
  CheckInputs(mlp.inputs(), x_cols.rows());
  ForwardCache<S> cache;
  const MatrixT<S> logits = Forward<S>(mlp, x_cols, &cache, nullptr);
  LossGradient<S> grad;
  grad.loss = MeanLoss<S>(logits, y);
  Backward<S>(mlp, cache, logits, y, grad);
  return grad;
}

template <typename S>
double ComputeLoss(const MlpT<S>& mlp, const typename MlpT<S>::Matrix& x_cols,
                   const Eigen::VectorXi& y) {
  CheckInputs(mlp.inputs(), x_cols.rows());
  return MeanLoss<S>(Forward<S>(mlp, x_cols, nullptr, nullptr), y);
}

template <typename S>
std::vector<double> Train(MlpT<S>& mlp, const FeatureMatrix& x,
                          const Eigen::VectorXi& y, const TrainParams& params,
                          const EpochCallback& on_epoch) {
  CheckInputs(mlp.inputs(), x.cols());
  if (x.rows() != y.size()) throw DimensionError("label count != row count");
  if (params.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (params.batch < 1) throw ConfigError("batch size must be >= 1");
  if (!(params.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  std::vector<double> losses;
  if (params.epochs == 0) return losses;
  if (x.rows() == 0) throw TrainingError("empty training set");

  std::mt19937_64 rng(params.seed);
  std::vector<MatrixT<S>> vw;
  std::vector<typename MlpT<S>::Vector> vb;
  for (const auto& l : mlp.layers) {
    vw.push_back(MatrixT<S>::Zero(l.w.rows(), l.w.cols()));
    vb.push_back(MlpT<S>::Vector::Zero(l.b.size()));
  }
  const S lr = static_cast<S>(params.lr);
  const S mu = static_cast<S>(params.momentum);
  std::vector<int> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), 0);
  ForwardCache<S> cache;
  LossGradient<S> grad;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(params.batch)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(params.batch));
      const std::vector<int> idx(order.begin() + begin, order.begin() + end);
      const MatrixT<S> xb = x(idx, Eigen::all).transpose().template cast<S>();
      const Eigen::VectorXi yb = y(idx);
      const MatrixT<S> logits = Forward<S>(mlp, xb, &cache, &rng);
      const double loss = MeanLoss<S>(logits, yb);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(batches));
      }
      Backward<S>(mlp, cache, logits, yb, grad);
      for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        vw[l] = mu * vw[l] - lr * grad.dw[l];
        vb[l] = mu * vb[l] - lr * grad.db[l];
        mlp.layers[l].w += vw[l];
        mlp.layers[l].b += vb[l];
      }
      mlp.ApplyMasks();
      epoch_loss += loss;
      ++batches;
    }
    losses.push_back(epoch_loss / batches);
    if (on_epoch) on_epoch(epoch + 1, losses.back());
  }
  return losses;
}

template <typename S>
MlpT<S> TrainMlp(const Dataset& train, const MlpShape& shape,
                 const TrainParams& params, std::vector<double>* losses) {
  MlpT<S> mlp = MlpT<S>::Create(static_cast<int>(train.cols()), shape,
                                params.seed);
  auto l = Train(mlp, train.x, train.y, params);
  if (losses) *losses = std::move(l);
  return mlp;
}

template <typename S>
ActivationStats ComputeActivationStats(const MlpT<S>& mlp,
                                       const FeatureMatrix& validation) {
  if (validation.rows() == 0) {
    throw ConfigError("activation statistics need a non-empty validation set");
  }
  const auto acts = mlp.HiddenActivations(validation);
  ActivationStats stats;
  for (std::size_t l = 0; l < acts.size(); ++l) {
    stats.mean.push_back(acts[l].template cast<double>().rowwise().mean());
    stats.binary.push_back(
        (acts[l].array() > S(0)).template cast<double>().rowwise().mean());
    stats.pruned.push_back(mlp.layers[l].pruned);
  }
  return stats;
}

PruneScope ParsePruneScope(const std::string& s) {
  if (s == "all") return PruneScope::kAllLayers;
  if (s == "first") return PruneScope::kFirstLayer;
  if (s == "last") return PruneScope::kLastLayer;
  throw ConfigError("scope must be all, first or last");
}

ActivationMode ParseActivationMode(const std::string& s) {
  if (s == "mean") return ActivationMode::kMean;
  if (s == "binary") return ActivationMode::kBinary;
  throw ConfigError("mode must be mean or binary");
}

std::vector<NeuronPruneEntry> NeuronPruneOrder(const ActivationStats& stats,
                                               PruneScope scope,
                                               ActivationMode mode) {
  const auto& values = mode == ActivationMode::kMean ? stats.mean : stats.binary;
  std::vector<NeuronPruneEntry> order;
  for (int l : ScopeLayers(scope, static_cast<int>(values.size()))) {
    const auto& v = values[static_cast<std::size_t>(l)];
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      order.push_back({0, l, static_cast<int>(j), v[j]});
    }
  }
  auto pruned = [&](const NeuronPruneEntry& e) {
    return stats.pruned[static_cast<std::size_t>(e.layer)][e.neuron];
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](const NeuronPruneEntry& a, const NeuronPruneEntry& b) {
                     const bool pa = pruned(a), pb = pruned(b);
                     if (pa != pb) return pa;
                     return a.statistic < b.statistic;
                   });
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i].step = static_cast<int>(i);
  }
  return order;
}

template <typename S>
std::vector<NeuronPruneEntry> PruneNeurons(MlpT<S>& mlp,
                                           const ActivationStats& stats,
                                           PruneScope scope,
                                           ActivationMode mode,
                                           double fraction) {
  CheckFraction(fraction);
  auto order = NeuronPruneOrder(stats, scope, mode);
  order.resize(PruneCount(fraction, order.size()));
  for (const auto& e : order) mlp.PruneNeuron(e.layer, e.neuron);
  return order;
}

template <typename S>
CurvePoint Evaluate(const MlpT<S>& mlp, const EvalSet& eval, int step,
                    double fraction) {
  CurvePoint p;
  p.step = step;
  p.fraction = fraction;
  p.clean_accuracy = Accuracy(mlp.Predict(eval.clean_x), eval.clean_y);
  p.backdoor_accuracy = TargetRate(mlp.Predict(eval.backdoor_x), eval.target_label);
  return p;
}

template <typename S>
std::vector<CurvePoint> PruneNeuronsSweep(
    MlpT<S>& mlp, const std::vector<NeuronPruneEntry>& order, double fraction,
    const EvalSet& eval, int checkpoints, std::vector<NeuronPruneEntry>* log) {
  CheckFraction(fraction);
  if (checkpoints < 1) throw ConfigError("need at least one checkpoint");
  const std::size_t total = PruneCount(fraction, order.size());
  const double denom = std::max<double>(1.0, static_cast<double>(order.size()));
  std::vector<CurvePoint> curve = {Evaluate(mlp, eval, 0, 0.0)};
  std::size_t done = 0;
  for (int c = 1; c <= checkpoints; ++c) {
    const std::size_t upto =
        total * static_cast<std::size_t>(c) / static_cast<std::size_t>(checkpoints);
    if (upto == done) continue;
    for (; done < upto; ++done) {
      mlp.PruneNeuron(order[done].layer, order[done].neuron);
      if (log) log->push_back(order[done]);
    }
    curve.push_back(Evaluate(mlp, eval, static_cast<int>(done),
                             static_cast<double>(done) / denom));
  }
  return curve;
}

template <typename S>
std::vector<CurvePoint> Finetune(MlpT<S>& mlp, const FeatureMatrix& x,
                                 const Eigen::VectorXi& y,
                                 const TrainParams& params,
                                 const EvalSet& eval) {
  std::vector<CurvePoint> curve = {Evaluate(mlp, eval, 0, 0.0)};
  Train(mlp, x, y, params, [&](int epoch, double) {
    curve.push_back(Evaluate(mlp, eval, epoch, 0.0));
  });
  return curve;
}

template <typename S>
FinePruneReport FinePrune(MlpT<S>& mlp, const FeatureMatrix& validation,
                          const Eigen::VectorXi& validation_y,
                          PruneScope scope, ActivationMode mode,
                          double fraction, const TrainParams& finetune_params,
                          const EvalSet& eval) {
  CheckFraction(fraction);
  FinePruneReport report;
  const ActivationStats stats = ComputeActivationStats(mlp, validation);
  const auto order = NeuronPruneOrder(stats, scope, mode);
  report.prune_curve =
      PruneNeuronsSweep(mlp, order, fraction, eval, 10, &report.prune_log);
  report.finetune_curve =
      Finetune(mlp, validation, validation_y, finetune_params, eval);
  report.backdoor_before = report.prune_curve.front().backdoor_accuracy;
  report.backdoor_after = report.finetune_curve.back().backdoor_accuracy;
  report.backdoor_dropped =
      report.backdoor_before - report.backdoor_after >= 0.2;
  return report;
}

std::pair<double, bool> PearsonCorrelation(const Eigen::VectorXd& a,
                                           const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DimensionError("correlation length mismatch");
  if (a.size() < 2) return {0.0, true};
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double va = (da * da).sum();
  const double vb = (db * db).sum();
  if (!(va > 0.0) || !(vb > 0.0)) return {0.0, true};
  const double r = (da * db).sum() / std::sqrt(va * vb);
  return {std::clamp(r, -1.0, 1.0), false};
}

template <typename S>
std::vector<CorrelationRecord> NeuronBackdoorCorrelation(
    const MlpT<S>& mlp, const FeatureMatrix& x,
    const Eigen::VectorXi& backdoor,
    const std::vector<NeuronPruneEntry>& prune_log, int refresh_every) {
  if (x.rows() != backdoor.size()) {
    throw DimensionError("backdoor flags do not match rows");
  }
  const bool replay = refresh_every > 0;
  std::vector<int> offsets = {0};
  for (int l = 0; l < mlp.hidden_layers(); ++l) {
    offsets.push_back(offsets.back() +
                      static_cast<int>(mlp.layers[static_cast<std::size_t>(l)].outputs()));
  }
  const Eigen::VectorXd flags = backdoor.cast<double>();
  MlpT<S> work = mlp;
  std::vector<typename MlpT<S>::Matrix> acts;
  std::vector<CorrelationRecord> out;
  for (std::size_t i = 0; i < prune_log.size(); ++i) {
    const NeuronPruneEntry& e = prune_log[i];
    if (i == 0 ||
        (replay && i % static_cast<std::size_t>(refresh_every) == 0)) {
      acts = work.HiddenActivations(x);
    }
    const Eigen::VectorXd act =
        acts[static_cast<std::size_t>(e.layer)].row(e.neuron).transpose().template cast<double>();
    const auto [r, undefined] = PearsonCorrelation(act, flags);
    out.push_back({static_cast<int>(i), e.layer, e.neuron,
                   offsets[static_cast<std::size_t>(e.layer)] + e.neuron, r,
                   undefined});
    if (replay) work.PruneNeuron(e.layer, e.neuron);
  }
  return out;
}

template <typename S>
nlohmann::ordered_json MlpToJson(const MlpT<S>& mlp) {
  nlohmann::ordered_json j;
  j["dims"] = mlp.Dims();
  j["dropout_rate"] = mlp.dropout_rate;
  auto& layers = j["layers"];
  layers = nlohmann::ordered_json::array();
  for (const auto& l : mlp.layers) {
    nlohmann::ordered_json lj;
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.w.size()));
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) {
        w.push_back(static_cast<double>(l.w(r, c)));
      }
    }
    lj["w"] = std::move(w);
    std::vector<double> b(static_cast<std::size_t>(l.b.size()));
    for (Eigen::Index i = 0; i < l.b.size(); ++i) {
      b[static_cast<std::size_t>(i)] = static_cast<double>(l.b[i]);
    }
    lj["b"] = std::move(b);
    std::vector<bool> mask(l.pruned.data(), l.pruned.data() + l.pruned.size());
    lj["mask"] = mask;
    layers.push_back(std::move(lj));
  }
  return j;
}

template <typename S>
MlpT<S> MlpFromJson(const nlohmann::ordered_json& j) {
  try {
    MlpT<S> mlp;
    const auto dims = j.at("dims").get<std::vector<int>>();
    mlp.dropout_rate = j.at("dropout_rate").get<double>();
    if (dims.size() < 3 || dims.back() != 1) {
      throw ParseError("dims must list inputs, hidden widths and a single output");
    }
    if (!(mlp.dropout_rate >= 0.0 && mlp.dropout_rate < 1.0)) {
      throw ParseError("dropout_rate must be in [0, 1)");
    }
    const auto& layers = j.at("layers");
    if (layers.size() + 1 != dims.size()) {
      throw ParseError("layer count does not match dims");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string where = "layers[" + std::to_string(l) + "]";
      const auto w = layers[l].at("w").get<std::vector<double>>();
      const auto b = layers[l].at("b").get<std::vector<double>>();
      const auto mask = layers[l].at("mask").get<std::vector<bool>>();
      const int out = dims[l + 1], in = dims[l];
      if (out < 1 || in < 1 ||
          w.size() != static_cast<std::size_t>(out) * static_cast<std::size_t>(in) ||
          b.size() != static_cast<std::size_t>(out) ||
          mask.size() != static_cast<std::size_t>(out)) {
        throw ParseError(where + ": parameter sizes do not match dims");
      }
      DenseLayer<S> layer;
      layer.w.resize(out, in);
      for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) {
          layer.w(r, c) = static_cast<S>(w[static_cast<std::size_t>(r) * in + c]);
        }
      }
      layer.b.resize(out);
      layer.pruned.resize(out);
      for (int r = 0; r < out; ++r) {
        layer.b[r] = static_cast<S>(b[static_cast<std::size_t>(r)]);
        layer.pruned[r] = mask[static_cast<std::size_t>(r)];
      }
      if (l + 1 == layers.size() && layer.pruned.any()) {
        throw ParseError(where + ": the output neuron cannot be pruned");
      }
      mlp.layers.push_back(std::move(layer));
    }
    mlp.ApplyMasks();
    return mlp;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("mlp: ") + e.what());
  }
}

void SaveMlp(const Mlp& mlp, const std::filesystem::path& path) {
  WriteJsonFile(path, MlpToJson(mlp), -1);
}

Mlp LoadMlp(const std::filesystem::path& path) {
  try {
    return MlpFromJson<float>(ReadJsonFile(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string CurveCsv(const std::vector<CurvePoint>& curve,
                     const std::string& step_name) {
  std::string out = step_name + ",fraction,clean_accuracy,backdoor_accuracy\n";
  for (const CurvePoint& p : curve) {
    out += std::to_string(p.step) + "," + FormatDouble(p.fraction) + "," +
           FormatDouble(p.clean_accuracy) + "," +
           FormatDouble(p.backdoor_accuracy) + "\n";
  }
  return out;
}

std::string PruneLogCsv(const std::vector<NeuronPruneEntry>& log) {
  std::string out = "step,layer,neuron,statistic\n";
  for (const auto& e : log) {
    out += std::to_string(e.step) + "," + std::to_string(e.layer) + "," +
           std::to_string(e.neuron) + "," + FormatDouble(e.statistic) + "\n";
  }
  return out;
}

std::vector<NeuronPruneEntry> ParsePruneLogCsv(const std::string& text,
                                               const std::string& where) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,layer,neuron,statistic", 0) != 0) {
    throw ParseError(where + ":1: expected header step,layer,neuron,statistic");
  }
  std::vector<NeuronPruneEntry> log;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string ctx = where + ":" + std::to_string(line_no);
    const auto f = SplitCsvLine(line);
    if (f.size() != 4) throw ParseError(ctx + ": expected 4 fields");
    log.push_back({static_cast<int>(ParseInt(f[0], ctx)),
                   static_cast<int>(ParseInt(f[1], ctx)),
                   static_cast<int>(ParseInt(f[2], ctx)),
                   ParseDouble(f[3], ctx)});
  }
  return log;
}

std::string CorrelationCsv(const std::vector<CorrelationRecord>& records) {
  std::string out = "prune_step,neuron_id,correlation,undefined_flag\n";
  for (const auto& r : records) {
    out += std::to_string(r.step) + "," + std::to_string(r.neuron_id) + "," +
           FormatDouble(r.correlation) + "," + (r.undefined ? "1" : "0") + "\n";
  }
  return out;
}

#define IDSBD_INSTANTIATE_MLP(S)                                               \
  template class MlpT<S>;                                                      \
  template LossGradient<S> ComputeLossGradient<S>(                             \
      const MlpT<S>&, const typename MlpT<S>::Matrix&, const Eigen::VectorXi&); \
  template double ComputeLoss<S>(const MlpT<S>&,                               \
                                 const typename MlpT<S>::Matrix&,              \
                                 const Eigen::VectorXi&);                      \
  template std::vector<double> Train<S>(MlpT<S>&, const FeatureMatrix&,        \
                                        const Eigen::VectorXi&,                \
                                        const TrainParams&,                    \
                                        const EpochCallback&);                 \
  template MlpT<S> TrainMlp<S>(const Dataset&, const MlpShape&,                \
                               const TrainParams&, std::vector<double>*);      \
  template ActivationStats ComputeActivationStats<S>(const MlpT<S>&,           \
                                                     const FeatureMatrix&);    \
  template std::vector<NeuronPruneEntry> PruneNeurons<S>(                      \
      MlpT<S>&, const ActivationStats&, PruneScope, ActivationMode, double);   \
  template CurvePoint Evaluate<S>(const MlpT<S>&, const EvalSet&, int,         \
                                  double);                                     \
  template std::vector<CurvePoint> PruneNeuronsSweep<S>(                       \
      MlpT<S>&, const std::vector<NeuronPruneEntry>&, double, const EvalSet&,  \
      int, std::vector<NeuronPruneEntry>*);                                    \
  template std::vector<CurvePoint> Finetune<S>(                                \
      MlpT<S>&, const FeatureMatrix&, const Eigen::VectorXi&,                  \
      const TrainParams&, const EvalSet&);                                     \
  template FinePruneReport FinePrune<S>(                                       \
      MlpT<S>&, const FeatureMatrix&, const Eigen::VectorXi&, PruneScope,      \
      ActivationMode, double, const TrainParams&, const EvalSet&);             \
  template std::vector<CorrelationRecord> NeuronBackdoorCorrelation<S>(        \
      const MlpT<S>&, const FeatureMatrix&, const Eigen::VectorXi&,            \
      const std::vector<NeuronPruneEntry>&, int);                              \
  template nlohmann::ordered_json MlpToJson<S>(const MlpT<S>&);                \
  template MlpT<S> MlpFromJson<S>(const nlohmann::ordered_json&);

IDSBD_INSTANTIATE_MLP(float)
IDSBD_INSTANTIATE_MLP(double)

#undef IDSBD_INSTANTIATE_MLP

}  // namespace idsbd
