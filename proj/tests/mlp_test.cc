#include "idsbd/mlp.h"

#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "idsbd/error.h"

namespace idsbd {
namespace {

using MlpD = MlpT<double>;

FeatureMatrix RandomRows(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  return FeatureMatrix::NullaryExpr(n, d,
                                    [&](Eigen::Index, Eigen::Index) { return g(rng); });
}

// Two Gaussian blobs, separated along every axis.
void Blobs(int n, std::uint64_t seed, FeatureMatrix* x, Eigen::VectorXi* y) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.5);
  *x = FeatureMatrix(n, 3);
  *y = Eigen::VectorXi(n);
  for (int i = 0; i < n; ++i) {
    (*y)[i] = i % 2;
    for (int j = 0; j < 3; ++j) (*x)(i, j) = g(rng) + ((*y)[i] ? 1.5 : -1.5);
  }
}

EvalSet SmallEval() {
  EvalSet e;
  Blobs(40, 99, &e.clean_x, &e.clean_y);
  e.backdoor_x = e.clean_x.topRows(10);
  return e;
}

// relu(x) and relu(-x) feeding one output.
MlpD TwoNeuronNet() {
  MlpD mlp;
  DenseLayer<double> h;
  h.w = Eigen::MatrixXd(2, 1);
  h.w << 1.0, -1.0;
  h.b = Eigen::VectorXd::Zero(2);
  h.pruned = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(2, false);
  DenseLayer<double> out;
  out.w = Eigen::MatrixXd(1, 2);
  out.w << 1.0, 2.0;
  out.b = Eigen::VectorXd::Constant(1, -0.5);
  out.pruned = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(1, false);
  mlp.layers = {h, out};
  return mlp;
}

TEST(GradientTest, MatchesCentralDifferences) {
  MlpShape shape;
  shape.hidden = {4, 4};
  shape.dropout_rate = 0.0;
  MlpD mlp = MlpD::Create(3, shape, 17);
  for (auto& l : mlp.layers) l.b.setConstant(0.1);
  const Eigen::MatrixXd x_cols = RandomRows(6, 3, 18).transpose();
  Eigen::VectorXi y(6);
  y << 0, 1, 1, 0, 1, 0;
  const LossGradient<double> g = ComputeLossGradient(mlp, x_cols, y);
  EXPECT_NEAR(g.loss, ComputeLoss(mlp, x_cols, y), 1e-12);
  const double h = 1e-6;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = ComputeLoss(mlp, x_cols, y);
    param = saved - h;
    const double down = ComputeLoss(mlp, x_cols, y);
    param = saved;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::abs(analytic - numeric) /
                       std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    EXPECT_LE(rel, 1e-4) << analytic << " vs " << numeric;
  };
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    auto& layer = mlp.layers[l];
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
        check(layer.w(r, c), g.dw[l](r, c));
      }
      check(layer.b[r], g.db[l][r]);
    }
  }
}

TEST(GradientTest, PrunedNeuronsGetNoGradient) {
  MlpShape shape;
  shape.hidden = {5};
  shape.dropout_rate = 0.0;
  MlpD mlp = MlpD::Create(3, shape, 3);
  mlp.PruneNeuron(0, 2);
  const LossGradient<double> g = ComputeLossGradient(
      mlp, RandomRows(8, 3, 4).transpose(), Eigen::VectorXi::Ones(8));
  EXPECT_TRUE(g.dw[0].row(2).isZero());
  EXPECT_EQ(g.db[0][2], 0.0);
  EXPECT_EQ(g.dw[1](0, 2), 0.0);
}

TEST(MlpTest, ZeroWeightsGiveOneHalf) {
  MlpShape shape;
  shape.hidden = {8, 8};
  Mlp mlp = Mlp::Create(4, shape, 1);
  for (auto& l : mlp.layers) {
    l.w.setZero();
    l.b.setZero();
  }
  const Eigen::VectorXd s = mlp.Predict(RandomRows(10, 4, 2));
  for (double v : s) EXPECT_EQ(v, 0.5);
}

TEST(MlpTest, HandBuiltForward) {
  const MlpD mlp = TwoNeuronNet();
  FeatureMatrix x(3, 1);
  x << -1.0, 0.0, 2.0;
  const Eigen::VectorXd s = mlp.Predict(x);
  // logits: 2*1 - .5, -.5, 2 - .5
  EXPECT_NEAR(s[0], 1.0 / (1.0 + std::exp(-1.5)), 1e-15);
  EXPECT_NEAR(s[1], 1.0 / (1.0 + std::exp(0.5)), 1e-15);
  EXPECT_NEAR(s[2], 1.0 / (1.0 + std::exp(-1.5)), 1e-15);
}

TEST(MlpTest, MaskedNeuronIsSilentWhateverItsWeights) {
  MlpShape shape;
  shape.hidden = {6, 6};
  MlpD mlp = MlpD::Create(3, shape, 5);
  mlp.PruneNeuron(0, 1);
  mlp.PruneNeuron(1, 4);
  const FeatureMatrix x = RandomRows(20, 3, 6);
  const Eigen::VectorXd before = mlp.Predict(x);
  const auto acts = mlp.HiddenActivations(x);
  EXPECT_TRUE(acts[0].row(1).isZero());
  EXPECT_TRUE(acts[1].row(4).isZero());
  // Weights written behind the mask's back never leak into the output.
  mlp.layers[0].w.row(1).setConstant(3.0);
  mlp.layers[0].b[1] = 5.0;
  EXPECT_EQ(mlp.Predict(x), before);
  mlp.ApplyMasks();
  EXPECT_TRUE(mlp.layers[0].w.row(1).isZero());
  EXPECT_EQ(mlp.PrunedCount(), 2);
}

TEST(MlpTest, PrunedWeightsStayZeroThroughTraining) {
  FeatureMatrix x;
  Eigen::VectorXi y;
  Blobs(100, 7, &x, &y);
  MlpShape shape;
  shape.hidden = {8, 8};
  Mlp mlp = Mlp::Create(3, shape, 8);
  mlp.PruneNeuron(0, 0);
  mlp.PruneNeuron(1, 7);
  TrainParams p;
  p.epochs = 3;
  p.batch = 16;
  Train(mlp, x, y, p);
  EXPECT_TRUE(mlp.layers[0].w.row(0).isZero());
  EXPECT_EQ(mlp.layers[0].b[0], 0.0f);
  EXPECT_TRUE(mlp.layers[1].w.row(7).isZero());
}

TEST(MlpTest, PredictionIndependentOfBatchAndOrder) {
  MlpShape shape;
  shape.hidden = {16, 16};
  const Mlp mlp = Mlp::Create(5, shape, 9);
  const FeatureMatrix x = RandomRows(2100, 5, 10);  // spans several chunks
  const Eigen::VectorXd all = mlp.Predict(x);
  for (int i : {0, 1, 1023, 1024, 2099}) {
    EXPECT_NEAR(mlp.Predict(x.row(i))[0], all[i], 1e-6);
  }
  Eigen::VectorXi perm(x.rows());
  for (Eigen::Index i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(perm.size() - 1 - i);
  const FeatureMatrix reversed = x(perm, Eigen::all);
  const Eigen::VectorXd r = mlp.Predict(reversed);
  for (Eigen::Index i = 0; i < perm.size(); ++i) {
    EXPECT_NEAR(r[i], all[perm[i]], 1e-6);
  }
}

TEST(MlpTest, WidthMismatch) {
  const Mlp mlp = Mlp::Create(3, MlpShape{}, 1);
  EXPECT_THROW(mlp.Predict(RandomRows(2, 4, 1)), DimensionError);
}

TEST(MlpTest, RejectsBadShape) {
  MlpShape shape;
  shape.hidden = {};
  EXPECT_THROW(Mlp::Create(3, shape, 1), ConfigError);
  shape.hidden = {4};
  shape.dropout_rate = 1.0;
  EXPECT_THROW(Mlp::Create(3, shape, 1), ConfigError);
}

TEST(TrainTest, DeterministicForSeed) {
  FeatureMatrix x;
  Eigen::VectorXi y;
  Blobs(200, 11, &x, &y);
  Dataset d;
  d.x = x;
  d.y = y;
  MlpShape shape;
  shape.hidden = {8, 8};
  TrainParams p;
  p.epochs = 2;
  p.batch = 32;
  p.seed = 3;
  const Mlp a = TrainMlp<float>(d, shape, p);
  const Mlp b = TrainMlp<float>(d, shape, p);
  EXPECT_EQ(MlpToJson(a).dump(), MlpToJson(b).dump());
  p.seed = 4;
  EXPECT_NE(MlpToJson(a).dump(), MlpToJson(TrainMlp<float>(d, shape, p)).dump());
}

TEST(TrainTest, SeparableBlobsAreLearned) {
  FeatureMatrix x;
  Eigen::VectorXi y;
  Blobs(1000, 12, &x, &y);
  Dataset d;
  d.x = x;
  d.y = y;
  MlpShape shape;
  shape.hidden = {16, 16};
  TrainParams p;
  p.epochs = 10;
  p.batch = 32;
  p.lr = 0.05;
  std::vector<double> losses;
  const Mlp mlp = TrainMlp<float>(d, shape, p, &losses);
  ASSERT_EQ(losses.size(), 10u);
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_GE(Accuracy(mlp.Predict(x), y), 0.99);
}

TEST(TrainTest, FullBatchStepWithoutDropoutIsPlainGradientDescent) {
  FeatureMatrix x;
  Eigen::VectorXi y;
  Blobs(30, 13, &x, &y);
  MlpShape shape;
  shape.hidden = {5, 5};
  shape.dropout_rate = 0.0;
  MlpD mlp = MlpD::Create(3, shape, 14);
  const LossGradient<double> g =
      ComputeLossGradient(mlp, Eigen::MatrixXd(x.transpose()), y);
  MlpD expected = mlp;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    expected.layers[l].w -= 0.1 * g.dw[l];
    expected.layers[l].b -= 0.1 * g.db[l];
  }
  TrainParams p;
  p.epochs = 1;
  p.batch = 30;
  p.lr = 0.1;
  p.momentum = 0.0;
  Train(mlp, x, y, p);
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    EXPECT_LE((mlp.layers[l].w - expected.layers[l].w).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((mlp.layers[l].b - expected.layers[l].b).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(TrainTest, RejectsBadParams) {
  Mlp mlp = Mlp::Create(3, MlpShape{}, 1);
  const FeatureMatrix x = RandomRows(4, 3, 1);
  TrainParams p;
  p.batch = 0;
  EXPECT_THROW(Train(mlp, x, Eigen::VectorXi::Zero(4), p), ConfigError);
  EXPECT_THROW(Train(mlp, x, Eigen::VectorXi::Zero(3), TrainParams{}),
               DimensionError);
}

TEST(TrainTest, NonFiniteLossIsReported) {
  MlpShape shape;
  shape.hidden = {4};
  Mlp mlp = Mlp::Create(2, shape, 1);
  FeatureMatrix x = RandomRows(8, 2, 2);
  x(3, 1) = std::numeric_limits<double>::quiet_NaN();
  TrainParams p;
  p.batch = 8;
  try {
    Train(mlp, x, Eigen::VectorXi::Ones(8), p);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos);
  }
}

TEST(ActivationStatsTest, HandExample) {
  const MlpD mlp = TwoNeuronNet();
  FeatureMatrix v(3, 1);
  v << -1.0, 0.0, 2.0;
  const ActivationStats s = ComputeActivationStats(mlp, v);
  ASSERT_EQ(s.mean.size(), 1u);
  EXPECT_NEAR(s.mean[0][0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.mean[0][1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.binary[0][0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.binary[0][1], 1.0 / 3.0, 1e-15);

  const auto by_mean = NeuronPruneOrder(s, PruneScope::kAllLayers, ActivationMode::kMean);
  ASSERT_EQ(by_mean.size(), 2u);
  EXPECT_EQ(by_mean[0].neuron, 1);
  EXPECT_EQ(by_mean[1].neuron, 0);
  const auto by_binary =
      NeuronPruneOrder(s, PruneScope::kAllLayers, ActivationMode::kBinary);
  EXPECT_EQ(by_binary[0].neuron, 0);  // tie goes to the lower index
  EXPECT_EQ(by_binary[1].step, 1);
}

TEST(ActivationStatsTest, EmptyValidationRejected) {
  EXPECT_THROW(ComputeActivationStats(TwoNeuronNet(), FeatureMatrix(0, 1)),
               ConfigError);
}

ActivationStats FakeStats(std::vector<std::vector<double>> means) {
  ActivationStats s;
  for (const auto& layer : means) {
    s.mean.push_back(Eigen::Map<const Eigen::VectorXd>(layer.data(),
                                                       static_cast<Eigen::Index>(layer.size())));
    s.binary.push_back(s.mean.back());
    s.pruned.push_back(Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(
        static_cast<Eigen::Index>(layer.size()), false));
  }
  return s;
}

TEST(NeuronPruneOrderTest, LeastActiveFirstWithinScope) {
  ActivationStats s = FakeStats({{0.9, 0.1}, {0.5, 0.2, 0.05}});
  const auto all = NeuronPruneOrder(s, PruneScope::kAllLayers, ActivationMode::kMean);
  ASSERT_EQ(all.size(), 5u);
  EXPECT_EQ(all[0].layer, 1);
  EXPECT_EQ(all[0].neuron, 2);
  EXPECT_EQ(all[1].layer, 0);
  EXPECT_EQ(all[1].neuron, 1);
  EXPECT_EQ(all[4].neuron, 0);
  EXPECT_EQ(all[4].layer, 0);
  const auto first = NeuronPruneOrder(s, PruneScope::kFirstLayer, ActivationMode::kMean);
  ASSERT_EQ(first.size(), 2u);
  EXPECT_EQ(first[0].neuron, 1);  // {0.1, 0.9}
  EXPECT_EQ(first[1].neuron, 0);
  const auto last = NeuronPruneOrder(s, PruneScope::kLastLayer, ActivationMode::kMean);
  ASSERT_EQ(last.size(), 3u);
  for (const auto& e : last) EXPECT_EQ(e.layer, 1);
  // An already pruned neuron leads regardless of its statistic.
  s.pruned[0][0] = true;
  EXPECT_EQ(NeuronPruneOrder(s, PruneScope::kFirstLayer, ActivationMode::kMean)[0].neuron, 0);
}

TEST(NeuronPruneOrderTest, ParsesNames) {
  EXPECT_EQ(ParsePruneScope("all"), PruneScope::kAllLayers);
  EXPECT_EQ(ParsePruneScope("first"), PruneScope::kFirstLayer);
  EXPECT_EQ(ParsePruneScope("last"), PruneScope::kLastLayer);
  EXPECT_EQ(ParseActivationMode("binary"), ActivationMode::kBinary);
  EXPECT_THROW(ParsePruneScope("middle"), ConfigError);
  EXPECT_THROW(ParseActivationMode("max"), ConfigError);
}

TEST(PruneNeuronsTest, WholeLastLayerLeavesOutputBias) {
  MlpShape shape;
  shape.hidden = {6, 4};
  Mlp mlp = Mlp::Create(3, shape, 21);
  mlp.layers.back().b[0] = 0.7f;
  const FeatureMatrix v = RandomRows(30, 3, 22);
  const auto pruned = PruneNeurons(mlp, ComputeActivationStats(mlp, v),
                                   PruneScope::kLastLayer, ActivationMode::kMean, 1.0);
  EXPECT_EQ(pruned.size(), 4u);
  const double expected = 1.0 / (1.0 + std::exp(-0.7f));
  for (double s : mlp.Predict(v)) EXPECT_NEAR(s, expected, 1e-7);
}

TEST(PruneNeuronsTest, FloorOfFractionAndIdempotent) {
  MlpShape shape;
  shape.hidden = {10, 10};
  Mlp mlp = Mlp::Create(3, shape, 23);
  const FeatureMatrix v = RandomRows(30, 3, 24);
  const auto first = PruneNeurons(mlp, ComputeActivationStats(mlp, v),
                                  PruneScope::kAllLayers, ActivationMode::kMean, 0.37);
  EXPECT_EQ(first.size(), 7u);
  EXPECT_EQ(mlp.PrunedCount(), 7);
  const std::string once = MlpToJson(mlp).dump();
  PruneNeurons(mlp, ComputeActivationStats(mlp, v), PruneScope::kAllLayers,
               ActivationMode::kMean, 0.37);
  EXPECT_EQ(MlpToJson(mlp).dump(), once);
  EXPECT_THROW(PruneNeurons(mlp, ComputeActivationStats(mlp, v),
                            PruneScope::kAllLayers, ActivationMode::kMean, 1.2),
               ConfigError);
  EXPECT_THROW(mlp.PruneNeuron(2, 0), ConfigError);
}

TEST(PruneNeuronsSweepTest, CheckpointsAndLog) {
  MlpShape shape;
  shape.hidden = {8, 8};
  Mlp mlp = Mlp::Create(3, shape, 25);
  const FeatureMatrix v = RandomRows(30, 3, 26);
  const auto order = NeuronPruneOrder(ComputeActivationStats(mlp, v),
                                      PruneScope::kAllLayers, ActivationMode::kMean);
  std::vector<NeuronPruneEntry> log;
  const auto curve = PruneNeuronsSweep(mlp, order, 0.5, SmallEval(), 4, &log);
  ASSERT_EQ(curve.size(), 5u);
  EXPECT_EQ(curve.front().step, 0);
  EXPECT_EQ(curve.back().step, 8);
  EXPECT_DOUBLE_EQ(curve.back().fraction, 0.5);
  ASSERT_EQ(log.size(), 8u);
  for (std::size_t i = 0; i < log.size(); ++i) EXPECT_EQ(log[i].step, order[i].step);
  EXPECT_EQ(mlp.PrunedCount(), 8);
}

TEST(FinetuneTest, ZeroLearningRateOrEpochsIsIdentity) {
  FeatureMatrix x;
  Eigen::VectorXi y;
  Blobs(60, 27, &x, &y);
  MlpShape shape;
  shape.hidden = {8};
  const Mlp original = Mlp::Create(3, shape, 28);
  TrainParams p;
  p.epochs = 3;
  p.batch = 16;
  p.lr = 0.0;
  Mlp a = original;
  const auto curve = Finetune(a, x, y, p, SmallEval());
  EXPECT_EQ(curve.size(), 4u);
  EXPECT_EQ(MlpToJson(a).dump(), MlpToJson(original).dump());
  p.lr = 0.1;
  p.epochs = 0;
  Mlp b = original;
  EXPECT_EQ(Finetune(b, x, y, p, SmallEval()).size(), 1u);
  EXPECT_EQ(MlpToJson(b).dump(), MlpToJson(original).dump());
}

TEST(FinePruneTest, NothingToDoIsIdentity) {
  FeatureMatrix x;
  Eigen::VectorXi y;
  Blobs(60, 29, &x, &y);
  MlpShape shape;
  shape.hidden = {8, 8};
  const Mlp original = Mlp::Create(3, shape, 30);
  Mlp mlp = original;
  TrainParams p;
  p.epochs = 0;
  const FinePruneReport r = FinePrune(mlp, x, y, PruneScope::kAllLayers,
                                      ActivationMode::kMean, 0.0, p, SmallEval());
  EXPECT_TRUE(r.prune_log.empty());
  EXPECT_EQ(MlpToJson(mlp).dump(), MlpToJson(original).dump());
  EXPECT_EQ(r.backdoor_before, r.backdoor_after);
  EXPECT_FALSE(r.backdoor_dropped);
}

TEST(CorrelationTest, PearsonBasics) {
  Eigen::VectorXd flags(4);
  flags << 0, 0, 1, 1;
  const auto [r, undefined] = PearsonCorrelation(3.0 * flags.array() + 1.0, flags);
  EXPECT_NEAR(r, 1.0, 1e-15);
  EXPECT_FALSE(undefined);
  EXPECT_NEAR(PearsonCorrelation(-flags, flags).first, -1.0, 1e-15);
  const auto constant = PearsonCorrelation(Eigen::VectorXd::Constant(4, 2.0), flags);
  EXPECT_EQ(constant.first, 0.0);
  EXPECT_TRUE(constant.second);
  EXPECT_THROW(PearsonCorrelation(flags.head(3), flags), DimensionError);
}

TEST(CorrelationTest, NeuronRecordsFromHandNet) {
  const MlpD mlp = TwoNeuronNet();
  FeatureMatrix x(4, 1);
  x << -1.0, -2.0, 1.0, 3.0;
  Eigen::VectorXi bd(4);
  bd << 0, 0, 1, 1;
  const std::vector<NeuronPruneEntry> log = {{0, 0, 1, 0.0}, {1, 0, 0, 0.0}};
  const auto rec = NeuronBackdoorCorrelation(mlp, x, bd, log);
  ASSERT_EQ(rec.size(), 2u);
  EXPECT_EQ(rec[0].neuron_id, 1);
  EXPECT_EQ(rec[1].step, 1);
  // relu(-x) = {1, 2, 0, 0}, relu(x) = {0, 0, 1, 3}.
  EXPECT_NEAR(rec[0].correlation,
              PearsonCorrelation(Eigen::Vector4d(1, 2, 0, 0), bd.cast<double>()).first,
              1e-15);
  EXPECT_NEAR(rec[1].correlation,
              PearsonCorrelation(Eigen::Vector4d(0, 0, 1, 3), bd.cast<double>()).first,
              1e-15);
  // Replaying the log makes no difference to a single-layer net's later
  // neurons: pruning neuron 1 leaves neuron 0's activations alone.
  const auto replayed = NeuronBackdoorCorrelation(mlp, x, bd, log, 1);
  EXPECT_NEAR(replayed[1].correlation, rec[1].correlation, 1e-15);
  EXPECT_EQ(CorrelationCsv(rec).substr(0, 46),
            "prune_step,neuron_id,correlation,undefined_fla");
}

TEST(MlpIoTest, JsonRoundTripIsExact) {
  MlpShape shape;
  shape.hidden = {7, 5};
  Mlp mlp = Mlp::Create(4, shape, 31);
  mlp.PruneNeuron(1, 3);
  const auto j = MlpToJson(mlp);
  const Mlp back = MlpFromJson<float>(j);
  EXPECT_EQ(MlpToJson(back).dump(), j.dump());
  const FeatureMatrix x = RandomRows(20, 4, 32);
  EXPECT_EQ(back.Predict(x), mlp.Predict(x));
  EXPECT_EQ(back.PrunedCount(), 1);
}

TEST(MlpIoTest, RejectsPrunedOutputAndBadSizes) {
  MlpShape shape;
  shape.hidden = {3};
  auto j = MlpToJson(Mlp::Create(2, shape, 1));
  auto bad = j;
  bad["layers"][1]["mask"][0] = true;
  EXPECT_THROW(MlpFromJson<float>(bad), ParseError);
  bad = j;
  bad["layers"][0]["b"].erase(0);
  EXPECT_THROW(MlpFromJson<float>(bad), ParseError);
  bad = j;
  bad.erase("dims");
  EXPECT_THROW(MlpFromJson<float>(bad), ParseError);
}

TEST(MlpIoTest, PruneLogCsvRoundTrip) {
  const std::vector<NeuronPruneEntry> log = {{0, 1, 4, 0.0}, {1, 0, 2, 0.25}};
  const auto back = ParsePruneLogCsv(PruneLogCsv(log), "log.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].layer, 0);
  EXPECT_EQ(back[1].neuron, 2);
  EXPECT_EQ(back[1].statistic, 0.25);
  EXPECT_THROW(ParsePruneLogCsv("a,b\n", "log.csv"), ParseError);
  EXPECT_THROW(ParsePruneLogCsv("step,layer,neuron,statistic\n1,2\n", "log.csv"),
               ParseError);
}

}  // namespace
}  // namespace idsbd
