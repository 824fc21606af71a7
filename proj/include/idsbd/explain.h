#ifndef IDSBD_EXPLAIN_H_
#define IDSBD_EXPLAIN_H_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "idsbd/features.h"
#include "idsbd/forest.h"
#include "idsbd/mlp.h"

namespace idsbd {

// Scores raw feature rows in [0, 1]. Implementations must not mutate state.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Eigen::VectorXd Score(const FeatureMatrix& x) const = 0;
};

// Normalizes rows with `norm` (if given) before handing them to the model.
class ForestPredictor : public Predictor {
 public:
  explicit ForestPredictor(const Forest& forest,
                           std::optional<NormStats> norm = std::nullopt)
      : forest_(forest), norm_(std::move(norm)) {}
  Eigen::VectorXd Score(const FeatureMatrix& x) const override;

 private:
  const Forest& forest_;
  std::optional<NormStats> norm_;
};

template <typename Scalar>
class MlpPredictor : public Predictor {
 public:
  explicit MlpPredictor(const MlpT<Scalar>& mlp,
                        std::optional<NormStats> norm = std::nullopt)
      : mlp_(mlp), norm_(std::move(norm)) {}
  Eigen::VectorXd Score(const FeatureMatrix& x) const override {
    return norm_ ? mlp_.Predict(ZScoreApply(*norm_, x)) : mlp_.Predict(x);
  }

 private:
  const MlpT<Scalar>& mlp_;
  std::optional<NormStats> norm_;
};

enum class CurveKind { kPdp, kAle };

struct ExplainCurve {
  int feature_index = 0;
  CurveKind kind = CurveKind::kPdp;
  std::vector<double> grid;    // strictly ascending
  std::vector<double> values;  // one per grid point
  int k_neighbors = 0;         // ALE only
};

// Equally spaced quantiles of column `feature_index` with duplicates
// collapsed, or a linear grid over `range` when given.
std::vector<double> MakeGrid(const FeatureMatrix& x, int feature_index,
                             int n_points,
                             std::optional<std::pair<double, double>> range =
                                 std::nullopt);

// value(w) = mean over rows of f(row with feature i set to w).
ExplainCurve Pdp(const Predictor& f, const FeatureMatrix& x, int feature_index,
                 const std::vector<double>& grid);

// Accumulated local effects: between adjacent grid points the effect is the
// mean prediction difference over the k rows whose feature value is closest
// to the interval midpoint (ties by row index); the accumulated curve is
// shifted to zero mean over the grid.
ExplainCurve Ale(const Predictor& f, const FeatureMatrix& x, int feature_index,
                 const std::vector<double>& grid, int k = 10);

// CSV with columns feature_name, kind, w, value.
std::string ExplainCurveCsv(const ExplainCurve& curve);

}  // namespace idsbd

#endif  // IDSBD_EXPLAIN_H_
