#include "idsbd/explain.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "idsbd/error.h"
#include "idsbd/io.h"

namespace idsbd {
namespace {

void CheckFeature(const FeatureMatrix& x, int feature_index) {
  if (feature_index < 0 || feature_index >= x.cols()) {
    throw DimensionError("feature index " + std::to_string(feature_index) +
                         " outside [0, " + std::to_string(x.cols()) + ")");
  }
}

void CheckGrid(const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw ConfigError("grid must be strictly ascending");
    }
  }
}

Eigen::VectorXd ScoreClamped(const Predictor& f, FeatureMatrix& work,
                             int feature_index, double w) {
  work.col(feature_index).setConstant(w);
  return f.Score(work);
}

}  // namespace

Eigen::VectorXd ForestPredictor::Score(const FeatureMatrix& x) const {
  return norm_ ? PredictScores(forest_, ZScoreApply(*norm_, x))
               : PredictScores(forest_, x);
}

std::vector<double> MakeGrid(const FeatureMatrix& x, int feature_index,
                             int n_points,
                             std::optional<std::pair<double, double>> range) {
  if (n_points < 2) throw ConfigError("grid needs at least 2 points");
  std::vector<double> grid;
  if (range) {
    const auto [lo, hi] = *range;
    if (!(hi > lo)) throw ConfigError("grid range must have hi > lo");
    for (int i = 0; i < n_points; ++i) {
      grid.push_back(i + 1 == n_points
                         ? hi
                         : lo + (hi - lo) * static_cast<double>(i) /
                                    static_cast<double>(n_points - 1));
    }
    return grid;
  }
  CheckFeature(x, feature_index);
  if (x.rows() == 0) throw ConfigError("feature column is empty");
  std::vector<double> values(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) values[r] = x(r, feature_index);
  std::sort(values.begin(), values.end());
  for (int i = 0; i < n_points; ++i) {
    // Nearest-rank quantile at i / (n_points - 1).
    const double q = static_cast<double>(i) / (n_points - 1);
    const auto idx = static_cast<std::size_t>(
        std::llround(q * static_cast<double>(values.size() - 1)));
    grid.push_back(values[idx]);
  }
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

ExplainCurve Pdp(const Predictor& f, const FeatureMatrix& x, int feature_index,
                 const std::vector<double>& grid) {
  CheckFeature(x, feature_index);
  CheckGrid(grid);
  if (x.rows() == 0) throw ConfigError("PDP needs a non-empty dataset");
  ExplainCurve curve;
  curve.feature_index = feature_index;
  curve.kind = CurveKind::kPdp;
  curve.grid = grid;
  FeatureMatrix work = x;
  for (double w : grid) {
    curve.values.push_back(ScoreClamped(f, work, feature_index, w).mean());
  }
  return curve;
}

ExplainCurve Ale(const Predictor& f, const FeatureMatrix& x, int feature_index,
                 const std::vector<double>& grid, int k) {
  CheckFeature(x, feature_index);
  CheckGrid(grid);
  if (k < 1) throw ConfigError("ALE needs k >= 1");
  if (k > x.rows()) {
    throw ConfigError("ALE needs at least k = " + std::to_string(k) + " rows");
  }
  ExplainCurve curve;
  curve.feature_index = feature_index;
  curve.kind = CurveKind::kAle;
  curve.grid = grid;
  curve.k_neighbors = k;

  std::vector<int> rows(static_cast<std::size_t>(x.rows()));
  std::vector<double> accumulated = {0.0};
  for (std::size_t j = 1; j < grid.size(); ++j) {
    const double mid = grid[j - 1] + (grid[j] - grid[j - 1]) / 2.0;
    std::iota(rows.begin(), rows.end(), 0);
    std::partial_sort(rows.begin(), rows.begin() + k, rows.end(),
                      [&](int a, int b) {
                        const double da = std::abs(x(a, feature_index) - mid);
                        const double db = std::abs(x(b, feature_index) - mid);
                        if (da != db) return da < db;
                        return a < b;
                      });
    const std::vector<int> nearest(rows.begin(), rows.begin() + k);
    FeatureMatrix work = x(nearest, Eigen::all);
    const Eigen::VectorXd hi = ScoreClamped(f, work, feature_index, grid[j]);
    const Eigen::VectorXd lo = ScoreClamped(f, work, feature_index, grid[j - 1]);
    accumulated.push_back(accumulated.back() + (hi - lo).mean());
  }
  const double mean =
      std::accumulate(accumulated.begin(), accumulated.end(), 0.0) /
      static_cast<double>(accumulated.size());
  for (double a : accumulated) curve.values.push_back(a - mean);
  return curve;
}

std::string ExplainCurveCsv(const ExplainCurve& curve) {
  const auto& names = FeatureNames();
  const auto idx = static_cast<std::size_t>(curve.feature_index);
  const std::string name =
      idx < names.size() ? names[idx] : "x" + std::to_string(idx);
  const char* kind = curve.kind == CurveKind::kPdp ? "pdp" : "ale";
  std::string out = "feature_name,kind,w,value\n";
  for (std::size_t i = 0; i < curve.grid.size(); ++i) {
    out += name + "," + kind + "," + FormatDouble(curve.grid[i]) + "," +
           FormatDouble(curve.values[i]) + "\n";
  }
  return out;
}

}  // namespace idsbd
