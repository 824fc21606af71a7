#ifndef IDSBD_FOREST_H_
#define IDSBD_FOREST_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "idsbd/features.h"
#include "idsbd/metrics.h"
#include "json.hpp"

namespace idsbd {

// One node of a CART tree. Leaves have feature == -1. Rows with
// x[feature] < threshold go left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int parent = -1;
  // Leaf payload.
  int n0 = 0;
  int n1 = 0;
  int usage = 0;
  int depth = 0;

  bool is_leaf() const { return feature < 0; }
  double prediction() const {
    const int n = n0 + n1;
    return n == 0 ? 0.0 : static_cast<double>(n1) / n;
  }
  int predicted_class() const { return prediction() >= 0.5 ? 1 : 0; }
};

// Flat node storage. Node indices never move, so a leaf index is a stable
// identifier even after pruning detaches other nodes.
class Tree {
 public:
  std::vector<TreeNode> nodes;
  int root = 0;

  template <typename Row>
  int Route(const Row& x) const {
    int n = root;
    while (!nodes[n].is_leaf()) {
      const TreeNode& node = nodes[n];
      n = x[node.feature] < node.threshold ? node.left : node.right;
    }
    return n;
  }

  template <typename Row>
  double Predict(const Row& x) const {
    return nodes[Route(x)].prediction();
  }

  // Leaves reachable from the root, in pre-order (left first).
  std::vector<int> Leaves() const;
  int LeafCount() const;
  int MaxDepth() const;

  // Removes `leaf` by replacing its parent with the leaf's sibling subtree;
  // depths below the sibling drop by one. Returns the sibling index.
  // Throws Error if `leaf` is the root.
  int CollapseLeaf(int leaf);
};

struct ForestParams {
  int n_estimators = 100;
  int max_depth = -1;  // -1: unbounded
  int min_samples_leaf = 1;
  int max_features = 0;  // 0: floor(sqrt(n_features))
  bool bootstrap = true;
  std::uint64_t seed = 1;
};

struct Forest {
  ForestParams params;
  int n_features = 0;
  std::vector<Tree> trees;

  int LeafCount() const;
};

// Throws TrainingError if only one class is present.
Forest TrainForest(const FeatureMatrix& x, const Eigen::VectorXi& y,
                   const ForestParams& params, int threads = 0);
inline Forest TrainForest(const Dataset& train, const ForestParams& params,
                          int threads = 0) {
  return TrainForest(train.x, train.y, params, threads);
}

// Mean leaf prediction over trees. Throws DimensionError on a column
// mismatch.
Eigen::VectorXd PredictScores(const Forest& forest, const FeatureMatrix& x);

// Resets every counter, then counts validation rows per leaf.
void RecordLeafUsage(Forest& forest, const FeatureMatrix& validation);

enum class PruneVariant {
  kUsage = 1,        // all leaves, least used first
  kBenignUsage = 2,  // only leaves predicting benign
  kBenignUsageDepth = 3,  // as 2, usage ties pruned shallow first
};

struct PruneOptions {
  PruneVariant variant = PruneVariant::kBenignUsageDepth;
  double fraction = 0.9;          // of initially eligible leaves
  double checkpoint_every = 0.01;  // fraction between curve points
};

struct PruneStep {
  int tree = 0;
  int leaf = 0;
  int usage = 0;
  int depth = 0;
  int predicted_class = 0;
};

struct PrunePoint {
  int step = 0;
  double fraction_pruned = 0.0;
  double clean_accuracy = 0.0;
  double backdoor_accuracy = 0.0;
};

struct PruneReport {
  int eligible_leaves = 0;
  std::vector<PruneStep> steps;
  std::vector<PrunePoint> curve;
};

// Records leaf usage on `validation`, then prunes leaves in the variant's
// order. Ties beyond usage (and depth for variant 3) go to the lower
// (tree, leaf) id. A tree that is down to one leaf is never pruned further.
PruneReport PruneForest(Forest& forest, const FeatureMatrix& validation,
                        const PruneOptions& options, const EvalSet& eval);

std::string PruneReportCsv(const PruneReport& report);

nlohmann::ordered_json ForestToJson(const Forest& forest);
Forest ForestFromJson(const nlohmann::ordered_json& j);
void SaveForest(const Forest& forest, const std::filesystem::path& path);
Forest LoadForest(const std::filesystem::path& path);

}  // namespace idsbd

#endif  // IDSBD_FOREST_H_
