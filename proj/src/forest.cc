#include "idsbd/forest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <limits>
#include <tuple>

#include "idsbd/error.h"
#include "idsbd/io.h"
#include "idsbd/parallel.h"

namespace idsbd {
namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double Gini(double n0, double n1) {
  const double n = n0 + n1;
  if (n <= 0.0) return 0.0;
  const double p0 = n0 / n;
  const double p1 = n1 / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, const Eigen::VectorXi& y,
              const ForestParams& params, int max_features, std::uint64_t seed)
      : x_(x), y_(y), params_(params), max_features_(max_features),
        rng_(seed) {}

  Tree Build() {
    const auto n = static_cast<int>(x_.rows());
    std::vector<int> sample(static_cast<std::size_t>(n));
    if (params_.bootstrap) {
      std::uniform_int_distribution<int> pick(0, n - 1);
      for (int& s : sample) s = pick(rng_);
    } else {
      std::iota(sample.begin(), sample.end(), 0);
    }
    tree_.nodes.reserve(256);
    tree_.root = Grow(sample, 0, -1);
    return std::move(tree_);
  }

 private:
  int Grow(std::vector<int>& rows, int depth, int parent) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    int n1 = 0;
    for (int r : rows) n1 += y_[r];
    const int n0 = static_cast<int>(rows.size()) - n1;
    {
      TreeNode& node = tree_.nodes[id];
      node.parent = parent;
      node.depth = depth;
      node.n0 = n0;
      node.n1 = n1;
    }
    const bool depth_limited =
        params_.max_depth >= 0 && depth >= params_.max_depth;
    if (n0 == 0 || n1 == 0 || depth_limited ||
        static_cast<int>(rows.size()) < 2 * params_.min_samples_leaf) {
      return id;
    }
    const SplitChoice split = FindSplit(rows, n0, n1);
    if (split.feature < 0) return id;

    std::vector<int> left, right;
    for (int r : rows) {
      (x_(r, split.feature) < split.threshold ? left : right).push_back(r);
    }
    std::vector<int>().swap(rows);
    const int l = Grow(left, depth + 1, id);
    const int rgt = Grow(right, depth + 1, id);
    TreeNode& node = tree_.nodes[id];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = rgt;
    node.n0 = node.n1 = 0;
    return id;
  }

  SplitChoice FindSplit(const std::vector<int>& rows, int n0, int n1) {
    const auto d = static_cast<int>(x_.cols());
    std::vector<int> features(static_cast<std::size_t>(d));
    std::iota(features.begin(), features.end(), 0);
    SplitChoice best;
    best.impurity = std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(rows.size());
    std::vector<std::pair<double, int>> column(rows.size());
    int visited = 0;
    // Sample features without replacement; constant features do not count
    // towards max_features.
    for (int k = 0; k < d && visited < max_features_; ++k) {
      const int j = std::uniform_int_distribution<int>(k, d - 1)(rng_);
      std::swap(features[k], features[j]);
      const int f = features[k];
      for (std::size_t i = 0; i < rows.size(); ++i) {
        column[i] = {x_(rows[i], f), y_[rows[i]]};
      }
      std::sort(column.begin(), column.end());
      if (column.front().first == column.back().first) continue;
      ++visited;
      double left0 = 0.0, left1 = 0.0;
      const std::size_t min_leaf =
          static_cast<std::size_t>(params_.min_samples_leaf);
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        (column[i].second ? left1 : left0) += 1.0;
        if (column[i].first == column[i + 1].first) continue;
        const std::size_t n_left = i + 1;
        if (n_left < min_leaf || column.size() - n_left < min_leaf) continue;
        const double right0 = n0 - left0;
        const double right1 = n1 - left1;
        const double impurity =
            ((left0 + left1) * Gini(left0, left1) +
             (right0 + right1) * Gini(right0, right1)) / n;
        if (impurity < best.impurity) {
          const double a = column[i].first;
          const double b = column[i + 1].first;
          double t = a + (b - a) / 2.0;
          if (!(t > a)) t = b;
          best = {f, t, impurity};
        }
      }
    }
    return best;
  }

  const FeatureMatrix& x_;
  const Eigen::VectorXi& y_;
  const ForestParams& params_;
  int max_features_;
  std::mt19937_64 rng_;
  Tree tree_;
};

void CheckColumns(const Forest& forest, Eigen::Index cols) {
  if (cols != forest.n_features) {
    throw DimensionError("forest expects " + std::to_string(forest.n_features) +
                         " features, got " + std::to_string(cols));
  }
}

}  // namespace

std::vector<int> Tree::Leaves() const {
  std::vector<int> out;
  std::vector<int> stack = {root};
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    if (nodes[n].is_leaf()) {
      out.push_back(n);
    } else {
      stack.push_back(nodes[n].right);
      stack.push_back(nodes[n].left);
    }
  }
  return out;
}

int Tree::LeafCount() const { return static_cast<int>(Leaves().size()); }

int Tree::MaxDepth() const {
  int m = 0;
  for (int leaf : Leaves()) m = std::max(m, nodes[leaf].depth);
  return m;
}

int Tree::CollapseLeaf(int leaf) {
  const int parent = nodes[leaf].parent;
  if (parent < 0) throw Error("cannot prune the root of a tree");
  const int sibling =
      nodes[parent].left == leaf ? nodes[parent].right : nodes[parent].left;
  const int grand = nodes[parent].parent;
  if (grand < 0) {
    root = sibling;
  } else if (nodes[grand].left == parent) {
    nodes[grand].left = sibling;
  } else {
    nodes[grand].right = sibling;
  }
  nodes[sibling].parent = grand;
  nodes[leaf].parent = -1;
  nodes[parent].parent = -1;
  nodes[parent].left = nodes[parent].right = -1;
  std::vector<int> stack = {sibling};
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    --nodes[n].depth;
    if (!nodes[n].is_leaf()) {
      stack.push_back(nodes[n].left);
      stack.push_back(nodes[n].right);
    }
  }
  return sibling;
}

int Forest::LeafCount() const {
  int total = 0;
  for (const Tree& t : trees) total += t.LeafCount();
  return total;
}

Forest TrainForest(const FeatureMatrix& x, const Eigen::VectorXi& y,
                   const ForestParams& params, int threads) {
  if (params.n_estimators < 1) throw ConfigError("n_estimators must be >= 1");
  if (params.min_samples_leaf < 1) {
    throw ConfigError("min_samples_leaf must be >= 1");
  }
  if (x.rows() != y.size()) throw DimensionError("label count != row count");
  if (x.rows() == 0) throw TrainingError("empty training set");
  const Eigen::Index positives = (y.array() == 1).count();
  if (positives == 0 || positives == y.size()) {
    throw TrainingError("training data must contain both classes");
  }
  const auto d = static_cast<int>(x.cols());
  int max_features = params.max_features;
  if (max_features <= 0) {
    max_features = std::max(1, static_cast<int>(std::sqrt(double(d))));
  }
  max_features = std::min(max_features, d);

  Forest forest;
  forest.params = params;
  forest.n_features = d;
  forest.trees.resize(static_cast<std::size_t>(params.n_estimators));
  ParallelFor(forest.trees.size(), threads > 0 ? threads : DefaultThreadCount(),
              [&](std::size_t t) {
                TreeBuilder builder(x, y, params, max_features,
                                    SplitMix64(params.seed ^ SplitMix64(t)));
                forest.trees[t] = builder.Build();
              });
  return forest;
}

Eigen::VectorXd PredictScores(const Forest& forest, const FeatureMatrix& x) {
  CheckColumns(forest, x.cols());
  Eigen::VectorXd scores(x.rows());
  const double n_trees = static_cast<double>(forest.trees.size());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double sum = 0.0;
    for (const Tree& t : forest.trees) sum += t.Predict(row);
    scores[r] = sum / n_trees;
  }
  return scores;
}

void RecordLeafUsage(Forest& forest, const FeatureMatrix& validation) {
  CheckColumns(forest, validation.cols());
  for (Tree& t : forest.trees) {
    for (TreeNode& n : t.nodes) n.usage = 0;
    for (Eigen::Index r = 0; r < validation.rows(); ++r) {
      ++t.nodes[t.Route(validation.row(r))].usage;
    }
  }
}

PruneReport PruneForest(Forest& forest, const FeatureMatrix& validation,
                        const PruneOptions& options, const EvalSet& eval) {
  if (!(options.fraction >= 0.0 && options.fraction <= 1.0)) {
    throw ConfigError("prune fraction must be in [0, 1]");
  }
  if (!(options.checkpoint_every > 0.0)) {
    throw ConfigError("checkpoint interval must be positive");
  }
  CheckColumns(forest, validation.cols());
  RecordLeafUsage(forest, validation);

  // Validation rows per leaf, so usage can follow rows into the sibling
  // subtree when a used leaf is removed.
  std::vector<std::vector<std::vector<int>>> rows_at(forest.trees.size());
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    Tree& tree = forest.trees[t];
    rows_at[t].resize(tree.nodes.size());
    for (Eigen::Index r = 0; r < validation.rows(); ++r) {
      rows_at[t][tree.Route(validation.row(r))].push_back(static_cast<int>(r));
    }
  }

  const bool benign_only = options.variant != PruneVariant::kUsage;
  const bool use_depth = options.variant == PruneVariant::kBenignUsageDepth;
  using Key = std::tuple<int, int, int, int>;  // usage, depth, tree, leaf
  auto key_of = [&](int t, int leaf) {
    const TreeNode& n = forest.trees[t].nodes[leaf];
    return Key{n.usage, use_depth ? n.depth : 0, t, leaf};
  };
  auto eligible = [&](const TreeNode& n) {
    return !benign_only || n.predicted_class() == 0;
  };

  std::set<Key> queue;
  std::vector<int> leaf_count(forest.trees.size());
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const auto leaves = forest.trees[t].Leaves();
    leaf_count[t] = static_cast<int>(leaves.size());
    if (leaves.size() < 2) continue;
    for (int leaf : leaves) {
      if (eligible(forest.trees[t].nodes[leaf])) {
        queue.insert(key_of(static_cast<int>(t), leaf));
      }
    }
  }

  PruneReport report;
  report.eligible_leaves = static_cast<int>(queue.size());
  const int target_steps = static_cast<int>(
      std::floor(options.fraction * report.eligible_leaves + 1e-9));

  auto checkpoint = [&](int step) {
    PrunePoint p;
    p.step = step;
    p.fraction_pruned =
        report.eligible_leaves == 0
            ? 0.0
            : static_cast<double>(step) / report.eligible_leaves;
    p.clean_accuracy = Accuracy(PredictScores(forest, eval.clean_x), eval.clean_y);
    p.backdoor_accuracy =
        TargetRate(PredictScores(forest, eval.backdoor_x), eval.target_label);
    report.curve.push_back(p);
  };

  checkpoint(0);
  double next_mark = options.checkpoint_every;
  int step = 0;
  while (step < target_steps && !queue.empty()) {
    const auto [usage, depth_key, t, leaf] = *queue.begin();
    queue.erase(queue.begin());
    Tree& tree = forest.trees[t];
    const TreeNode& pruned = tree.nodes[leaf];
    report.steps.push_back(
        {t, leaf, pruned.usage, pruned.depth, pruned.predicted_class()});

    // Remove queue entries whose keys are about to change.
    const int parent = pruned.parent;
    const int sibling = tree.nodes[parent].left == leaf
                            ? tree.nodes[parent].right
                            : tree.nodes[parent].left;
    std::vector<int> moved;
    {
      std::vector<int> stack = {sibling};
      while (!stack.empty()) {
        const int n = stack.back();
        stack.pop_back();
        if (tree.nodes[n].is_leaf()) {
          moved.push_back(n);
        } else {
          stack.push_back(tree.nodes[n].left);
          stack.push_back(tree.nodes[n].right);
        }
      }
    }
    for (int m : moved) queue.erase(key_of(t, m));

    tree.CollapseLeaf(leaf);
    for (int r : rows_at[t][leaf]) {
      int n = sibling;
      const auto row = validation.row(r);
      while (!tree.nodes[n].is_leaf()) {
        const TreeNode& node = tree.nodes[n];
        n = row[node.feature] < node.threshold ? node.left : node.right;
      }
      ++tree.nodes[n].usage;
      rows_at[t][n].push_back(r);
    }
    tree.nodes[leaf].usage = 0;
    rows_at[t][leaf].clear();
    --leaf_count[t];

    if (leaf_count[t] >= 2) {
      for (int m : moved) {
        if (eligible(tree.nodes[m])) queue.insert(key_of(t, m));
      }
    } else {
      // Down to one leaf: drop whatever remains of this tree from the queue.
      for (auto it = queue.begin(); it != queue.end();) {
        it = std::get<2>(*it) == t ? queue.erase(it) : std::next(it);
      }
    }
    ++step;
    const double done =
        static_cast<double>(step) / std::max(1, report.eligible_leaves);
    if (done + 1e-12 >= next_mark || step == target_steps) {
      checkpoint(step);
      while (next_mark <= done + 1e-12) next_mark += options.checkpoint_every;
    }
  }
  if (report.curve.back().step != step) checkpoint(step);
  return report;
}

std::string PruneReportCsv(const PruneReport& report) {
  std::string out = "step,fraction_pruned,clean_accuracy,backdoor_accuracy\n";
  for (const PrunePoint& p : report.curve) {
    out += std::to_string(p.step) + "," + FormatDouble(p.fraction_pruned) +
           "," + FormatDouble(p.clean_accuracy) + "," +
           FormatDouble(p.backdoor_accuracy) + "\n";
  }
  return out;
}

namespace {

nlohmann::ordered_json NodeToJson(const Tree& tree, int n) {
  const TreeNode& node = tree.nodes[n];
  nlohmann::ordered_json j;
  if (node.is_leaf()) {
    j["n0"] = node.n0;
    j["n1"] = node.n1;
    j["usage"] = node.usage;
    j["depth"] = node.depth;
  } else {
    j["f"] = node.feature;
    j["t"] = node.threshold;
    j["l"] = NodeToJson(tree, node.left);
    j["r"] = NodeToJson(tree, node.right);
  }
  return j;
}

int NodeFromJson(const nlohmann::ordered_json& j, Tree& tree, int parent,
                 int depth, int n_features, const std::string& path) {
  if (!j.is_object()) throw ParseError(path + ": node is not an object");
  const bool has_split = j.contains("f") || j.contains("t") ||
                         j.contains("l") || j.contains("r");
  const bool has_leaf = j.contains("n0") || j.contains("n1") ||
                        j.contains("usage") || j.contains("depth");
  if (has_split == has_leaf) {
    throw ParseError(path + ": node must be either a split or a leaf");
  }
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes[id].parent = parent;
  tree.nodes[id].depth = depth;
  try {
    if (has_leaf) {
      for (const char* key : {"n0", "n1", "usage", "depth"}) {
        if (!j.contains(key)) {
          throw ParseError(path + ": leaf is missing '" + key + "'");
        }
      }
      TreeNode& node = tree.nodes[id];
      node.n0 = j.at("n0").get<int>();
      node.n1 = j.at("n1").get<int>();
      node.usage = j.at("usage").get<int>();
      if (node.n0 < 0 || node.n1 < 0 || node.n0 + node.n1 == 0 ||
          node.usage < 0) {
        throw ParseError(path + ": invalid leaf counts");
      }
      if (j.at("depth").get<int>() != depth) {
        throw ParseError(path + ": leaf depth " +
                         std::to_string(j.at("depth").get<int>()) +
                         " does not match its position " +
                         std::to_string(depth));
      }
      return id;
    }
    for (const char* key : {"f", "t", "l", "r"}) {
      if (!j.contains(key)) {
        throw ParseError(path + ": split is missing '" + key + "'");
      }
    }
    const int f = j.at("f").get<int>();
    if (f < 0 || f >= n_features) {
      throw ParseError(path + ": feature index out of range");
    }
    const double t = j.at("t").get<double>();
    const int l = NodeFromJson(j.at("l"), tree, id, depth + 1, n_features,
                               path + ".l");
    const int r = NodeFromJson(j.at("r"), tree, id, depth + 1, n_features,
                               path + ".r");
    TreeNode& node = tree.nodes[id];
    node.feature = f;
    node.threshold = t;
    node.left = l;
    node.right = r;
    return id;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace

nlohmann::ordered_json ForestToJson(const Forest& forest) {
  nlohmann::ordered_json j;
  auto& p = j["params"];
  p["n_estimators"] = forest.params.n_estimators;
  p["max_depth"] = forest.params.max_depth;
  p["min_samples_leaf"] = forest.params.min_samples_leaf;
  p["max_features"] = forest.params.max_features;
  p["bootstrap"] = forest.params.bootstrap;
  p["seed"] = forest.params.seed;
  p["n_features"] = forest.n_features;
  auto& trees = j["trees"];
  trees = nlohmann::ordered_json::array();
  for (const Tree& t : forest.trees) trees.push_back(NodeToJson(t, t.root));
  return j;
}

Forest ForestFromJson(const nlohmann::ordered_json& j) {
  Forest forest;
  try {
    const auto& p = j.at("params");
    forest.params.n_estimators = p.at("n_estimators").get<int>();
    forest.params.max_depth = p.at("max_depth").get<int>();
    forest.params.min_samples_leaf = p.at("min_samples_leaf").get<int>();
    forest.params.max_features = p.at("max_features").get<int>();
    forest.params.bootstrap = p.at("bootstrap").get<bool>();
    forest.params.seed = p.at("seed").get<std::uint64_t>();
    forest.n_features = p.at("n_features").get<int>();
    const auto& trees = j.at("trees");
    if (!trees.is_array() || trees.empty()) {
      throw ParseError("trees: forest needs at least one tree");
    }
    for (std::size_t i = 0; i < trees.size(); ++i) {
      Tree tree;
      tree.root = NodeFromJson(trees[i], tree, -1, 0, forest.n_features,
                               "trees[" + std::to_string(i) + "]");
      forest.trees.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("forest: ") + e.what());
  }
  return forest;
}

void SaveForest(const Forest& forest, const std::filesystem::path& path) {
  WriteJsonFile(path, ForestToJson(forest), -1);
}

Forest LoadForest(const std::filesystem::path& path) {
  try {
    return ForestFromJson(ReadJsonFile(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace idsbd
