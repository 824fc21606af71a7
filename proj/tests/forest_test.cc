#include "idsbd/forest.h"

#include <filesystem>
#include <random>
#include <set>

#include "gtest/gtest.h"
#include "idsbd/error.h"
#include "idsbd/io.h"

namespace idsbd {
namespace {

TreeNode Leaf(int n0, int n1) {
  TreeNode n;
  n.n0 = n0;
  n.n1 = n1;
  return n;
}

TreeNode Split(int feature, double threshold, int left, int right) {
  TreeNode n;
  n.feature = feature;
  n.threshold = threshold;
  n.left = left;
  n.right = right;
  return n;
}

// Fills parent links and depths from the root down.
Tree Finalize(std::vector<TreeNode> nodes, int root) {
  Tree t;
  t.nodes = std::move(nodes);
  t.root = root;
  std::vector<int> stack = {root};
  t.nodes[root].parent = -1;
  t.nodes[root].depth = 0;
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    if (t.nodes[n].is_leaf()) continue;
    for (int c : {t.nodes[n].left, t.nodes[n].right}) {
      t.nodes[c].parent = n;
      t.nodes[c].depth = t.nodes[n].depth + 1;
      stack.push_back(c);
    }
  }
  return t;
}

Forest OneTree(Tree t, int n_features) {
  Forest f;
  f.n_features = n_features;
  f.params.n_estimators = 1;
  f.trees.push_back(std::move(t));
  return f;
}

FeatureMatrix Rows(std::initializer_list<std::initializer_list<double>> rows) {
  FeatureMatrix x(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) x(i, j++) = v;
    ++i;
  }
  return x;
}

ForestParams SingleTree(int max_depth = -1) {
  ForestParams p;
  p.n_estimators = 1;
  p.bootstrap = false;
  p.max_depth = max_depth;
  return p;
}

TEST(TrainForestTest, SeparableFourPoints) {
  const FeatureMatrix x = Rows({{0.0}, {1.0}, {2.0}, {3.0}});
  Eigen::VectorXi y(4);
  y << 0, 0, 1, 1;
  const Forest f = TrainForest(x, y, SingleTree());
  ASSERT_EQ(f.trees.size(), 1u);
  EXPECT_EQ(f.trees[0].LeafCount(), 2);
  const TreeNode& root = f.trees[0].nodes[f.trees[0].root];
  EXPECT_EQ(root.feature, 0);
  EXPECT_DOUBLE_EQ(root.threshold, 1.5);
  EXPECT_EQ(Accuracy(PredictScores(f, x), y), 1.0);
}

TEST(TrainForestTest, XorNeedsDepthTwo) {
  const FeatureMatrix x = Rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  Eigen::VectorXi y(4);
  y << 0, 1, 1, 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ForestParams stump = SingleTree(1);
    stump.max_features = 2;
    stump.seed = seed;
    EXPECT_LE(Accuracy(PredictScores(TrainForest(x, y, stump), x), y), 0.75);
    ForestParams full = SingleTree();
    full.max_features = 2;
    full.seed = seed;
    EXPECT_EQ(Accuracy(PredictScores(TrainForest(x, y, full), x), y), 1.0);
  }
}

TEST(TrainForestTest, SingleClassIsATrainingError) {
  const FeatureMatrix x = Rows({{0.0}, {1.0}});
  EXPECT_THROW(TrainForest(x, Eigen::VectorXi::Zero(2), SingleTree()),
               TrainingError);
}

TEST(TrainForestTest, LeavesStoreCountsAndDepth) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  FeatureMatrix x(300, 4);
  Eigen::VectorXi y(300);
  for (int i = 0; i < 300; ++i) {
    for (int j = 0; j < 4; ++j) x(i, j) = n(rng);
    y[i] = x(i, 0) + 0.5 * x(i, 1) + 0.3 * n(rng) > 0 ? 1 : 0;
  }
  ForestParams p;
  p.n_estimators = 10;
  p.min_samples_leaf = 3;
  p.max_depth = 6;
  const Forest f = TrainForest(x, y, p);
  for (const Tree& t : f.trees) {
    int total = 0;
    for (int leaf : t.Leaves()) {
      const TreeNode& node = t.nodes[leaf];
      EXPECT_GE(node.n0 + node.n1, 3);
      EXPECT_LE(node.depth, 6);
      total += node.n0 + node.n1;
    }
    EXPECT_EQ(total, 300);  // bootstrap draws n rows
  }
}

TEST(TrainForestTest, DeterministicAcrossRunsAndThreads) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u;
  FeatureMatrix x(200, 5);
  Eigen::VectorXi y(200);
  for (int i = 0; i < 200; ++i) {
    for (int j = 0; j < 5; ++j) x(i, j) = u(rng);
    y[i] = x(i, 2) > 0.4 ? 1 : 0;
  }
  ForestParams p;
  p.n_estimators = 12;
  p.seed = 9;
  const std::string a = ForestToJson(TrainForest(x, y, p, 1)).dump();
  EXPECT_EQ(a, ForestToJson(TrainForest(x, y, p, 1)).dump());
  EXPECT_EQ(a, ForestToJson(TrainForest(x, y, p, 3)).dump());
  p.seed = 10;
  EXPECT_NE(a, ForestToJson(TrainForest(x, y, p, 1)).dump());
}

TEST(PredictScoresTest, StumpGivesExactScores) {
  const Forest f = OneTree(
      Finalize({Split(0, 0.5, 1, 2), Leaf(3, 0), Leaf(0, 2)}, 0), 1);
  const Eigen::VectorXd s = PredictScores(f, Rows({{0.0}, {0.5}, {1.0}}));
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 1.0);  // x == threshold goes right
  EXPECT_EQ(s[2], 1.0);
}

TEST(PredictScoresTest, DuplicatedTreesKeepScores) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  FeatureMatrix x(100, 3);
  Eigen::VectorXi y(100);
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = u(rng);
    y[i] = x(i, 0) + x(i, 1) > 1 ? 1 : 0;
  }
  ForestParams p;
  p.n_estimators = 5;
  Forest f = TrainForest(x, y, p);
  const Eigen::VectorXd before = PredictScores(f, x);
  const std::size_t n = f.trees.size();
  for (std::size_t i = 0; i < n; ++i) f.trees.push_back(f.trees[i]);
  EXPECT_LE((PredictScores(f, x) - before).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PredictScoresTest, PureLeavesAgreeWithMajorityVote) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  std::bernoulli_distribution coin;
  for (int trial = 0; trial < 50; ++trial) {
    Forest f;
    f.n_features = 2;
    const int trees = 1 + trial % 7;
    for (int t = 0; t < trees; ++t) {
      const bool left_attack = coin(rng);
      f.trees.push_back(Finalize({Split(trial % 2, u(rng), 1, 2),
                                  left_attack ? Leaf(0, 1) : Leaf(1, 0),
                                  left_attack ? Leaf(1, 0) : Leaf(0, 1)},
                                 0));
    }
    FeatureMatrix x = FeatureMatrix::NullaryExpr(
        20, 2, [&](Eigen::Index, Eigen::Index) { return u(rng); });
    const Eigen::VectorXi labels = ThresholdScores(PredictScores(f, x));
    for (int i = 0; i < 20; ++i) {
      int votes = 0;
      for (const Tree& t : f.trees) votes += t.nodes[t.Route(x.row(i))].n1;
      EXPECT_EQ(labels[i], 2 * votes >= trees ? 1 : 0);
    }
  }
}

TEST(PredictScoresTest, WidthMismatch) {
  const Forest f = OneTree(
      Finalize({Split(0, 0.5, 1, 2), Leaf(3, 0), Leaf(0, 2)}, 0), 2);
  EXPECT_THROW(PredictScores(f, Rows({{0.0}})), DimensionError);
}

TEST(LeafUsageTest, StumpConservation) {
  Forest f = OneTree(
      Finalize({Split(0, 0.5, 1, 2), Leaf(3, 0), Leaf(0, 2)}, 0), 1);
  FeatureMatrix v(100, 1);
  for (int i = 0; i < 100; ++i) v(i, 0) = i < 37 ? 0.0 : 1.0;
  RecordLeafUsage(f, v);
  EXPECT_EQ(f.trees[0].nodes[1].usage, 37);
  EXPECT_EQ(f.trees[0].nodes[2].usage, 63);
  RecordLeafUsage(f, v);  // counters reset, not accumulated
  EXPECT_EQ(f.trees[0].nodes[1].usage, 37);
  RecordLeafUsage(f, Rows({{1.0}}));
  EXPECT_EQ(f.trees[0].nodes[1].usage, 0);
}

TEST(LeafUsageTest, TrainedForestConservation) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u;
  FeatureMatrix x(400, 4);
  Eigen::VectorXi y(400);
  for (int i = 0; i < 400; ++i) {
    for (int j = 0; j < 4; ++j) x(i, j) = u(rng);
    y[i] = x(i, 3) > 0.7 ? 1 : 0;
  }
  ForestParams p;
  p.n_estimators = 8;
  Forest f = TrainForest(x, y, p);
  RecordLeafUsage(f, x.topRows(123));
  for (const Tree& t : f.trees) {
    int sum = 0;
    for (int leaf : t.Leaves()) sum += t.nodes[leaf].usage;
    EXPECT_EQ(sum, 123);
  }
}

// root: x0 < 0.5 ? (x1 < 0.5 ? A : B) : (x1 < 0.5 ? C : D)
Tree SevenNodeTree() {
  return Finalize({Split(0, 0.5, 1, 2), Split(1, 0.5, 3, 4),
                   Split(1, 0.5, 5, 6), Leaf(5, 0), Leaf(0, 3), Leaf(2, 1),
                   Leaf(1, 4)},
                  0);
}

double RouteFrom(const Tree& t, int node, const Eigen::Vector2d& x) {
  while (!t.nodes[node].is_leaf()) {
    const TreeNode& n = t.nodes[node];
    node = x[n.feature] < n.threshold ? n.left : n.right;
  }
  return t.nodes[node].prediction();
}

TEST(CollapseLeafTest, BruteForceRoutingOnSevenNodeTree) {
  const Tree original = SevenNodeTree();
  std::vector<Eigen::Vector2d> grid;
  for (double a : {-1.0, 0.0, 0.49, 0.5, 0.51, 1.0, 2.0}) {
    for (double b : {-1.0, 0.0, 0.49, 0.5, 0.51, 1.0, 2.0}) {
      grid.emplace_back(a, b);
    }
  }
  for (int leaf : original.Leaves()) {
    Tree t = original;
    const int parent = t.nodes[leaf].parent;
    const int sibling = t.CollapseLeaf(leaf);
    EXPECT_EQ(t.LeafCount(), 3);
    EXPECT_EQ(t.nodes[sibling].parent, original.nodes[parent].parent);
    EXPECT_EQ(t.nodes[sibling].depth, original.nodes[sibling].depth - 1);
    for (const auto& x : grid) {
      const bool hit = original.Route(x) == leaf;
      const double expected =
          hit ? RouteFrom(original, sibling, x) : original.Predict(x);
      EXPECT_EQ(t.Predict(x), expected);
    }
  }
}

TEST(CollapseLeafTest, SiblingSubtreeDepthsDrop) {
  Tree t = SevenNodeTree();
  // Collapse the left internal node into a leaf first, then prune it so the
  // whole right subtree moves up.
  t.CollapseLeaf(3);  // A gone, B takes node 1's place at depth 1
  EXPECT_EQ(t.nodes[4].depth, 1);
  t.CollapseLeaf(4);  // right subtree becomes the root
  EXPECT_EQ(t.root, 2);
  EXPECT_EQ(t.nodes[2].depth, 0);
  EXPECT_EQ(t.nodes[5].depth, 1);
  EXPECT_EQ(t.nodes[6].depth, 1);
  t.CollapseLeaf(5);
  EXPECT_EQ(t.root, 6);
  EXPECT_THROW(t.CollapseLeaf(6), Error);
}

EvalSet TinyEval(int n_features) {
  EvalSet e;
  e.clean_x = FeatureMatrix::Zero(2, n_features);
  e.clean_y = Eigen::VectorXi::Zero(2);
  e.backdoor_x = FeatureMatrix::Zero(1, n_features);
  return e;
}

TEST(PruneForestTest, LeastUsedFirstAndLastLeafKept) {
  // x0 < 0.5 ? A : (x0 < 1.5 ? B : C)
  Forest f = OneTree(Finalize({Split(0, 0.5, 1, 2), Leaf(4, 0),
                               Split(0, 1.5, 3, 4), Leaf(0, 3), Leaf(2, 0)},
                              0),
                     1);
  FeatureMatrix v(10, 1);
  for (int i = 0; i < 10; ++i) v(i, 0) = i < 7 ? 1.0 : 2.0;  // B:7, C:3
  PruneOptions o;
  o.variant = PruneVariant::kUsage;
  o.fraction = 1.0;
  const PruneReport r = PruneForest(f, v, o, TinyEval(1));
  EXPECT_EQ(r.eligible_leaves, 3);
  ASSERT_EQ(r.steps.size(), 2u);
  EXPECT_EQ(r.steps[0].leaf, 1);
  EXPECT_EQ(r.steps[0].usage, 0);
  EXPECT_EQ(r.steps[1].leaf, 4);
  EXPECT_EQ(r.steps[1].usage, 3);
  EXPECT_EQ(f.trees[0].LeafCount(), 1);
  EXPECT_EQ(f.trees[0].nodes[f.trees[0].root].usage, 10);
}

// Two unused benign leaves: node 6 at depth 1 and node 1 at depth 3. The
// deep one has the smaller id, so id order and depth order disagree.
Forest DepthTieForest() {
  // 0: x0 < 0.5 ? 6 : 2
  // 2: x0 < 1.5 ? 3 : 4
  // 4: x0 < 2.5 ? 1 : 5
  return OneTree(Finalize({Split(0, 0.5, 6, 2), Leaf(3, 0),
                           Split(0, 1.5, 3, 4), Leaf(0, 5),
                           Split(0, 2.5, 1, 5), Leaf(0, 5), Leaf(4, 0)},
                          0),
                 1);
}

TEST(PruneForestTest, VariantThreePrunesShallowFirst) {
  FeatureMatrix v = Rows({{1.0}, {3.0}});  // only attack leaves are used
  PruneOptions o;
  o.fraction = 0.5;

  Forest f2 = DepthTieForest();
  ASSERT_EQ(f2.trees[0].nodes[6].depth, 1);
  ASSERT_EQ(f2.trees[0].nodes[1].depth, 3);
  o.variant = PruneVariant::kBenignUsage;
  PruneReport r2 = PruneForest(f2, v, o, TinyEval(1));
  EXPECT_EQ(r2.eligible_leaves, 2);
  ASSERT_EQ(r2.steps.size(), 1u);
  EXPECT_EQ(r2.steps[0].leaf, 1);  // id order

  Forest f3 = DepthTieForest();
  o.variant = PruneVariant::kBenignUsageDepth;
  PruneReport r3 = PruneForest(f3, v, o, TinyEval(1));
  ASSERT_EQ(r3.steps.size(), 1u);
  EXPECT_EQ(r3.steps[0].leaf, 6);
  EXPECT_EQ(r3.steps[0].depth, 1);
}

Forest TrainedForest(FeatureMatrix* x_out, Eigen::VectorXi* y_out) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u;
  FeatureMatrix x(600, 4);
  Eigen::VectorXi y(600);
  for (int i = 0; i < 600; ++i) {
    for (int j = 0; j < 4; ++j) x(i, j) = u(rng);
    y[i] = (x(i, 0) > 0.5) != (x(i, 1) > 0.6) ? 1 : 0;
    if (u(rng) < 0.05) y[i] = 1 - y[i];
  }
  ForestParams p;
  p.n_estimators = 10;
  *x_out = x;
  *y_out = y;
  return TrainForest(x.topRows(400), y.head(400), p);
}

TEST(PruneForestTest, LeafCountDropsByOnePerStep) {
  FeatureMatrix x;
  Eigen::VectorXi y;
  Forest f = TrainedForest(&x, &y);
  const int before = f.LeafCount();
  EvalSet e;
  e.clean_x = x.bottomRows(100);
  e.clean_y = y.tail(100);
  e.backdoor_x = x.bottomRows(10);
  PruneOptions o;
  o.variant = PruneVariant::kUsage;
  o.fraction = 0.5;
  o.checkpoint_every = 0.1;
  const PruneReport r = PruneForest(f, x.middleRows(400, 100), o, e);
  EXPECT_EQ(static_cast<int>(r.steps.size()), r.eligible_leaves / 2);
  EXPECT_EQ(f.LeafCount(), before - static_cast<int>(r.steps.size()));
  ASSERT_GE(r.curve.size(), 2u);
  EXPECT_EQ(r.curve.front().step, 0);
  EXPECT_EQ(r.curve.back().step, static_cast<int>(r.steps.size()));
  EXPECT_DOUBLE_EQ(r.curve.front().clean_accuracy,
                   Accuracy(PredictScores(TrainedForest(&x, &y), e.clean_x),
                            e.clean_y));
}

TEST(PruneForestTest, VariantTwoNeverPrunesAttackLeaves) {
  FeatureMatrix x;
  Eigen::VectorXi y;
  Forest f = TrainedForest(&x, &y);
  std::set<std::pair<int, int>> attack_leaves;
  for (int t = 0; t < static_cast<int>(f.trees.size()); ++t) {
    for (int leaf : f.trees[t].Leaves()) {
      if (f.trees[t].nodes[leaf].predicted_class() == 1) {
        attack_leaves.insert({t, leaf});
      }
    }
  }
  PruneOptions o;
  o.variant = PruneVariant::kBenignUsage;
  o.fraction = 1.0;
  const PruneReport r =
      PruneForest(f, x.middleRows(400, 100), o, TinyEval(4));
  for (const PruneStep& s : r.steps) {
    EXPECT_EQ(s.predicted_class, 0);
    EXPECT_EQ(attack_leaves.count({s.tree, s.leaf}), 0u);
  }
  for (const auto& [t, leaf] : attack_leaves) {
    EXPECT_EQ(f.trees[t].nodes[leaf].predicted_class(), 1);
  }
}

TEST(PruneForestTest, RejectsBadFraction) {
  Forest f = OneTree(SevenNodeTree(), 2);
  PruneOptions o;
  o.fraction = 1.5;
  EXPECT_THROW(PruneForest(f, Rows({{0, 0}}), o, TinyEval(2)), ConfigError);
  o.fraction = -0.1;
  EXPECT_THROW(PruneForest(f, Rows({{0, 0}}), o, TinyEval(2)), ConfigError);
}

TEST(PruneForestTest, CsvColumns) {
  PruneReport r;
  r.curve = {{0, 0.0, 0.99, 1.0}, {5, 0.5, 0.98, 0.25}};
  EXPECT_EQ(PruneReportCsv(r),
            "step,fraction_pruned,clean_accuracy,backdoor_accuracy\n"
            "0,0,0.99,1\n5,0.5,0.98,0.25\n");
}

TEST(ForestIoTest, SaveLoadSaveIsByteIdentical) {
  FeatureMatrix x;
  Eigen::VectorXi y;
  Forest f = TrainedForest(&x, &y);
  RecordLeafUsage(f, x.topRows(50));
  const auto dir = std::filesystem::path(::testing::TempDir());
  SaveForest(f, dir / "a.json");
  const Forest g = LoadForest(dir / "a.json");
  SaveForest(g, dir / "b.json");
  EXPECT_EQ(ReadTextFile(dir / "a.json"), ReadTextFile(dir / "b.json"));
  EXPECT_EQ(PredictScores(f, x), PredictScores(g, x));
}

TEST(ForestIoTest, PrunedForestRoundTrips) {
  FeatureMatrix x;
  Eigen::VectorXi y;
  Forest f = TrainedForest(&x, &y);
  PruneOptions o;
  o.fraction = 0.6;
  PruneForest(f, x.middleRows(400, 100), o, TinyEval(4));
  const Forest g = ForestFromJson(ForestToJson(f));
  EXPECT_EQ(PredictScores(f, x), PredictScores(g, x));
  EXPECT_EQ(ForestToJson(f).dump(), ForestToJson(g).dump());
}

TEST(ForestIoTest, RejectsOneChildNodeWithPath) {
  auto j = ForestToJson(OneTree(SevenNodeTree(), 2));
  j["trees"][0]["l"].erase("r");
  try {
    ForestFromJson(j);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("trees[0].l:"), std::string::npos)
        << e.what();
  }
}

TEST(ForestIoTest, RejectsWrongDepth) {
  auto j = ForestToJson(OneTree(SevenNodeTree(), 2));
  j["trees"][0]["r"]["l"]["depth"] = 5;
  EXPECT_THROW(ForestFromJson(j), ParseError);
}

}  // namespace
}  // namespace idsbd
