#ifndef IDSBD_FEATURES_H_
#define IDSBD_FEATURES_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "idsbd/traffic.h"
#include "json.hpp"

namespace idsbd {

// Row-major so that one sample is one contiguous row.
using FeatureMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kNumFeatures = 42;
using FeatureVector = Eigen::Matrix<double, kNumFeatures, 1>;

// Column layout of FeatureVector. Per-direction blocks start at
// DirectionBlock(d) (flow statistics) and TtlBlock(d) (TTL statistics).
namespace layout {
inline constexpr int kProtocol = 0;
inline constexpr int kDuration = 1;
inline constexpr int kDirectionBlockSize = 16;
inline constexpr int kPackets = 0;
inline constexpr int kBytes = 1;
inline constexpr int kMinLen = 2;
inline constexpr int kMaxLen = 3;
inline constexpr int kMeanLen = 4;
inline constexpr int kStdevLen = 5;
inline constexpr int kMinIat = 6;
inline constexpr int kMaxIat = 7;
inline constexpr int kMeanIat = 8;
inline constexpr int kStdevIat = 9;
inline constexpr int kFlagCounts = 10;  // SYN ACK FIN RST PSH URG
inline constexpr int kMinTtl = 0;
inline constexpr int kMaxTtl = 1;
inline constexpr int kMeanTtl = 2;
inline constexpr int kStdevTtl = 3;

constexpr int DirectionBlock(Direction d) {
  return 2 + kDirectionBlockSize * static_cast<int>(d);
}
constexpr int TtlBlock(Direction d) {
  return 2 + 2 * kDirectionBlockSize + 4 * static_cast<int>(d);
}
inline constexpr int kFwdStdevTtl = TtlBlock(Direction::kForward) + kStdevTtl;
inline constexpr int kFwdMeanTtl = TtlBlock(Direction::kForward) + kMeanTtl;
}  // namespace layout

inline constexpr int kTcpProtocol = 6;

// Ordered feature names, e.g. "fwd_stdev_ttl".
const std::vector<std::string>& FeatureNames();

// Throws ConfigError for unknown names.
int FeatureIndex(std::string_view name);

FeatureVector ExtractFeatures(const Flow& flow);

struct Dataset {
  FeatureMatrix x;
  Eigen::VectorXi y;   // 0 benign, 1 attack
  Eigen::VectorXi bd;  // 1 if the row came from a backdoored flow
  std::vector<std::string> feature_names = FeatureNames();

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }
  Dataset Subset(std::span<const int> indices) const;
};

// Throws DimensionError if sizes disagree.
void ValidateDataset(const Dataset& d);

Dataset Featurize(std::span<const Flow> flows);

struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;  // population standard deviation
};

NormStats ZScoreFit(const FeatureMatrix& x);
inline NormStats ZScoreFit(const Dataset& train) { return ZScoreFit(train.x); }

// Constant columns (std == 0) map to 0.
FeatureMatrix ZScoreApply(const NormStats& stats, const FeatureMatrix& x);
Dataset ZScoreApply(const NormStats& stats, const Dataset& d);

// Inverse of ZScoreApply on non-constant columns; constant columns come
// back as the fitted mean.
FeatureMatrix ZScoreInvert(const NormStats& stats, const FeatureMatrix& z);

struct SplitSpec {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
  std::uint64_t seed = 0;
};

// Stratified train/validation/test split with validation and test each a
// quarter of the training part: train = floor(2n/3),
// validation = test = floor(train/4).
SplitSpec Split(const Eigen::VectorXi& labels, std::uint64_t seed);
inline SplitSpec Split(const Dataset& d, std::uint64_t seed) {
  return Split(d.y, seed);
}

struct Fold {
  std::vector<int> train;
  std::vector<int> test;
};

// Stratified k-fold partition of the rows.
std::vector<Fold> KFold(const Eigen::VectorXi& labels, int k,
                        std::uint64_t seed);
inline std::vector<Fold> KFold(const Dataset& d, int k, std::uint64_t seed) {
  return KFold(d.y, k, seed);
}

// Keeps the first ceil(scale * n) entries of a seeded shuffle of `indices`.
std::vector<int> Subsample(std::span<const int> indices, double scale,
                           std::uint64_t seed);

// CSV with header feature_names..., label, backdoored.
void WriteDatasetCsv(const std::filesystem::path& path, const Dataset& d);
Dataset ReadDatasetCsv(const std::filesystem::path& path);

nlohmann::ordered_json NormStatsToJson(const NormStats& stats);
NormStats NormStatsFromJson(const nlohmann::ordered_json& j);

}  // namespace idsbd

#endif  // IDSBD_FEATURES_H_
