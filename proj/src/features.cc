#include "idsbd/features.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "idsbd/error.h"
#include "idsbd/io.h"

namespace idsbd {
namespace {

struct Summary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double stdev = 0.0;
};

// Empty input gives all zeros; stdev is the population value.
Summary Summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) /
           static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.stdev = std::sqrt(ss / static_cast<double>(v.size()));
  // The mean of identical values can drift by an ulp outside [min, max].
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

std::vector<std::string> BuildFeatureNames() {
  std::vector<std::string> names = {"protocol", "duration"};
  for (const char* d : {"fwd", "bwd"}) {
    const std::string p = std::string(d) + "_";
    for (const char* s :
         {"packets", "bytes", "min_len", "max_len", "mean_len", "stdev_len",
          "min_iat", "max_iat", "mean_iat", "stdev_iat", "syn", "ack", "fin",
          "rst", "psh", "urg"}) {
      names.push_back(p + s);
    }
  }
  for (const char* d : {"fwd", "bwd"}) {
    for (const char* s : {"min_ttl", "max_ttl", "mean_ttl", "stdev_ttl"}) {
      names.push_back(std::string(d) + "_" + s);
    }
  }
  return names;
}

// Orders rows so that every prefix and contiguous slice is approximately
// stratified: rows of class c get keys (rank + 0.5) / n_c after a seeded
// shuffle within the class.
std::vector<int> StratifiedOrder(const Eigen::VectorXi& labels,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> classes(labels.data(), labels.data() + labels.size());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  struct Keyed {
    double key;
    int cls;
    int row;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(static_cast<std::size_t>(labels.size()));
  for (int c : classes) {
    std::vector<int> rows;
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) rows.push_back(static_cast<int>(i));
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      keyed.push_back({(static_cast<double>(r) + 0.5) /
                           static_cast<double>(rows.size()),
                       c, rows[r]});
    }
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.key != b.key) return a.key < b.key;
    return a.cls < b.cls;
  });
  std::vector<int> order;
  order.reserve(keyed.size());
  for (const Keyed& k : keyed) order.push_back(k.row);
  return order;
}

}  // namespace

const std::vector<std::string>& FeatureNames() {
  static const std::vector<std::string> names = BuildFeatureNames();
  return names;
}

int FeatureIndex(std::string_view name) {
  const auto& names = FeatureNames();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw ConfigError("unknown feature '" + std::string(name) + "'");
  }
  return static_cast<int>(it - names.begin());
}

FeatureVector ExtractFeatures(const Flow& flow) {
  FeatureVector v = FeatureVector::Zero();
  v[layout::kProtocol] = kTcpProtocol;
  if (flow.packets.empty()) return v;
  v[layout::kDuration] = flow.packets.back().ts - flow.packets.front().ts;

  for (Direction d : {Direction::kForward, Direction::kBackward}) {
    std::vector<double> lens, ttls, iats;
    int flag_counts[6] = {0, 0, 0, 0, 0, 0};
    double bytes = 0.0;
    double prev_ts = 0.0;
    for (const Packet& p : flow.packets) {
      if (p.dir != d) continue;
      if (!lens.empty()) iats.push_back(p.ts - prev_ts);
      prev_ts = p.ts;
      lens.push_back(p.len);
      ttls.push_back(p.ttl);
      bytes += p.len;
      for (int k = 0; k < 6; ++k) {
        if (p.flags & kAllTcpFlags[k]) ++flag_counts[k];
      }
    }
    const int base = layout::DirectionBlock(d);
    v[base + layout::kPackets] = static_cast<double>(lens.size());
    v[base + layout::kBytes] = bytes;
    const Summary len = Summarize(lens);
    v[base + layout::kMinLen] = len.min;
    v[base + layout::kMaxLen] = len.max;
    v[base + layout::kMeanLen] = len.mean;
    v[base + layout::kStdevLen] = len.stdev;
    const Summary iat = Summarize(iats);
    v[base + layout::kMinIat] = iat.min;
    v[base + layout::kMaxIat] = iat.max;
    v[base + layout::kMeanIat] = iat.mean;
    v[base + layout::kStdevIat] = iat.stdev;
    for (int k = 0; k < 6; ++k) {
      v[base + layout::kFlagCounts + k] = flag_counts[k];
    }
    const int ttl_base = layout::TtlBlock(d);
    const Summary ttl = Summarize(ttls);
    v[ttl_base + layout::kMinTtl] = ttl.min;
    v[ttl_base + layout::kMaxTtl] = ttl.max;
    v[ttl_base + layout::kMeanTtl] = ttl.mean;
    v[ttl_base + layout::kStdevTtl] = ttl.stdev;
  }
  return v;
}

Dataset Dataset::Subset(std::span<const int> indices) const {
  Dataset out;
  out.feature_names = feature_names;
  out.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
  out.y.resize(static_cast<Eigen::Index>(indices.size()));
  out.bd.resize(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.x.row(r) = x.row(indices[i]);
    out.y[r] = y[indices[i]];
    out.bd[r] = bd[indices[i]];
  }
  return out;
}

void ValidateDataset(const Dataset& d) {
  if (d.y.size() != d.x.rows() || d.bd.size() != d.x.rows()) {
    throw DimensionError("dataset label/backdoor columns do not match rows");
  }
  if (static_cast<Eigen::Index>(d.feature_names.size()) != d.x.cols()) {
    throw DimensionError("dataset feature names do not match columns");
  }
}

Dataset Featurize(std::span<const Flow> flows) {
  Dataset d;
  const auto n = static_cast<Eigen::Index>(flows.size());
  d.x.resize(n, kNumFeatures);
  d.y.resize(n);
  d.bd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Flow& f = flows[static_cast<std::size_t>(i)];
    d.x.row(i) = ExtractFeatures(f).transpose();
    d.y[i] = f.label;
    d.bd[i] = f.backdoored ? 1 : 0;
  }
  return d;
}

NormStats ZScoreFit(const FeatureMatrix& x) {
  if (x.rows() == 0) throw ConfigError("cannot fit z-score on empty data");
  NormStats s;
  s.mean = x.colwise().mean().transpose();
  const FeatureMatrix centered = x.rowwise() - s.mean.transpose();
  s.std = (centered.array().square().colwise().sum() /
           static_cast<double>(x.rows()))
              .sqrt()
              .transpose();
  return s;
}

FeatureMatrix ZScoreApply(const NormStats& stats, const FeatureMatrix& x) {
  if (stats.mean.size() != x.cols() || stats.std.size() != x.cols()) {
    throw DimensionError("normalization has " +
                         std::to_string(stats.mean.size()) +
                         " features, data has " + std::to_string(x.cols()));
  }
  FeatureMatrix z(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (stats.std[c] > 0.0) {
      z.col(c) = (x.col(c).array() - stats.mean[c]) / stats.std[c];
    } else {
      z.col(c).setZero();
    }
  }
  return z;
}

Dataset ZScoreApply(const NormStats& stats, const Dataset& d) {
  Dataset out = d;
  out.x = ZScoreApply(stats, d.x);
  return out;
}

FeatureMatrix ZScoreInvert(const NormStats& stats, const FeatureMatrix& z) {
  if (stats.mean.size() != z.cols()) {
    throw DimensionError("normalization dimension mismatch");
  }
  FeatureMatrix x(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    x.col(c) = z.col(c).array() * stats.std[c] + stats.mean[c];
  }
  return x;
}

SplitSpec Split(const Eigen::VectorXi& labels, std::uint64_t seed) {
  const Eigen::Index n = labels.size();
  if (n < 6) throw SplitError("split needs at least 6 rows");
  for (int c : {0, 1}) {
    const Eigen::Index count = (labels.array() == c).count();
    if (count > 0 && count < 3) {
      throw SplitError("class " + std::to_string(c) + " has only " +
                       std::to_string(count) + " rows");
    }
  }
  const std::vector<int> order = StratifiedOrder(labels, seed);
  const std::size_t n_train = static_cast<std::size_t>(2 * n / 3);
  const std::size_t n_quarter = n_train / 4;
  SplitSpec s;
  s.seed = seed;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.validation.assign(order.begin() + n_train,
                      order.begin() + n_train + n_quarter);
  s.test.assign(order.begin() + n_train + n_quarter,
                order.begin() + n_train + 2 * n_quarter);
  return s;
}

std::vector<Fold> KFold(const Eigen::VectorXi& labels, int k,
                        std::uint64_t seed) {
  if (k < 2) throw SplitError("k-fold needs k >= 2");
  if (k > labels.size()) throw SplitError("k exceeds the number of rows");
  const std::vector<int> order = StratifiedOrder(labels, seed);
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t f = pos % static_cast<std::size_t>(k);
    for (std::size_t g = 0; g < folds.size(); ++g) {
      (g == f ? folds[g].test : folds[g].train).push_back(order[pos]);
    }
  }
  for (Fold& f : folds) {
    std::sort(f.train.begin(), f.train.end());
    std::sort(f.test.begin(), f.test.end());
  }
  return folds;
}

std::vector<int> Subsample(std::span<const int> indices, double scale,
                           std::uint64_t seed) {
  if (!(scale > 0.0 && scale <= 1.0)) {
    throw ConfigError("subsample scale must be in (0, 1]");
  }
  std::vector<int> out(indices.begin(), indices.end());
  if (out.empty()) return out;
  std::mt19937_64 rng(seed);
  std::shuffle(out.begin(), out.end(), rng);
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(scale * static_cast<double>(out.size()) - 1e-9)));
  out.resize(std::min(keep, out.size()));
  return out;
}

void WriteDatasetCsv(const std::filesystem::path& path, const Dataset& d) {
  ValidateDataset(d);
  std::string text;
  for (const std::string& name : d.feature_names) text += name + ",";
  text += "label,backdoored\n";
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    for (Eigen::Index c = 0; c < d.cols(); ++c) {
      text += FormatDouble(d.x(r, c));
      text += ',';
    }
    text += std::to_string(d.y[r]) + "," + std::to_string(d.bd[r]) + "\n";
  }
  WriteTextFile(path, text);
}

Dataset ReadDatasetCsv(const std::filesystem::path& path) {
  std::istringstream in(ReadTextFile(path));
  std::string line;
  const std::string where = path.string();
  if (!std::getline(in, line)) throw ParseError(where + ": empty file");
  const auto header = SplitCsvLine(line);
  const auto& names = FeatureNames();
  if (header.size() != names.size() + 2) {
    throw ParseError(where + ":1: expected " +
                     std::to_string(names.size() + 2) + " columns, found " +
                     std::to_string(header.size()));
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (header[i] != names[i]) {
      throw ParseError(where + ":1: column " + std::to_string(i) +
                       " should be '" + names[i] + "', found '" +
                       std::string(header[i]) + "'");
    }
  }
  if (header[names.size()] != "label" ||
      header[names.size() + 1] != "backdoored") {
    throw ParseError(where + ":1: last columns must be label,backdoored");
  }
  std::vector<double> values;
  std::vector<int> labels, bds;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::string ctx = where + ":" + std::to_string(line_no);
    const auto fields = SplitCsvLine(line);
    if (fields.size() != header.size()) {
      throw ParseError(ctx + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double v = ParseDouble(fields[i], ctx);
      if (!std::isfinite(v)) throw ParseError(ctx + ": non-finite value");
      values.push_back(v);
    }
    const auto label = ParseInt(fields[names.size()], ctx);
    const auto bd = ParseInt(fields[names.size() + 1], ctx);
    if ((label != 0 && label != 1) || (bd != 0 && bd != 1)) {
      throw ParseError(ctx + ": label and backdoored must be 0 or 1");
    }
    labels.push_back(static_cast<int>(label));
    bds.push_back(static_cast<int>(bd));
  }
  Dataset d;
  const auto n = static_cast<Eigen::Index>(labels.size());
  d.x = Eigen::Map<const FeatureMatrix>(values.data(), n, kNumFeatures);
  d.y = Eigen::Map<const Eigen::VectorXi>(labels.data(), n);
  d.bd = Eigen::Map<const Eigen::VectorXi>(bds.data(), n);
  return d;
}

nlohmann::ordered_json NormStatsToJson(const NormStats& stats) {
  nlohmann::ordered_json j;
  j["feature_names"] = FeatureNames();
  j["mean"] = std::vector<double>(stats.mean.data(),
                                  stats.mean.data() + stats.mean.size());
  j["std"] = std::vector<double>(stats.std.data(),
                                 stats.std.data() + stats.std.size());
  return j;
}

NormStats NormStatsFromJson(const nlohmann::ordered_json& j) {
  try {
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto std = j.at("std").get<std::vector<double>>();
    if (mean.size() != std.size()) {
      throw ParseError("normalization mean/std lengths differ");
    }
    NormStats s;
    s.mean = Eigen::Map<const Eigen::VectorXd>(
        mean.data(), static_cast<Eigen::Index>(mean.size()));
    s.std = Eigen::Map<const Eigen::VectorXd>(
        std.data(), static_cast<Eigen::Index>(std.size()));
    if ((s.std.array() < 0.0).any()) {
      throw ParseError("normalization std must be non-negative");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("normalization: ") + e.what());
  }
}

}  // namespace idsbd
