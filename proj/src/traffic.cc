#include "idsbd/traffic.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "idsbd/error.h"
#include "idsbd/io.h"
#include "json.hpp"

namespace idsbd {
namespace {

using Rng = std::mt19937_64;
using nlohmann::ordered_json;

void ValidateRange(const IntRange& r, int lower_bound, const std::string& what) {
  if (r.min < lower_bound || r.max < r.min) {
    throw ConfigError("invalid " + what + " range [" + std::to_string(r.min) +
                      ", " + std::to_string(r.max) + "]");
  }
}

void ValidateProbability(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(what + " must be in [0, 1]");
}

void ValidateProfile(const ClassProfile& p, const std::string& cls) {
  ValidateRange(p.packet_count_range, 1, cls + " packet count");
  ValidateRange(p.fwd_length_range, 1, cls + " forward length");
  ValidateRange(p.bwd_length_range, 1, cls + " backward length");
  if (!(p.iat_scale > 0.0) || !std::isfinite(p.iat_scale)) {
    throw ConfigError(cls + " iat scale must be positive");
  }
  ValidateProbability(p.fwd_fraction, cls + " forward fraction");
  for (double q : {p.p_syn, p.p_fin, p.p_rst, p.p_psh, p.p_urg}) {
    ValidateProbability(q, cls + " flag probability");
  }
  const TtlProfile& t = p.ttl;
  if (t.base_ttls.empty()) throw ConfigError(cls + " TTL profile is empty");
  if (t.weights.size() != t.base_ttls.size()) {
    throw ConfigError(cls + " TTL weights do not match base TTLs");
  }
  double total = 0.0;
  for (double w : t.weights) {
    if (!(w >= 0.0)) throw ConfigError(cls + " TTL weight is negative");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError(cls + " TTL weights sum to zero");
  if (t.max_hops < 0) throw ConfigError(cls + " max hops is negative");
  for (int base : t.base_ttls) {
    if (base > 255 || base - t.max_hops < 1) {
      throw ConfigError(cls + " TTL profile leaves [1, 255]");
    }
  }
}

int UniformInt(Rng& rng, const IntRange& r) {
  return std::uniform_int_distribution<int>(r.min, r.max)(rng);
}

bool Bernoulli(Rng& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

int DrawTtl(Rng& rng, const TtlProfile& profile) {
  std::discrete_distribution<std::size_t> pick(profile.weights.begin(),
                                               profile.weights.end());
  const int base = profile.base_ttls[pick(rng)];
  return base - std::uniform_int_distribution<int>(0, profile.max_hops)(rng);
}

void JitterOneTtl(Rng& rng, Flow& flow) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i < flow.packets.size(); ++i) {
    if (flow.packets[i].dir == Direction::kForward) candidates.push_back(i);
  }
  if (candidates.empty()) {
    for (std::size_t i = 1; i < flow.packets.size(); ++i) {
      candidates.push_back(i);
    }
  }
  if (candidates.empty()) return;
  const std::size_t pick = candidates[std::uniform_int_distribution<std::size_t>(
      0, candidates.size() - 1)(rng)];
  int& ttl = flow.packets[pick].ttl;
  int delta = Bernoulli(rng, 0.5) ? 1 : -1;
  if (ttl + delta < 1 || ttl + delta > 255) delta = -delta;
  ttl += delta;
}

Flow GenerateOne(Rng& rng, const ClassProfile& p, int label) {
  Flow flow;
  flow.label = label;
  const int n = UniformInt(rng, p.packet_count_range);
  const int fwd_ttl = DrawTtl(rng, p.ttl);
  const int bwd_ttl = DrawTtl(rng, p.ttl);
  std::exponential_distribution<double> iat(1.0 / p.iat_scale);
  double ts = 0.0;
  bool seen_bwd = false;
  flow.packets.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Packet pkt;
    if (i > 0) ts += iat(rng);
    pkt.ts = ts;
    pkt.dir = (i == 0 || Bernoulli(rng, p.fwd_fraction)) ? Direction::kForward
                                                         : Direction::kBackward;
    const bool fwd = pkt.dir == Direction::kForward;
    pkt.len = UniformInt(rng, fwd ? p.fwd_length_range : p.bwd_length_range);
    pkt.ttl = fwd ? fwd_ttl : bwd_ttl;
    if (i == 0) {
      pkt.flags = kSyn;
    } else if (!fwd && !seen_bwd) {
      pkt.flags = kSyn | kAck;
    } else {
      pkt.flags = kAck;
    }
    if (!fwd) seen_bwd = true;
    if (Bernoulli(rng, p.p_syn)) pkt.flags |= kSyn;
    if (Bernoulli(rng, p.p_fin)) pkt.flags |= kFin;
    if (Bernoulli(rng, p.p_rst)) pkt.flags |= kRst;
    if (Bernoulli(rng, p.p_psh)) pkt.flags |= kPsh;
    if (Bernoulli(rng, p.p_urg)) pkt.flags |= kUrg;
    flow.packets.push_back(pkt);
  }
  return flow;
}

const char* DirectionName(Direction d) {
  return d == Direction::kForward ? "fwd" : "bwd";
}

}  // namespace

ClassProfile DefaultBenignProfile() {
  ClassProfile p;
  p.packet_count_range = {3, 40};
  p.fwd_length_range = {60, 600};
  p.bwd_length_range = {200, 1500};
  p.iat_scale = 0.05;
  p.fwd_fraction = 0.5;
  p.p_fin = 0.05;
  p.p_rst = 0.005;
  p.p_psh = 0.3;
  return p;
}

ClassProfile DefaultAttackProfile() {
  ClassProfile p;
  p.packet_count_range = {2, 24};
  p.fwd_length_range = {40, 500};
  p.bwd_length_range = {40, 800};
  p.iat_scale = 0.02;
  p.fwd_fraction = 0.65;
  p.p_syn = 0.2;
  p.p_fin = 0.05;
  p.p_rst = 0.2;
  p.p_psh = 0.1;
  p.p_urg = 0.02;
  return p;
}

void ValidateGenConfig(const GenConfig& config) {
  if (config.n_benign < 0 || config.n_attack < 0) {
    throw ConfigError("flow counts must be non-negative");
  }
  if (config.n_benign + config.n_attack < 1) {
    throw ConfigError("at least one flow must be generated");
  }
  ValidateProfile(config.benign, "benign");
  ValidateProfile(config.attack, "attack");
  ValidateProbability(config.benign_ttl_jitter_rate, "benign TTL jitter rate");
  ValidateProbability(config.jitter_attack_shape_share,
                      "jitter attack shape share");
}

std::vector<Flow> GenerateFlows(const GenConfig& config) {
  ValidateGenConfig(config);
  Rng rng(config.seed);
  std::vector<Flow> flows;
  flows.reserve(static_cast<std::size_t>(config.n_benign + config.n_attack));
  for (int i = 0; i < config.n_benign; ++i) {
    Flow f = GenerateOne(rng, config.benign, kBenign);
    if (config.benign_ttl_jitter_rate > 0.0 &&
        Bernoulli(rng, config.benign_ttl_jitter_rate)) {
      if (Bernoulli(rng, config.jitter_attack_shape_share)) {
        f = GenerateOne(rng, config.attack, kBenign);
      }
      JitterOneTtl(rng, f);
    }
    flows.push_back(std::move(f));
  }
  for (int i = 0; i < config.n_attack; ++i) {
    flows.push_back(GenerateOne(rng, config.attack, kAttack));
  }
  std::shuffle(flows.begin(), flows.end(), rng);
  for (std::size_t i = 0; i < flows.size(); ++i) {
    flows[i].id = "f" + std::to_string(i);
  }
  return flows;
}

int BackdooredTtl(int ttl) { return ttl < 128 ? ttl + 1 : ttl - 1; }

Flow InjectBackdoor(const Flow& flow) {
  Flow out = flow;
  if (!out.packets.empty()) {
    out.packets.front().ttl = BackdooredTtl(out.packets.front().ttl);
  }
  out.backdoored = true;
  return out;
}

std::vector<Flow> PoisonTrainingSet(std::span<const Flow> flows,
                                    double poison_rate, int target_label,
                                    std::uint64_t seed) {
  if (!(poison_rate >= 0.0 && poison_rate <= 1.0)) {
    throw ConfigError("poison rate must be in [0, 1]");
  }
  if (target_label != kBenign && target_label != kAttack) {
    throw ConfigError("target label must be 0 or 1");
  }
  if (flows.empty()) throw ConfigError("cannot poison an empty flow set");
  Rng rng(seed);
  std::vector<Flow> out(flows.begin(), flows.end());
  for (const Flow& f : flows) {
    if (f.label == target_label) continue;
    // Always draw so the selection of one flow does not depend on the rate
    // decisions made for earlier flows.
    const bool pick = Bernoulli(rng, poison_rate);
    if (!pick) continue;
    Flow copy = InjectBackdoor(f);
    copy.label = target_label;
    copy.id += "-bd";
    out.push_back(std::move(copy));
  }
  return out;
}

bool HasNonConstantTtl(const Flow& flow) {
  int first[2] = {-1, -1};
  for (const Packet& p : flow.packets) {
    int& f = first[static_cast<int>(p.dir)];
    if (f < 0) {
      f = p.ttl;
    } else if (f != p.ttl) {
      return true;
    }
  }
  return false;
}

std::string FlowToJson(const Flow& flow) {
  ordered_json j;
  j["id"] = flow.id;
  j["label"] = flow.label;
  j["backdoored"] = flow.backdoored;
  ordered_json packets = ordered_json::array();
  for (const Packet& p : flow.packets) {
    ordered_json pj;
    pj["ts"] = p.ts;
    pj["dir"] = DirectionName(p.dir);
    pj["len"] = p.len;
    pj["ttl"] = p.ttl;
    ordered_json flags = ordered_json::array();
    for (std::size_t k = 0; k < std::size(kAllTcpFlags); ++k) {
      if (p.flags & kAllTcpFlags[k]) flags.push_back(kTcpFlagNames[k]);
    }
    pj["flags"] = std::move(flags);
    packets.push_back(std::move(pj));
  }
  j["packets"] = std::move(packets);
  return j.dump();
}

Flow FlowFromJson(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what());
  }
  try {
    Flow flow;
    flow.id = j.at("id").get<std::string>();
    flow.label = j.at("label").get<int>();
    if (flow.label != kBenign && flow.label != kAttack) {
      throw ParseError("label must be 0 or 1");
    }
    flow.backdoored = j.at("backdoored").get<bool>();
    const auto& packets = j.at("packets");
    if (!packets.is_array() || packets.empty()) {
      throw ParseError("flow needs at least one packet");
    }
    double prev_ts = 0.0;
    for (const auto& pj : packets) {
      Packet p;
      p.ts = pj.at("ts").get<double>();
      const std::string dir = pj.at("dir").get<std::string>();
      if (dir == "fwd") {
        p.dir = Direction::kForward;
      } else if (dir == "bwd") {
        p.dir = Direction::kBackward;
      } else {
        throw ParseError("unknown direction '" + dir + "'");
      }
      p.len = pj.at("len").get<int>();
      p.ttl = pj.at("ttl").get<int>();
      if (p.len < 1) throw ParseError("packet length must be >= 1");
      if (p.ttl < 1 || p.ttl > 255) throw ParseError("TTL outside [1, 255]");
      if (!(p.ts >= 0.0)) throw ParseError("negative timestamp");
      if (!flow.packets.empty() && p.ts < prev_ts) {
        throw ParseError("timestamps not sorted");
      }
      prev_ts = p.ts;
      for (const auto& fj : pj.at("flags")) {
        const std::string name = fj.get<std::string>();
        bool known = false;
        for (std::size_t k = 0; k < std::size(kAllTcpFlags); ++k) {
          if (name == kTcpFlagNames[k]) {
            p.flags |= kAllTcpFlags[k];
            known = true;
          }
        }
        if (!known) throw ParseError("unknown TCP flag '" + name + "'");
      }
      flow.packets.push_back(p);
    }
    return flow;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what());
  }
}

void WriteFlows(const std::filesystem::path& path,
                std::span<const Flow> flows) {
  std::string text;
  for (const Flow& f : flows) {
    text += FlowToJson(f);
    text += '\n';
  }
  WriteTextFile(path, text);
}

std::vector<Flow> ReadFlows(const std::filesystem::path& path) {
  std::istringstream in(ReadTextFile(path));
  std::vector<Flow> flows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      flows.push_back(FlowFromJson(line));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  return flows;
}

}  // namespace idsbd
