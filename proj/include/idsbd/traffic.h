#ifndef IDSBD_TRAFFIC_H_
#define IDSBD_TRAFFIC_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace idsbd {

enum class Direction : std::uint8_t { kForward = 0, kBackward = 1 };

// TCP flag bits as stored in Packet::flags.
enum TcpFlag : std::uint8_t {
  kSyn = 1 << 0,
  kAck = 1 << 1,
  kFin = 1 << 2,
  kRst = 1 << 3,
  kPsh = 1 << 4,
  kUrg = 1 << 5,
};
inline constexpr std::uint8_t kAllTcpFlags[] = {kSyn, kAck, kFin,
                                                kRst, kPsh, kUrg};
inline constexpr const char* kTcpFlagNames[] = {"SYN", "ACK", "FIN",
                                                "RST", "PSH", "URG"};

enum Label : int { kBenign = 0, kAttack = 1 };

struct Packet {
  double ts = 0.0;  // seconds since flow start
  Direction dir = Direction::kForward;
  int len = 1;
  int ttl = 64;
  std::uint8_t flags = 0;

  bool Has(TcpFlag f) const { return (flags & f) != 0; }
  bool operator==(const Packet&) const = default;
};

struct Flow {
  std::string id;
  std::vector<Packet> packets;  // sorted by ts, never empty
  int label = kBenign;
  bool backdoored = false;

  bool operator==(const Flow&) const = default;
};

struct IntRange {
  int min = 0;
  int max = 0;
};

// Initial TTL values a host stack may use; observed TTL is base minus a
// uniform hop count in [0, max_hops].
struct TtlProfile {
  std::vector<int> base_ttls = {64, 128, 255};
  std::vector<double> weights = {0.5, 0.3, 0.2};
  int max_hops = 24;
};

struct ClassProfile {
  IntRange packet_count_range;
  IntRange fwd_length_range;
  IntRange bwd_length_range;
  double iat_scale = 0.05;  // mean of the exponential inter-arrival time
  double fwd_fraction = 0.5;  // probability a non-first packet is forward
  // Per-packet probabilities of optional flags.
  double p_syn = 0.0;
  double p_fin = 0.0;
  double p_rst = 0.0;
  double p_psh = 0.0;
  double p_urg = 0.0;
  TtlProfile ttl;
};

ClassProfile DefaultBenignProfile();
ClassProfile DefaultAttackProfile();

struct GenConfig {
  int n_benign = 8000;
  int n_attack = 2000;
  std::uint64_t seed = 1;
  ClassProfile benign = DefaultBenignProfile();
  ClassProfile attack = DefaultAttackProfile();
  // Fraction of benign flows where one packet's TTL deviates by one from
  // the rest of its direction (route change). Zero reproduces the
  // near-perfectly constant TTL of the reference datasets.
  double benign_ttl_jitter_rate = 0.0;
  // Share of jittered benign flows whose packet shape is drawn from the
  // attack profile (scanners, health checks). These are what make
  // backdoored attacks hard to tell apart from regular traffic.
  double jitter_attack_shape_share = 0.2;
};

// Throws ConfigError on an unusable configuration.
void ValidateGenConfig(const GenConfig& config);

std::vector<Flow> GenerateFlows(const GenConfig& config);

// First-packet TTL moves by one towards 128: +1 below 128, -1 at or above.
int BackdooredTtl(int ttl);

Flow InjectBackdoor(const Flow& flow);

// For every flow whose label differs from target_label, appends (with
// probability poison_rate) a backdoored copy relabeled to target_label.
// Originals are kept and come first in the output.
std::vector<Flow> PoisonTrainingSet(std::span<const Flow> flows,
                                    double poison_rate, int target_label,
                                    std::uint64_t seed);

// True if any direction of the flow carries more than one distinct TTL.
bool HasNonConstantTtl(const Flow& flow);

// JSON-lines persistence, one flow per line.
std::string FlowToJson(const Flow& flow);
Flow FlowFromJson(const std::string& line);
void WriteFlows(const std::filesystem::path& path, std::span<const Flow> flows);
std::vector<Flow> ReadFlows(const std::filesystem::path& path);

}  // namespace idsbd

#endif  // IDSBD_TRAFFIC_H_
