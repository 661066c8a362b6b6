#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hgnn {

/// Interconnect graph. Vertices are devices 0..N-1, switches and one host
/// bridge. A round is a set of device pairs exchanging data in both
/// directions; a directed link may carry at most one transfer per round.
struct DeviceTopology {
  enum class Kind { DEVICE, SWITCH, HOST };
  struct Endpoint {
    Kind kind = Kind::DEVICE;
    std::size_t index = 0;
    bool operator==(const Endpoint&) const = default;
  };
  struct Link {
    Endpoint a, b;
    double bandwidth = 1.0;
    bool bidirectional = true;
  };

  std::size_t num_devices = 0;
  std::vector<std::vector<std::size_t>> switches;  // device ids per switch
  std::vector<Link> links;

  /// Vertex numbering: devices, then switches, then the host.
  [[nodiscard]] std::size_t num_vertices() const noexcept { return num_devices + switches.size() + 1; }
  [[nodiscard]] std::size_t vertex(const Endpoint& e) const;
  /// Switch index holding `device`, if any.
  [[nodiscard]] std::optional<std::size_t> switch_of(std::size_t device) const;
  /// Throws std::invalid_argument on bad ids, bandwidth, or a device that
  /// cannot reach every other device.
  void validate() const;
};

/// Line format: "device N", "switch S: d0 d1 ...", "link a b bw [uni]".
/// Endpoints are device ids, "swK" or "host"; '#' starts a comment.
DeviceTopology parse_topology(std::istream& in, const std::string& source_name = "<topology>");
DeviceTopology read_topology_file(const std::string& path);

/// Four devices, two PCIe switches of two, switches bridged by the host.
DeviceTopology two_switch_topology();
/// `groups` switches of `per_group` devices each, all bridged by the host.
DeviceTopology switched_topology(std::size_t groups, std::size_t per_group);

struct Request {
  std::size_t src = 0;  // owner of the data
  std::size_t dst = 0;  // requester
  std::uint64_t payload_bytes = 0;
  std::uint64_t ids = 0;  // rows requested (index count)
};

/// One request per ordered device pair, equal payloads.
std::vector<Request> all_to_all_requests(std::size_t devices, std::uint64_t payload_bytes, std::uint64_t ids = 0);

struct Transfer {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::uint64_t bytes = 0;
  std::uint64_t ids = 0;
};

struct RoundSchedule {
  std::vector<std::vector<Transfer>> rounds;
  [[nodiscard]] std::size_t num_rounds() const noexcept { return rounds.size(); }
};

/// Directed arcs (link * 2 + direction) on the route src -> dst.
std::vector<std::size_t> route(const DeviceTopology& topo, std::size_t src, std::size_t dst);

/// Intra-switch pairs first (round-robin per switch), then the remaining
/// pairs packed greedily into further rounds.
RoundSchedule plan_rounds(const DeviceTopology& topo, const std::vector<Request>& requests);

/// nullopt when the schedule covers every request exactly once, conserves
/// bytes and never reuses a directed arc within a round; otherwise the
/// first violation found.
std::optional<std::string> validate_schedule(const DeviceTopology& topo, const std::vector<Request>& requests,
                                             const RoundSchedule& schedule);

/// Lower bound on rounds for the pair-exchange model: the number of pairs
/// whose exchange crosses the busiest directed arc.
std::size_t round_lower_bound(const DeviceTopology& topo, const std::vector<Request>& requests);

/// Exhaustive search for a valid pair-exchange schedule with at most
/// `max_rounds` rounds. Returns the smallest one found, or nullopt.
std::optional<RoundSchedule> brute_force_schedule(const DeviceTopology& topo, const std::vector<Request>& requests,
                                                  std::size_t max_rounds);

enum class TransferMode { ONE_SIDED, TWO_SIDED };

inline constexpr std::uint64_t kIndexWidthBytes = 8;

struct TrafficStats {
  std::size_t rounds = 0;
  /// per_round_arc_bytes[r][arc]
  std::vector<std::vector<std::uint64_t>> per_round_arc_bytes;
  std::uint64_t payload_bytes = 0;
  std::uint64_t index_bytes = 0;
  std::uint64_t sync_events = 0;
  /// Sum over rounds of the slowest arc's bytes / bandwidth.
  double completion_proxy = 0.0;
  /// Largest bytes any directed arc carries within one round.
  std::uint64_t max_link_load = 0;

  [[nodiscard]] std::uint64_t total_bytes() const noexcept { return payload_bytes + index_bytes; }
};

/// Accounts a planned multi-round fetch. TWO_SIDED adds ids * 8 index bytes
/// on the reverse route and one synchronization event per request.
TrafficStats simulate_fetch(const std::vector<Request>& requests, TransferMode mode, const DeviceTopology& topo);
/// Same accounting with every transfer issued in a single round.
TrafficStats simulate_single_shot(const std::vector<Request>& requests, TransferMode mode,
                                  const DeviceTopology& topo);

/// Contiguous range ownership, sizes balanced within one node.
std::vector<std::uint32_t> partition_features(std::size_t num_nodes, std::size_t devices);

/// Requests for device d fetching `needed[d]` rows owned elsewhere.
std::vector<Request> feature_requests(const std::vector<std::uint32_t>& owner,
                                      const std::vector<std::vector<std::uint32_t>>& needed,
                                      std::uint64_t row_bytes, std::size_t devices);

}  // namespace hgnn
