#include "hgnn/comms.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hgnn/errors.hpp"

namespace hgnn {

namespace {

using Kind = DeviceTopology::Kind;
using Endpoint = DeviceTopology::Endpoint;

std::string describe(const Endpoint& e) {
  switch (e.kind) {
    case Kind::DEVICE: return std::to_string(e.index);
    case Kind::SWITCH: return "sw" + std::to_string(e.index);
    case Kind::HOST: return "host";
  }
  return "?";
}

bool parse_size(std::string_view tok, std::size_t& out) {
  if (tok.empty()) return false;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && p == tok.data() + tok.size();
}

std::optional<Endpoint> parse_endpoint(const std::string& tok) {
  std::size_t idx = 0;
  if (tok == "host") return Endpoint{Kind::HOST, 0};
  if (tok.rfind("sw", 0) == 0 && parse_size(std::string_view(tok).substr(2), idx)) return Endpoint{Kind::SWITCH, idx};
  if (parse_size(tok, idx)) return Endpoint{Kind::DEVICE, idx};
  return std::nullopt;
}

struct Arc {
  std::size_t to;
  std::size_t id;  // link * 2 + direction
};

std::vector<std::vector<Arc>> arc_lists(const DeviceTopology& topo) {
  std::vector<std::vector<Arc>> adj(topo.num_vertices());
  for (std::size_t i = 0; i < topo.links.size(); ++i) {
    const auto& ln = topo.links[i];
    const std::size_t a = topo.vertex(ln.a), b = topo.vertex(ln.b);
    adj[a].push_back({b, 2 * i});
    if (ln.bidirectional) adj[b].push_back({a, 2 * i + 1});
  }
  return adj;
}

std::optional<std::vector<std::size_t>> find_route(const DeviceTopology& topo,
                                                   const std::vector<std::vector<Arc>>& adj, std::size_t src,
                                                   std::size_t dst) {
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> via_arc(adj.size(), kNone), prev(adj.size(), kNone);
  std::vector<std::uint8_t> seen(adj.size(), 0);
  std::deque<std::size_t> queue{src};
  seen[src] = 1;
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    if (v == dst) break;
    // Devices terminate traffic; only switches and the host forward it.
    if (v != src && v < topo.num_devices) continue;
    for (const Arc& a : adj[v]) {
      if (seen[a.to]) continue;
      seen[a.to] = 1;
      prev[a.to] = v;
      via_arc[a.to] = a.id;
      queue.push_back(a.to);
    }
  }
  if (!seen[dst]) return std::nullopt;
  std::vector<std::size_t> path;
  for (std::size_t v = dst; v != src; v = prev[v]) path.push_back(via_arc[v]);
  std::reverse(path.begin(), path.end());
  return path;
}

// Unordered device pair with every arc its exchange occupies.
struct PairJob {
  std::size_t a, b;  // a < b
  std::vector<std::size_t> arcs;
  std::vector<std::size_t> requests;  // indices into the request list
};

std::vector<PairJob> build_pairs(const DeviceTopology& topo, const std::vector<Request>& requests) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> index;
  std::vector<PairJob> jobs;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const Request& r = requests[i];
    if (r.src >= topo.num_devices || r.dst >= topo.num_devices)
      throw std::invalid_argument("request names device outside the topology");
    if (r.src == r.dst) throw std::invalid_argument("request from a device to itself");
    const auto key = std::minmax(r.src, r.dst);
    auto [it, fresh] = index.emplace(key, jobs.size());
    if (fresh) {
      PairJob job{key.first, key.second, {}, {}};
      auto fwd = route(topo, key.first, key.second);
      auto bwd = route(topo, key.second, key.first);
      job.arcs = fwd;
      job.arcs.insert(job.arcs.end(), bwd.begin(), bwd.end());
      std::sort(job.arcs.begin(), job.arcs.end());
      job.arcs.erase(std::unique(job.arcs.begin(), job.arcs.end()), job.arcs.end());
      jobs.push_back(std::move(job));
    }
    jobs[it->second].requests.push_back(i);
  }
  return jobs;
}

struct RoundPacker {
  std::size_t num_arcs;
  std::vector<std::vector<std::uint8_t>> used;  // per round, per arc
  std::vector<std::vector<std::size_t>> members;

  bool fits(std::size_t r, const PairJob& job) const {
    for (std::size_t a : job.arcs)
      if (used[r][a]) return false;
    return true;
  }
  void place(std::size_t r, std::size_t j, const PairJob& job) {
    for (std::size_t a : job.arcs) used[r][a] = 1;
    members[r].push_back(j);
  }
  void remove(std::size_t r, const PairJob& job) {
    for (std::size_t a : job.arcs) used[r][a] = 0;
    members[r].pop_back();
  }
  std::size_t open() {
    used.emplace_back(num_arcs, 0);
    members.emplace_back();
    return used.size() - 1;
  }
};

RoundSchedule to_schedule(const std::vector<Request>& requests, const std::vector<PairJob>& jobs,
                          const std::vector<std::vector<std::size_t>>& members) {
  RoundSchedule s;
  for (const auto& round : members) {
    if (round.empty()) continue;
    auto& out = s.rounds.emplace_back();
    for (std::size_t j : round)
      for (std::size_t ri : jobs[j].requests) {
        const Request& r = requests[ri];
        out.push_back(Transfer{r.src, r.dst, r.payload_bytes, r.ids});
      }
  }
  return s;
}

}  // namespace

std::size_t DeviceTopology::vertex(const Endpoint& e) const {
  switch (e.kind) {
    case Kind::DEVICE:
      if (e.index >= num_devices) throw std::out_of_range("device " + std::to_string(e.index) + " not declared");
      return e.index;
    case Kind::SWITCH:
      if (e.index >= switches.size()) throw std::out_of_range("switch sw" + std::to_string(e.index) + " not declared");
      return num_devices + e.index;
    case Kind::HOST: return num_devices + switches.size();
  }
  throw std::logic_error("unreachable");
}

std::optional<std::size_t> DeviceTopology::switch_of(std::size_t device) const {
  for (std::size_t s = 0; s < switches.size(); ++s)
    if (std::find(switches[s].begin(), switches[s].end(), device) != switches[s].end()) return s;
  return std::nullopt;
}

void DeviceTopology::validate() const {
  if (num_devices == 0) throw std::invalid_argument("topology: no devices");
  std::vector<int> owner(num_devices, -1);
  for (std::size_t s = 0; s < switches.size(); ++s) {
    for (std::size_t d : switches[s]) {
      if (d >= num_devices) throw std::invalid_argument("topology: switch sw" + std::to_string(s) + " lists unknown device " + std::to_string(d));
      if (owner[d] != -1) throw std::invalid_argument("topology: device " + std::to_string(d) + " in two switches");
      owner[d] = static_cast<int>(s);
    }
  }
  for (const Link& ln : links) {
    (void)vertex(ln.a);
    (void)vertex(ln.b);
    if (ln.a == ln.b) throw std::invalid_argument("topology: self link at " + describe(ln.a));
    if (!(ln.bandwidth > 0.0)) throw std::invalid_argument("topology: link bandwidth must be positive");
  }
  const auto adj = arc_lists(*this);
  for (std::size_t a = 0; a < num_devices; ++a)
    for (std::size_t b = 0; b < num_devices; ++b)
      if (a != b && !find_route(*this, adj, a, b))
        throw std::invalid_argument("topology: device " + std::to_string(b) + " unreachable from device " +
                                    std::to_string(a));
}

DeviceTopology parse_topology(std::istream& in, const std::string& source_name) {
  DeviceTopology topo;
  bool have_devices = false;
  struct PendingLink {
    std::string a, b;
    double bw;
    bool uni;
    std::size_t line;
  };
  std::vector<PendingLink> pending;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string kw;
    if (!(ss >> kw)) continue;
    if (kw == "device" || kw == "devices") {
      std::string n;
      std::size_t count = 0;
      if (!(ss >> n) || !parse_size(n, count) || count == 0) throw ParseError(source_name, lineno, "expected \"device N\" with N >= 1");
      topo.num_devices = count;
      have_devices = true;
    } else if (kw == "switch") {
      std::string id;
      ss >> id;
      if (!id.empty() && id.back() == ':') id.pop_back();
      else {
        std::string colon;
        ss >> colon;
        if (colon != ":") throw ParseError(source_name, lineno, "expected \"switch S: d0 d1 ...\"");
      }
      std::size_t s = 0;
      if (id.rfind("sw", 0) == 0) id = id.substr(2);
      if (!parse_size(id, s)) throw ParseError(source_name, lineno, "bad switch id \"" + id + "\"");
      if (topo.switches.size() <= s) topo.switches.resize(s + 1);
      std::string tok;
      while (ss >> tok) {
        std::size_t d = 0;
        if (!parse_size(tok, d)) throw ParseError(source_name, lineno, "bad device id \"" + tok + "\"");
        topo.switches[s].push_back(d);
      }
    } else if (kw == "link") {
      PendingLink pl{};
      std::string bw, flag;
      if (!(ss >> pl.a >> pl.b >> bw)) throw ParseError(source_name, lineno, "expected \"link a b bw [uni]\"");
      try {
        std::size_t used = 0;
        pl.bw = std::stod(bw, &used);
        if (used != bw.size()) throw std::invalid_argument(bw);
      } catch (const std::exception&) {
        throw ParseError(source_name, lineno, "bad bandwidth \"" + bw + "\"");
      }
      if (ss >> flag) {
        if (flag != "uni") throw ParseError(source_name, lineno, "unknown link flag \"" + flag + "\"");
        pl.uni = true;
      }
      pl.line = lineno;
      pending.push_back(pl);
    } else {
      throw ParseError(source_name, lineno, "unknown directive \"" + kw + "\"");
    }
  }
  if (!have_devices) throw ParseError(source_name, 0, "missing \"device N\" line");
  for (const PendingLink& pl : pending) {
    auto a = parse_endpoint(pl.a), b = parse_endpoint(pl.b);
    if (!a || !b) throw ParseError(source_name, pl.line, "bad endpoint \"" + (!a ? pl.a : pl.b) + "\"");
    DeviceTopology::Link ln{*a, *b, pl.bw, !pl.uni};
    try {
      (void)topo.vertex(ln.a);
      (void)topo.vertex(ln.b);
    } catch (const std::out_of_range& e) {
      throw ParseError(source_name, pl.line, e.what());
    }
    topo.links.push_back(ln);
  }
  try {
    topo.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(source_name, 0, e.what());
  }
  return topo;
}

DeviceTopology read_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  return parse_topology(in, path);
}

DeviceTopology switched_topology(std::size_t groups, std::size_t per_group) {
  DeviceTopology t;
  t.num_devices = groups * per_group;
  t.switches.resize(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t k = 0; k < per_group; ++k) {
      const std::size_t d = g * per_group + k;
      t.switches[g].push_back(d);
      t.links.push_back({{Kind::DEVICE, d}, {Kind::SWITCH, g}, 1.0, true});
    }
  }
  for (std::size_t g = 0; g < groups; ++g) t.links.push_back({{Kind::SWITCH, g}, {Kind::HOST, 0}, 1.0, true});
  return t;
}

DeviceTopology two_switch_topology() { return switched_topology(2, 2); }

std::vector<Request> all_to_all_requests(std::size_t devices, std::uint64_t payload_bytes, std::uint64_t ids) {
  std::vector<Request> out;
  for (std::size_t s = 0; s < devices; ++s)
    for (std::size_t d = 0; d < devices; ++d)
      if (s != d) out.push_back({s, d, payload_bytes, ids});
  return out;
}

std::vector<std::size_t> route(const DeviceTopology& topo, std::size_t src, std::size_t dst) {
  if (src >= topo.num_devices || dst >= topo.num_devices) throw std::out_of_range("route: unknown device");
  auto path = find_route(topo, arc_lists(topo), src, dst);
  if (!path) throw std::invalid_argument("route: device " + std::to_string(dst) + " unreachable from " + std::to_string(src));
  return *path;
}

RoundSchedule plan_rounds(const DeviceTopology& topo, const std::vector<Request>& requests) {
  topo.validate();
  const auto jobs = build_pairs(topo, requests);
  RoundPacker packer{2 * topo.links.size(), {}, {}};

  // Phase 1: pairs inside one switch, in circle-method order so that each
  // switch contributes a perfect matching per round where possible.
  std::vector<std::size_t> intra, cross;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> job_of;
  for (std::size_t j = 0; j < jobs.size(); ++j) job_of[{jobs[j].a, jobs[j].b}] = j;
  std::vector<std::uint8_t> taken(jobs.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> ordered;  // (circle round, job)
  for (const auto& members : topo.switches) {
    std::vector<std::size_t> ring(members.begin(), members.end());
    std::sort(ring.begin(), ring.end());
    if (ring.size() % 2 == 1) ring.push_back(static_cast<std::size_t>(-1));  // bye
    const std::size_t n = ring.size();
    for (std::size_t r = 0; r + 1 < n; ++r) {
      for (std::size_t i = 0; i < n / 2; ++i) {
        const std::size_t x = ring[i], y = ring[n - 1 - i];
        if (x == static_cast<std::size_t>(-1) || y == static_cast<std::size_t>(-1)) continue;
        auto it = job_of.find(std::minmax(x, y));
        if (it != job_of.end() && !taken[it->second]) {
          ordered.emplace_back(r, it->second);
          taken[it->second] = 1;
        }
      }
      std::rotate(ring.begin() + 1, ring.end() - 1, ring.end());
    }
  }
  std::stable_sort(ordered.begin(), ordered.end(), [](auto& l, auto& r) { return l.first < r.first; });
  for (auto [r, j] : ordered) intra.push_back(j);
  for (std::size_t j = 0; j < jobs.size(); ++j)
    if (!taken[j]) cross.push_back(j);

  auto first_fit = [&](const std::vector<std::size_t>& order, std::size_t first_round) {
    for (std::size_t j : order) {
      std::size_t r = first_round;
      while (r < packer.used.size() && !packer.fits(r, jobs[j])) ++r;
      if (r == packer.used.size()) r = packer.open();
      packer.place(r, j, jobs[j]);
    }
  };
  first_fit(intra, 0);
  // Phase 2 never mixes into intra-switch rounds.
  first_fit(cross, packer.used.size());
  return to_schedule(requests, jobs, packer.members);
}

std::optional<std::string> validate_schedule(const DeviceTopology& topo, const std::vector<Request>& requests,
                                             const RoundSchedule& schedule) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::uint64_t>> want;
  std::uint64_t want_bytes = 0, got_bytes = 0;
  for (const Request& r : requests) {
    want[{r.src, r.dst}].push_back(r.payload_bytes);
    want_bytes += r.payload_bytes;
  }
  for (std::size_t r = 0; r < schedule.rounds.size(); ++r) {
    std::vector<std::uint8_t> used(2 * topo.links.size(), 0);
    // Arcs are reserved per pair exchange: both routes of the pair.
    std::map<std::pair<std::size_t, std::size_t>, bool> pairs;
    for (const Transfer& t : schedule.rounds[r]) {
      auto it = want.find({t.src, t.dst});
      if (it == want.end() || it->second.empty())
        return "round " + std::to_string(r + 1) + ": transfer " + std::to_string(t.src) + "->" + std::to_string(t.dst) +
               " not requested or delivered twice";
      auto pos = std::find(it->second.begin(), it->second.end(), t.bytes);
      if (pos == it->second.end()) return "round " + std::to_string(r + 1) + ": payload size changed in transit";
      it->second.erase(pos);
      got_bytes += t.bytes;
      pairs[std::minmax(t.src, t.dst)] = true;
    }
    for (const auto& [p, _] : pairs) {
      auto arcs = route(topo, p.first, p.second);
      auto back = route(topo, p.second, p.first);
      arcs.insert(arcs.end(), back.begin(), back.end());
      std::sort(arcs.begin(), arcs.end());
      arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());
      for (std::size_t a : arcs) {
        if (used[a])
          return "round " + std::to_string(r + 1) + ": link " + std::to_string(a / 2) +
                 " used twice in the same direction";
        used[a] = 1;
      }
    }
  }
  for (const auto& [key, left] : want)
    if (!left.empty()) return "transfer " + std::to_string(key.first) + "->" + std::to_string(key.second) + " never scheduled";
  if (want_bytes != got_bytes) return "byte totals differ";
  return std::nullopt;
}

std::size_t round_lower_bound(const DeviceTopology& topo, const std::vector<Request>& requests) {
  const auto jobs = build_pairs(topo, requests);
  std::vector<std::size_t> load(2 * topo.links.size(), 0);
  for (const PairJob& j : jobs)
    for (std::size_t a : j.arcs) ++load[a];
  return load.empty() ? 0 : *std::max_element(load.begin(), load.end());
}

std::optional<RoundSchedule> brute_force_schedule(const DeviceTopology& topo, const std::vector<Request>& requests,
                                                  std::size_t max_rounds) {
  topo.validate();
  const auto jobs = build_pairs(topo, requests);
  if (jobs.empty()) return RoundSchedule{};
  const std::size_t lb = std::max<std::size_t>(1, round_lower_bound(topo, requests));
  // Most constrained pairs first.
  std::vector<std::size_t> order(jobs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return jobs[x].arcs.size() > jobs[y].arcs.size(); });

  for (std::size_t R = lb; R <= max_rounds; ++R) {
    RoundPacker packer{2 * topo.links.size(), {}, {}};
    for (std::size_t r = 0; r < R; ++r) packer.open();
    std::size_t opened = 0;
    // Depth-first assignment; a pair may open at most one new round
    // (rounds are interchangeable).
    auto search = [&](auto&& self, std::size_t k) -> bool {
      if (k == order.size()) return true;
      const std::size_t j = order[k];
      const std::size_t limit = std::min(R, opened + 1);
      for (std::size_t r = 0; r < limit; ++r) {
        if (!packer.fits(r, jobs[j])) continue;
        const bool fresh = r == opened;
        packer.place(r, j, jobs[j]);
        if (fresh) ++opened;
        if (self(self, k + 1)) return true;
        if (fresh) --opened;
        packer.remove(r, jobs[j]);
      }
      return false;
    };
    if (search(search, 0)) return to_schedule(requests, jobs, packer.members);
  }
  return std::nullopt;
}

namespace {

TrafficStats account(const std::vector<Request>& requests, TransferMode mode, const DeviceTopology& topo,
                     const RoundSchedule& schedule) {
  TrafficStats st;
  st.rounds = schedule.num_rounds();
  const std::size_t arcs = 2 * topo.links.size();
  for (const auto& round : schedule.rounds) {
    auto& bytes = st.per_round_arc_bytes.emplace_back(arcs, 0);
    for (const Transfer& t : round) {
      for (std::size_t a : route(topo, t.src, t.dst)) bytes[a] += t.bytes;
      st.payload_bytes += t.bytes;
      if (mode == TransferMode::TWO_SIDED) {
        // The requester ships its index list to the owner and both sides
        // rendezvous before the payload moves.
        const std::uint64_t idx = t.ids * kIndexWidthBytes;
        for (std::size_t a : route(topo, t.dst, t.src)) bytes[a] += idx;
        st.index_bytes += idx;
        ++st.sync_events;
      }
    }
    double slowest = 0.0;
    for (std::size_t a = 0; a < arcs; ++a) {
      slowest = std::max(slowest, static_cast<double>(bytes[a]) / topo.links[a / 2].bandwidth);
      st.max_link_load = std::max(st.max_link_load, bytes[a]);
    }
    st.completion_proxy += slowest;
  }
  (void)requests;
  return st;
}

}  // namespace

TrafficStats simulate_fetch(const std::vector<Request>& requests, TransferMode mode, const DeviceTopology& topo) {
  if (requests.empty()) return TrafficStats{};
  return account(requests, mode, topo, plan_rounds(topo, requests));
}

TrafficStats simulate_single_shot(const std::vector<Request>& requests, TransferMode mode,
                                  const DeviceTopology& topo) {
  if (requests.empty()) return TrafficStats{};
  topo.validate();
  RoundSchedule one;
  auto& round = one.rounds.emplace_back();
  for (const Request& r : requests) round.push_back({r.src, r.dst, r.payload_bytes, r.ids});
  return account(requests, mode, topo, one);
}

std::vector<std::uint32_t> partition_features(std::size_t num_nodes, std::size_t devices) {
  if (devices == 0) throw std::invalid_argument("partition_features: need at least one device");
  std::vector<std::uint32_t> owner(num_nodes);
  const std::size_t base = num_nodes / devices, extra = num_nodes % devices;
  std::size_t v = 0;
  for (std::size_t d = 0; d < devices; ++d) {
    const std::size_t n = base + (d < extra ? 1 : 0);
    for (std::size_t k = 0; k < n; ++k) owner[v++] = static_cast<std::uint32_t>(d);
  }
  return owner;
}

std::vector<Request> feature_requests(const std::vector<std::uint32_t>& owner,
                                      const std::vector<std::vector<std::uint32_t>>& needed, std::uint64_t row_bytes,
                                      std::size_t devices) {
  if (needed.size() != devices) throw std::invalid_argument("feature_requests: need one node list per device");
  std::vector<Request> out;
  for (std::size_t d = 0; d < devices; ++d) {
    std::vector<std::uint64_t> rows(devices, 0);
    for (std::uint32_t v : needed[d]) {
      if (v >= owner.size()) throw std::out_of_range("feature_requests: node out of range");
      ++rows[owner[v]];
    }
    for (std::size_t o = 0; o < devices; ++o)
      if (o != d && rows[o] > 0) out.push_back({o, d, rows[o] * row_bytes, rows[o]});
  }
  return out;
}

}  // namespace hgnn
