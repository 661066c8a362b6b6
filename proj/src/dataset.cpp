#include "hgnn/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hgnn/errors.hpp"

namespace hgnn {

namespace fs = std::filesystem;

std::size_t Dataset::num_classes() const {
  std::int32_t mx = -1;
  for (auto y : labels) mx = std::max(mx, y);
  return static_cast<std::size_t>(mx + 1);
}

void Dataset::validate() const {
  graph.validate();
  if (features.rows() != graph.num_nodes)
    throw std::invalid_argument("Dataset: " + std::to_string(features.rows()) + " feature rows for " +
                                std::to_string(graph.num_nodes) + " nodes");
  if (labels.size() != graph.num_nodes)
    throw std::invalid_argument("Dataset: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(graph.num_nodes) + " nodes");
  for (auto y : labels)
    if (y < 0) throw std::invalid_argument("Dataset: negative label");
  std::vector<std::uint8_t> seen(graph.num_nodes, 0);
  for (const auto* split : {&train, &val, &test}) {
    for (NodeId v : *split) {
      if (v >= graph.num_nodes) throw std::invalid_argument("Dataset: split id " + std::to_string(v) + " out of range");
      if (seen[v]) throw std::invalid_argument("Dataset: node " + std::to_string(v) + " appears in more than one split");
      seen[v] = 1;
    }
  }
}

namespace {

std::uint64_t load_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void store_u64_le(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::ifstream open_or_throw(const fs::path& path) {
  if (!fs::exists(path)) throw ParseError(path.string(), 0, "missing file");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return in;
}

template <typename Int>
std::vector<Int> read_int_lines(const fs::path& path, const char* what) {
  auto in = open_or_throw(path);
  std::vector<Int> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    Int v{};
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size())
      throw ParseError(path.string(), lineno, std::string("expected one ") + what + ", got \"" + t + "\"");
    out.push_back(v);
  }
  return out;
}

}  // namespace

EmbMatrix read_features_bin(const std::string& path) {
  auto in = open_or_throw(path);
  unsigned char header[16];
  if (!in.read(reinterpret_cast<char*>(header), 16)) throw ParseError(path, 0, "truncated 16-byte header");
  const std::uint64_t rows = load_u64_le(header), cols = load_u64_le(header + 8);
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  if (cols != 0 && rows > (file_size / 4) / cols + 1) throw ParseError(path, 0, "header shape larger than file");
  const std::uint64_t expected = 16 + rows * cols * 4;
  if (file_size != expected)
    throw ParseError(path, 0, "expected " + std::to_string(expected) + " bytes for " + std::to_string(rows) + "x" +
                                  std::to_string(cols) + " floats, file has " + std::to_string(file_size));
  in.seekg(16);
  std::vector<unsigned char> raw(rows * cols * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  EmbMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const unsigned char* p = raw.data() + 4 * i;
    const std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
                               (std::uint32_t(p[3]) << 24);
    m.storage()[i] = std::bit_cast<float>(bits);
  }
  return m;
}

void write_features_bin(const EmbMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  unsigned char header[16];
  store_u64_le(header, m.rows());
  store_u64_le(header + 8, m.cols());
  out.write(reinterpret_cast<const char*>(header), 16);
  std::vector<unsigned char> raw(m.size() * 4);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(m.storage()[i]);
    for (int b = 0; b < 4; ++b) raw[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

Dataset ingest(const std::string& dir) {
  const fs::path root(dir);
  Dataset ds;
  const fs::path labels_path = root / "labels.txt";
  const fs::path features_path = root / "features.bin";
  // Check presence of everything up front so the first missing file is named.
  for (const char* name : {"edges.txt", "features.bin", "labels.txt", "train.txt", "val.txt", "test.txt"}) {
    if (!fs::exists(root / name)) throw ParseError((root / name).string(), 0, "missing file");
  }

  ds.labels = read_int_lines<std::int32_t>(labels_path, "class id");
  const std::size_t n = ds.labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.labels[i] < 0) throw ParseError(labels_path.string(), i + 1, "class id must be non-negative");
  }
  ds.features = read_features_bin(features_path.string());
  if (ds.features.rows() != n)
    throw ParseError(features_path.string(), 0,
                     "features.bin has " + std::to_string(ds.features.rows()) + " rows but labels.txt lists " +
                         std::to_string(n) + " nodes");
  ds.graph = read_edge_list_file((root / "edges.txt").string(), n);
  if (n == 0) throw ParseError(labels_path.string(), 0, "no nodes");

  auto read_split = [&](const char* name) {
    const fs::path p = root / name;
    auto ids = read_int_lines<std::uint64_t>(p, "node id");
    std::vector<NodeId> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] >= n) throw ParseError(p.string(), i + 1, "node id " + std::to_string(ids[i]) + " out of range");
      out.push_back(static_cast<NodeId>(ids[i]));
    }
    return out;
  };
  ds.train = read_split("train.txt");
  ds.val = read_split("val.txt");
  ds.test = read_split("test.txt");
  try {
    ds.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(root.string(), 0, e.what());
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  ds.validate();
  const fs::path root(dir);
  fs::create_directories(root);
  {
    std::ofstream out(root / "edges.txt");
    write_edge_list(out, ds.graph);
  }
  write_features_bin(ds.features, (root / "features.bin").string());
  {
    std::ofstream out(root / "labels.txt");
    for (auto y : ds.labels) out << y << '\n';
  }
  auto write_ids = [&](const char* name, const std::vector<NodeId>& ids) {
    std::ofstream out(root / name);
    for (NodeId v : ids) out << v << '\n';
  };
  write_ids("train.txt", ds.train);
  write_ids("val.txt", ds.val);
  write_ids("test.txt", ds.test);
}

void SynthParams::validate() const {
  if (num_nodes < 2) throw std::invalid_argument("synth: need n >= 2");
  if (feature_dim == 0) throw std::invalid_argument("synth: dim must be >= 1");
  if (!(noise >= 0.0)) throw std::invalid_argument("synth: noise must be >= 0");
  if (!(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0))
    throw std::invalid_argument("synth: need train > 0, val >= 0 and train + val < 1");
  if (model == SynthModel::SBM) {
    if (blocks == 0 || blocks > num_nodes) throw std::invalid_argument("synth: blocks must be in [1, n]");
    if (!(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0))
      throw std::invalid_argument("synth: probabilities must be in [0, 1]");
  } else {
    if (m == 0 || m >= num_nodes) throw std::invalid_argument("synth: m must be in [1, n)");
    if (classes == 0) throw std::invalid_argument("synth: classes must be >= 1");
    if (!(homophily >= 0.0 && homophily <= 1.0)) throw std::invalid_argument("synth: homophily must be in [0, 1]");
  }
}

SynthParams parse_synth_spec(const std::string& spec) {
  SynthParams p;
  const auto colon = spec.find(':');
  const std::string model = spec.substr(0, colon);
  if (model == "sbm") {
    p.model = SynthModel::SBM;
  } else if (model == "powerlaw" || model == "power_law") {
    p.model = SynthModel::POWER_LAW;
  } else {
    throw std::invalid_argument("synth: unknown model \"" + model + "\" (expected sbm or powerlaw)");
  }
  if (colon != std::string::npos) {
    std::stringstream ss(spec.substr(colon + 1));
    std::string kv;
    while (std::getline(ss, kv, ',')) {
      if (kv.empty()) continue;
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("synth: expected key=value, got \"" + kv + "\"");
      const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      try {
        if (key == "n") p.num_nodes = std::stoull(val);
        else if (key == "m") p.m = std::stoull(val);
        else if (key == "blocks" || key == "b") p.blocks = std::stoull(val);
        else if (key == "p_in") p.p_in = std::stod(val);
        else if (key == "p_out") p.p_out = std::stod(val);
        else if (key == "classes") p.classes = std::stoull(val);
        else if (key == "homophily") p.homophily = std::stod(val);
        else if (key == "dim") p.feature_dim = std::stoull(val);
        else if (key == "noise") p.noise = std::stod(val);
        else if (key == "train") p.train_frac = std::stod(val);
        else if (key == "val") p.val_frac = std::stod(val);
        else if (key == "seed") p.seed = std::stoull(val);
        else throw std::invalid_argument("synth: unknown key \"" + key + "\"");
      } catch (const std::invalid_argument&) {
        throw;
      } catch (const std::exception&) {
        throw std::invalid_argument("synth: bad value for " + key + ": \"" + val + "\"");
      }
    }
  }
  p.validate();
  return p;
}

namespace {

// Visits every index in [0, total) independently with probability p,
// skipping geometrically between hits.
template <typename F>
void bernoulli_indices(std::uint64_t total, double p, Rng& rng, F&& visit) {
  if (p <= 0.0 || total == 0) return;
  if (p >= 1.0) {
    for (std::uint64_t i = 0; i < total; ++i) visit(i);
    return;
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double log_q = std::log1p(-p);
  std::uint64_t i = 0;
  while (true) {
    const double u = 1.0 - unif(rng);  // (0, 1]
    const double skip = std::floor(std::log(u) / log_q);
    if (skip >= static_cast<double>(total - i)) return;
    i += static_cast<std::uint64_t>(skip);
    visit(i);
    if (++i >= total) return;
  }
}

void add_undirected(CooGraph& g, NodeId a, NodeId b) {
  g.add_edge(a, b);
  g.add_edge(b, a);
}

}  // namespace

Dataset synth_graph(const SynthParams& params) {
  params.validate();
  Rng rng(derive_seed(params.seed, 0x5157));
  const std::size_t n = params.num_nodes;
  Dataset ds;
  ds.graph.num_nodes = n;
  ds.labels.assign(n, 0);
  std::size_t num_classes = 0;

  if (params.model == SynthModel::SBM) {
    const std::size_t b = params.blocks;
    num_classes = b;
    std::vector<std::size_t> first(b + 1);
    for (std::size_t k = 0; k <= b; ++k) first[k] = k * n / b;
    for (std::size_t k = 0; k < b; ++k)
      for (std::size_t v = first[k]; v < first[k + 1]; ++v) ds.labels[v] = static_cast<std::int32_t>(k);
    for (std::size_t a = 0; a < b; ++a) {
      const std::uint64_t sa = first[a + 1] - first[a];
      // Pairs inside block a: index -> (i, j), i < j, row-major over i.
      bernoulli_indices(sa * (sa - 1) / 2, params.p_in, rng, [&](std::uint64_t idx) {
        // Solve for i: rows have lengths sa-1, sa-2, ...
        std::uint64_t i = 0, rem = idx;
        // Closed form with a correction step for rounding.
        const double s = static_cast<double>(sa);
        double guess = std::floor(((2 * s - 1) - std::sqrt((2 * s - 1) * (2 * s - 1) - 8.0 * static_cast<double>(idx))) / 2);
        i = static_cast<std::uint64_t>(std::max(0.0, guess));
        auto row_start = [&](std::uint64_t r) { return r * (2 * sa - r - 1) / 2; };
        while (i > 0 && row_start(i) > idx) --i;
        while (row_start(i + 1) <= idx) ++i;
        rem = idx - row_start(i);
        const std::uint64_t j = i + 1 + rem;
        add_undirected(ds.graph, static_cast<NodeId>(first[a] + i), static_cast<NodeId>(first[a] + j));
      });
      for (std::size_t c = a + 1; c < b; ++c) {
        const std::uint64_t sc = first[c + 1] - first[c];
        bernoulli_indices(sa * sc, params.p_out, rng, [&](std::uint64_t idx) {
          add_undirected(ds.graph, static_cast<NodeId>(first[a] + idx / sc), static_cast<NodeId>(first[c] + idx % sc));
        });
      }
    }
  } else {
    num_classes = params.classes;
    std::uniform_int_distribution<std::int32_t> cls(0, static_cast<std::int32_t>(params.classes) - 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::size_t m = params.m;
    // Seed clique on m+1 nodes, then preferential attachment via the
    // endpoint list (each node appears once per incident edge).
    std::vector<NodeId> endpoints;
    for (std::size_t v = 0; v <= m; ++v) {
      ds.labels[v] = cls(rng);
      for (std::size_t u = 0; u < v; ++u) {
        add_undirected(ds.graph, static_cast<NodeId>(u), static_cast<NodeId>(v));
        endpoints.push_back(static_cast<NodeId>(u));
        endpoints.push_back(static_cast<NodeId>(v));
      }
    }
    std::vector<NodeId> targets;
    for (std::size_t v = m + 1; v < n; ++v) {
      targets.clear();
      while (targets.size() < m) {
        std::uniform_int_distribution<std::size_t> pick(0, endpoints.size() - 1);
        const NodeId t = endpoints[pick(rng)];
        if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
      }
      ds.labels[v] = unif(rng) < params.homophily ? ds.labels[targets.front()] : cls(rng);
      for (NodeId t : targets) {
        add_undirected(ds.graph, t, static_cast<NodeId>(v));
        endpoints.push_back(t);
        endpoints.push_back(static_cast<NodeId>(v));
      }
    }
  }

  // Class means ~ N(0, 1) per coordinate; features = mean + N(0, noise^2).
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix<double> means(num_classes, params.feature_dim);
  for (auto& v : means.storage()) v = gauss(rng);
  ds.features = EmbMatrix(n, params.feature_dim);
  for (std::size_t v = 0; v < n; ++v) {
    auto mu = means.row(static_cast<std::size_t>(ds.labels[v]));
    auto row = ds.features.row(v);
    for (std::size_t k = 0; k < params.feature_dim; ++k)
      row[k] = static_cast<float>(mu[k] + params.noise * gauss(rng));
  }

  std::vector<NodeId> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<NodeId>(i);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(params.train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(params.val_frac * static_cast<double>(n));
  ds.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  ds.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                order.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)));
  ds.test.assign(order.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)), order.end());
  return ds;
}

}  // namespace hgnn
