#include "hgnn/graph_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "hgnn/errors.hpp"

namespace hgnn {

void CooGraph::validate() const {
  if (src.size() != dst.size()) {
    throw std::invalid_argument("CooGraph: src has " + std::to_string(src.size()) +
                                " entries but dst has " + std::to_string(dst.size()));
  }
  for (std::size_t e = 0; e < src.size(); ++e) {
    if (src[e] >= num_nodes || dst[e] >= num_nodes) {
      throw std::invalid_argument("CooGraph: edge " + std::to_string(e) + " (" +
                                  std::to_string(src[e]) + " -> " + std::to_string(dst[e]) +
                                  ") out of range for " + std::to_string(num_nodes) + " nodes");
    }
  }
}

namespace {

// Counting sort by dst; stable, so neighbors keep edge-list order.
void bucket_by_dst(const CooGraph& edges, std::vector<EdgeIdx>& offsets,
                   std::vector<NodeId>& cols) {
  edges.validate();
  offsets.assign(edges.num_nodes + 1, 0);
  for (NodeId d : edges.dst) ++offsets[d + 1];
  for (std::size_t i = 0; i < edges.num_nodes; ++i) offsets[i + 1] += offsets[i];
  cols.resize(edges.num_edges());
  std::vector<EdgeIdx> cursor(offsets.begin(), offsets.end() - 1);
  for (std::size_t e = 0; e < edges.num_edges(); ++e) cols[cursor[edges.dst[e]]++] = edges.src[e];
}

}  // namespace

CsrGraph build_csr(const CooGraph& edges) {
  CsrGraph g;
  g.num_nodes = edges.num_nodes;
  bucket_by_dst(edges, g.row_offsets, g.col_indices);
  return g;
}

Csr2Graph::Csr2Graph(std::vector<EdgeIdx> start, std::vector<EdgeIdx> end,
                     std::vector<NodeId> col_indices, std::size_t num_cols)
    : start_(std::move(start)), end_(std::move(end)), col_(std::move(col_indices)),
      num_cols_(num_cols) {
  if (start_.size() != end_.size()) throw std::invalid_argument("Csr2Graph: start/end length mismatch");
  for (std::size_t i = 0; i < start_.size(); ++i) {
    if (start_[i] > end_[i] || end_[i] > col_.size())
      throw std::invalid_argument("Csr2Graph: bad offsets for row " + std::to_string(i));
  }
  for (NodeId c : col_) {
    if (c >= num_cols_) throw std::invalid_argument("Csr2Graph: column id " + std::to_string(c) + " out of range");
  }
}

void Csr2Graph::check_node(NodeId v) const {
  if (v >= start_.size()) {
    throw std::out_of_range("Csr2Graph: node " + std::to_string(v) + " out of range for " +
                            std::to_string(start_.size()) + " nodes");
  }
}

std::span<const NodeId> Csr2Graph::neighbors(NodeId v) const {
  check_node(v);
  return {col_.data() + start_[v], col_.data() + end_[v]};
}

std::size_t Csr2Graph::in_degree(NodeId v) const {
  check_node(v);
  return static_cast<std::size_t>(end_[v] - start_[v]);
}

void Csr2Graph::prune_in_neighbors(NodeId v) {
  check_node(v);
  end_[v] = start_[v];
  ++prune_writes_;
}

bool Csr2Graph::is_pruned(NodeId v) const {
  check_node(v);
  return end_[v] == start_[v];
}

Csr2Graph build_csr2(const CooGraph& edges) {
  std::vector<EdgeIdx> offsets;
  std::vector<NodeId> cols;
  bucket_by_dst(edges, offsets, cols);
  std::vector<EdgeIdx> start(offsets.begin(), offsets.end() - 1);
  std::vector<EdgeIdx> end(offsets.begin() + 1, offsets.end());
  return Csr2Graph(std::move(start), std::move(end), std::move(cols), edges.num_nodes);
}

std::vector<std::size_t> in_degrees(const Csr2Graph& g) {
  std::vector<std::size_t> deg(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) deg[v] = g.in_degree(v);
  return deg;
}

std::vector<std::size_t> in_degrees(const CooGraph& g) {
  g.validate();
  std::vector<std::size_t> deg(g.num_nodes, 0);
  for (NodeId d : g.dst) ++deg[d];
  return deg;
}

CooGraph to_coo(const Csr2Graph& g) {
  CooGraph out;
  out.num_nodes = g.num_nodes();
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    for (NodeId u : g.neighbors(v)) out.add_edge(u, v);
  }
  return out;
}

double AdjacencyMatrixNorm::at(NodeId row, NodeId col) const {
  auto first = cols.begin() + static_cast<std::ptrdiff_t>(row_offsets[row]);
  auto last = cols.begin() + static_cast<std::ptrdiff_t>(row_offsets[row + 1]);
  auto it = std::lower_bound(first, last, col);
  if (it == last || *it != col) return 0.0;
  return weights[static_cast<std::size_t>(it - cols.begin())];
}

AdjacencyMatrixNorm normalize_adjacency(const CooGraph& edges) {
  const CsrGraph csr = build_csr(edges);
  const std::size_t n = edges.num_nodes;
  std::vector<double> inv_sqrt(n);
  for (std::size_t v = 0; v < n; ++v) {
    const double deg = static_cast<double>(csr.row_offsets[v + 1] - csr.row_offsets[v]);
    inv_sqrt[v] = 1.0 / std::sqrt(deg + 1.0);
  }

  AdjacencyMatrixNorm out;
  out.num_nodes = n;
  out.row_offsets.reserve(n + 1);
  out.row_offsets.push_back(0);
  std::vector<NodeId> row;
  for (NodeId v = 0; v < n; ++v) {
    auto nb = csr.neighbors(v);
    row.assign(nb.begin(), nb.end());
    row.push_back(v);  // the +I term
    std::sort(row.begin(), row.end());
    for (std::size_t i = 0; i < row.size();) {
      std::size_t j = i;
      while (j < row.size() && row[j] == row[i]) ++j;
      out.cols.push_back(row[i]);
      out.weights.push_back(static_cast<double>(j - i) * inv_sqrt[v] * inv_sqrt[row[i]]);
      i = j;
    }
    out.row_offsets.push_back(out.cols.size());
  }
  return out;
}

namespace {

bool parse_id(std::string_view tok, std::uint64_t& out) {
  if (tok.empty()) return false;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return toks;
}

}  // namespace

CooGraph read_edge_list(std::istream& in, std::size_t num_nodes, const std::string& source_name) {
  CooGraph g;
  std::string line;
  std::size_t lineno = 0;
  std::uint64_t max_id = 0;
  bool any = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 2) throw ParseError(source_name, lineno, "expected \"src dst\", got \"" + line + "\"");
    std::uint64_t s = 0, d = 0;
    if (!parse_id(toks[0], s) || !parse_id(toks[1], d))
      throw ParseError(source_name, lineno, "node ids must be non-negative base-10 integers");
    if (s >= kInvalidNode || d >= kInvalidNode) throw ParseError(source_name, lineno, "node id too large");
    if (num_nodes != 0 && (s >= num_nodes || d >= num_nodes)) {
      throw ParseError(source_name, lineno,
                       "node id out of range for " + std::to_string(num_nodes) + " nodes");
    }
    max_id = std::max({max_id, s, d});
    any = true;
    g.add_edge(static_cast<NodeId>(s), static_cast<NodeId>(d));
  }
  g.num_nodes = num_nodes != 0 ? num_nodes : (any ? static_cast<std::size_t>(max_id) + 1 : 0);
  return g;
}

CooGraph read_edge_list_file(const std::string& path, std::size_t num_nodes) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  return read_edge_list(in, num_nodes, path);
}

void write_edge_list(std::ostream& out, const CooGraph& g) {
  for (std::size_t e = 0; e < g.num_edges(); ++e) out << g.src[e] << ' ' << g.dst[e] << '\n';
}

}  // namespace hgnn
