#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hgnn/types.hpp"

namespace hgnn {

/// Edge list. Edge `e` goes src[e] -> dst[e]; adjacency structures built
/// from it index by dst, so each row lists in-neighbors.
struct CooGraph {
  std::vector<NodeId> src;
  std::vector<NodeId> dst;
  std::size_t num_nodes = 0;

  [[nodiscard]] std::size_t num_edges() const noexcept { return src.size(); }
  void add_edge(NodeId s, NodeId d) {
    src.push_back(s);
    dst.push_back(d);
  }
  /// Throws std::invalid_argument on length mismatch or out-of-range ids.
  void validate() const;
};

/// Classic CSR over in-neighbors. Kept as the reference format for the
/// CSR2 tests and for the full (read-only) training graph.
struct CsrGraph {
  std::vector<EdgeIdx> row_offsets;  // num_nodes + 1
  std::vector<NodeId> col_indices;
  std::size_t num_nodes = 0;

  [[nodiscard]] std::span<const NodeId> neighbors(NodeId v) const {
    return {col_indices.data() + row_offsets[v], col_indices.data() + row_offsets[v + 1]};
  }
};

CsrGraph build_csr(const CooGraph& edges);

/// CSR variant with separate start/end offsets per row. Removing all
/// in-neighbors of a node is a single write (`end[v] = start[v]`); the
/// column array is never touched after construction.
class Csr2Graph {
 public:
  Csr2Graph() = default;
  /// Takes ownership of prebuilt arrays. Validates the offset invariants.
  Csr2Graph(std::vector<EdgeIdx> start, std::vector<EdgeIdx> end, std::vector<NodeId> col_indices,
            std::size_t num_cols);

  [[nodiscard]] std::size_t num_nodes() const noexcept { return start_.size(); }
  [[nodiscard]] std::size_t num_edges() const noexcept { return col_.size(); }
  /// Upper bound (exclusive) on column ids; equals num_nodes() for square graphs.
  [[nodiscard]] std::size_t num_cols() const noexcept { return num_cols_; }

  [[nodiscard]] std::span<const NodeId> neighbors(NodeId v) const;
  [[nodiscard]] std::size_t in_degree(NodeId v) const;

  void prune_in_neighbors(NodeId v);
  [[nodiscard]] bool is_pruned(NodeId v) const;

  [[nodiscard]] std::span<const EdgeIdx> start() const noexcept { return start_; }
  [[nodiscard]] std::span<const EdgeIdx> end() const noexcept { return end_; }
  [[nodiscard]] std::span<const NodeId> col_indices() const noexcept { return col_; }

  /// Number of array cells (offsets + columns) held; always 2·V + E.
  [[nodiscard]] std::size_t storage_cells() const noexcept {
    return start_.size() + end_.size() + col_.size();
  }
  /// Cells written by prune_in_neighbors since construction.
  [[nodiscard]] std::uint64_t prune_writes() const noexcept { return prune_writes_; }

 private:
  void check_node(NodeId v) const;

  std::vector<EdgeIdx> start_;
  std::vector<EdgeIdx> end_;
  std::vector<NodeId> col_;
  std::size_t num_cols_ = 0;
  std::uint64_t prune_writes_ = 0;
};

Csr2Graph build_csr2(const CooGraph& edges);

/// Current (post-prune) in-degree of every node.
std::vector<std::size_t> in_degrees(const Csr2Graph& g);
/// In-degree of every node straight from the edge list.
std::vector<std::size_t> in_degrees(const CooGraph& g);

/// Remaining edges as an edge list; ordered by dst, then storage order.
CooGraph to_coo(const Csr2Graph& g);

/// Weighted CSR holding (D+I)^-1/2 (A+I) (D+I)^-1/2, where A[dst][src]
/// counts edges and D is the in-degree. Columns within a row are sorted.
struct AdjacencyMatrixNorm {
  std::vector<EdgeIdx> row_offsets;
  std::vector<NodeId> cols;
  std::vector<double> weights;
  std::size_t num_nodes = 0;

  /// Weight at (row, col); zero when absent.
  [[nodiscard]] double at(NodeId row, NodeId col) const;
};

AdjacencyMatrixNorm normalize_adjacency(const CooGraph& edges);

/// Reads "src dst" pairs, one per line; '#' lines and blank lines are skipped.
/// When num_nodes is 0 it is inferred as max id + 1.
CooGraph read_edge_list(std::istream& in, std::size_t num_nodes = 0,
                        const std::string& source_name = "<stream>");
CooGraph read_edge_list_file(const std::string& path, std::size_t num_nodes = 0);
void write_edge_list(std::ostream& out, const CooGraph& g);

}  // namespace hgnn
