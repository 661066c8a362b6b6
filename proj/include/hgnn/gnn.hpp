#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hgnn/matrix.hpp"
#include "hgnn/sampler.hpp"
#include "hgnn/types.hpp"

namespace hgnn {

enum class LayerKind {
  GCN,        // symmetric-normalized sum over N(v) and a self loop
  SAGE_MEAN,  // self transform + mean of N(v)
};

/// Weights of one layer. GCN uses `weight` only; SAGE_MEAN applies
/// `weight` to the node itself and `weight_neigh` to the neighbor mean.
template <typename T>
struct LayerParams {
  LayerKind kind = LayerKind::GCN;
  Matrix<T> weight;
  Matrix<T> weight_neigh;
  Matrix<T> bias;  // 1 x out
  bool relu = true;

  [[nodiscard]] std::size_t in_dim() const noexcept { return weight.rows(); }
  [[nodiscard]] std::size_t out_dim() const noexcept { return weight.cols(); }
  /// Same shapes, all zeros.
  [[nodiscard]] LayerParams zeros_like() const;
};

/// What one block's forward pass keeps for the backward pass.
template <typename T>
struct LayerTape {
  Matrix<T> h_in;  // num_src x in
  Matrix<T> agg;   // num_dst x in
  Matrix<T> pre;   // num_dst x out
  std::vector<std::uint8_t> active;
};

/// Computes rows of h_out for active dst nodes; inactive rows are zero.
/// An empty `active` span means every dst is active.
template <typename T>
Matrix<T> layer_forward(const LayerParams<T>& params, const Block& block, const Matrix<T>& h_in,
                        std::span<const std::uint8_t> active = {}, LayerTape<T>* tape = nullptr);

/// Rows of a block's src frontier supplied from two places: freshly
/// computed (`normal`) and historical (`cached`). Indices are local src ids.
template <typename T>
struct SrcRows {
  std::vector<NodeId> local_ids;
  Matrix<T> rows;
};

/// Assembles the src input from normal and cached rows and runs
/// layer_forward. Throws when the two sets overlap or when an active dst
/// needs a src row that neither supplies.
template <typename T>
Matrix<T> mixed_layer_forward(const LayerParams<T>& params, const Block& block, const SrcRows<T>& normal,
                              const SrcRows<T>& cached, std::span<const std::uint8_t> active = {},
                              LayerTape<T>* tape = nullptr);

/// Accumulates gradients for one block. d_out rows of inactive dst are
/// ignored. Returns d h_in (num_src x in).
template <typename T>
Matrix<T> layer_backward(const LayerParams<T>& params, const Block& block, const LayerTape<T>& tape,
                         const Matrix<T>& d_out, LayerParams<T>& grads);

/// Stack of layers; layer index 0 here is block(1).
template <typename T>
struct Network {
  std::vector<LayerParams<T>> layers;

  [[nodiscard]] std::size_t num_layers() const noexcept { return layers.size(); }
  [[nodiscard]] Network zeros_like() const;
  [[nodiscard]] std::uint64_t checksum() const;
};

/// Glorot-uniform weights, zero bias, ReLU on all but the last layer.
template <typename T>
Network<T> init_network(LayerKind kind, std::span<const std::size_t> dims, Rng& rng);

/// Per-iteration input to a full forward pass. Level l (0 <= l < L) is
/// V^(l). `level_cached[l]` lists local ids at level l served from cache
/// (always empty at level 0) and `active[l-1]` marks computed dst of
/// block(l). Empty vectors mean "nothing cached" / "all active".
template <typename T>
struct ForwardInput {
  Matrix<T> h0;  // |V^(0)| x in; rows not needed may be zero
  std::vector<SrcRows<T>> level_cached;
  std::vector<std::vector<std::uint8_t>> active;
};

template <typename T>
struct ForwardTape {
  std::vector<LayerTape<T>> layers;
  Matrix<T> logits;  // rows align with block(L).dst_nodes
};

template <typename T>
ForwardTape<T> network_forward(const Network<T>& net, const LayeredSubgraph& sub, const ForwardInput<T>& in);

template <typename T>
struct BackwardResult {
  Network<T> weight_grads;
  /// node_grads[l] is dL/dh^(l) over V^(l) for l = 1..L-1 (index 0 unused).
  std::vector<Matrix<T>> node_grads;
};

template <typename T>
BackwardResult<T> network_backward(const Network<T>& net, const LayeredSubgraph& sub, const ForwardTape<T>& tape,
                                   const Matrix<T>& d_logits);

/// Mean softmax cross-entropy over rows and its gradient w.r.t. logits.
template <typename T>
struct LossResult {
  double loss = 0.0;
  Matrix<T> d_logits;
};

template <typename T>
LossResult<T> cross_entropy(const Matrix<T>& logits, std::span<const std::int32_t> labels);

template <typename T>
void sgd_step(Network<T>& net, const Network<T>& grads, double eta);

/// Adam over every parameter of a network.
template <typename T>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(Network<T>& net, const Network<T>& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

/// Euclidean norm of each row.
template <typename T>
std::vector<double> node_grad_norms(const Matrix<T>& grads);

}  // namespace hgnn
