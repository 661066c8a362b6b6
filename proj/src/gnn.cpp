#include "hgnn/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hgnn {

namespace {

bool is_active(std::span<const std::uint8_t> active, std::size_t i) { return active.empty() || active[i] != 0; }

// Per-edge aggregation weights of dst i. For GCN these are the entries of
// (D+I)^-1/2 (A+I) (D+I)^-1/2 from the full graph, with the sampled
// neighbors rescaled by full_degree / sampled_degree.
struct RowWeights {
  double self = 0.0;
  double neigh = 0.0;
  bool per_edge = false;  // GCN: neigh weight depends on the neighbor's degree
  double neigh_scale = 0.0;
};

RowWeights row_weights(LayerKind kind, const Block& block, std::size_t i) {
  RowWeights w;
  const double sampled = block.sampled_degree[i];
  if (kind == LayerKind::GCN) {
    const double full = block.src_full_degree[i];
    w.self = 1.0 / (full + 1.0);
    w.per_edge = true;
    w.neigh_scale = sampled > 0 ? (full / sampled) / std::sqrt(full + 1.0) : 0.0;
  } else {
    w.neigh = sampled > 0 ? 1.0 / sampled : 0.0;
  }
  return w;
}

double edge_weight(const RowWeights& w, const Block& block, NodeId u) {
  if (!w.per_edge) return w.neigh;
  return w.neigh_scale / std::sqrt(static_cast<double>(block.src_full_degree[u]) + 1.0);
}

template <typename T>
void check_shapes(const LayerParams<T>& p, const Block& block, const Matrix<T>& h_in,
                  std::span<const std::uint8_t> active) {
  if (h_in.rows() != block.num_src())
    throw std::invalid_argument("layer_forward: h_in has " + std::to_string(h_in.rows()) + " rows, src frontier has " +
                                std::to_string(block.num_src()));
  if (h_in.cols() != p.in_dim())
    throw std::invalid_argument("layer_forward: h_in width " + std::to_string(h_in.cols()) +
                                " != layer input width " + std::to_string(p.in_dim()));
  if (!active.empty() && active.size() != block.num_dst())
    throw std::invalid_argument("layer_forward: active mask length mismatch");
  if (p.kind == LayerKind::SAGE_MEAN &&
      (p.weight_neigh.rows() != p.in_dim() || p.weight_neigh.cols() != p.out_dim()))
    throw std::invalid_argument("layer_forward: SAGE neighbor weight shape mismatch");
}

// out[0..n) = sum_k x[k] * W[k][0..n), accumulated in double.
template <typename T>
void vec_mat_acc(std::span<const T> x, const Matrix<T>& w, std::vector<double>& acc) {
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double xk = x[k];
    if (xk == 0.0) continue;
    auto wrow = w.row(k);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += xk * wrow[j];
  }
}

}  // namespace

template <typename T>
LayerParams<T> LayerParams<T>::zeros_like() const {
  LayerParams z;
  z.kind = kind;
  z.relu = relu;
  z.weight = Matrix<T>(weight.rows(), weight.cols());
  z.weight_neigh = Matrix<T>(weight_neigh.rows(), weight_neigh.cols());
  z.bias = Matrix<T>(bias.rows(), bias.cols());
  return z;
}

template <typename T>
Matrix<T> layer_forward(const LayerParams<T>& params, const Block& block, const Matrix<T>& h_in,
                        std::span<const std::uint8_t> active, LayerTape<T>* tape) {
  check_shapes(params, block, h_in, active);
  const std::size_t in = params.in_dim();
  const std::size_t out = params.out_dim();
  const std::size_t n = block.num_dst();
  Matrix<T> agg(n, in);
  Matrix<T> pre(n, out);
  Matrix<T> h_out(n, out);
  std::vector<double> acc_in(in), acc_out(out);

  for (std::size_t i = 0; i < n; ++i) {
    if (!is_active(active, i)) continue;
    const RowWeights w = row_weights(params.kind, block, i);
    std::fill(acc_in.begin(), acc_in.end(), 0.0);
    if (params.kind == LayerKind::GCN) {
      auto self = h_in.row(i);
      for (std::size_t k = 0; k < in; ++k) acc_in[k] += w.self * self[k];
    }
    for (NodeId u : block.adj.neighbors(static_cast<NodeId>(i))) {
      const double wu = edge_weight(w, block, u);
      auto hu = h_in.row(u);
      for (std::size_t k = 0; k < in; ++k) acc_in[k] += wu * hu[k];
    }
    auto agg_row = agg.row(i);
    for (std::size_t k = 0; k < in; ++k) agg_row[k] = static_cast<T>(acc_in[k]);

    auto b = params.bias.row(0);
    for (std::size_t j = 0; j < out; ++j) acc_out[j] = b[j];
    if (params.kind == LayerKind::GCN) {
      vec_mat_acc<T>(agg_row, params.weight, acc_out);
    } else {
      vec_mat_acc<T>(h_in.row(i), params.weight, acc_out);
      vec_mat_acc<T>(agg_row, params.weight_neigh, acc_out);
    }
    auto pre_row = pre.row(i);
    auto out_row = h_out.row(i);
    for (std::size_t j = 0; j < out; ++j) {
      pre_row[j] = static_cast<T>(acc_out[j]);
      out_row[j] = params.relu && pre_row[j] <= T{0} ? T{0} : pre_row[j];
    }
  }
  if (tape != nullptr) {
    tape->h_in = h_in;
    tape->agg = std::move(agg);
    tape->pre = std::move(pre);
    tape->active.assign(active.begin(), active.end());
  }
  return h_out;
}

template <typename T>
Matrix<T> mixed_layer_forward(const LayerParams<T>& params, const Block& block, const SrcRows<T>& normal,
                              const SrcRows<T>& cached, std::span<const std::uint8_t> active,
                              LayerTape<T>* tape) {
  const std::size_t in = params.in_dim();
  Matrix<T> h_in(block.num_src(), in);
  std::vector<std::uint8_t> covered(block.num_src(), 0);
  auto place = [&](const SrcRows<T>& part, const char* name) {
    if (part.rows.rows() != part.local_ids.size() || (part.rows.rows() > 0 && part.rows.cols() != in))
      throw std::invalid_argument(std::string("mixed_layer_forward: ") + name + " rows shape mismatch");
    for (std::size_t r = 0; r < part.local_ids.size(); ++r) {
      const NodeId id = part.local_ids[r];
      if (id >= block.num_src()) throw std::out_of_range(std::string("mixed_layer_forward: ") + name + " id out of range");
      if (covered[id]) throw std::invalid_argument("mixed_layer_forward: src " + std::to_string(id) + " supplied twice");
      covered[id] = 1;
      auto s = part.rows.row(r);
      std::copy(s.begin(), s.end(), h_in.row(id).begin());
    }
  };
  place(normal, "normal");
  place(cached, "cached");
  if (!active.empty() && active.size() != block.num_dst())
    throw std::invalid_argument("mixed_layer_forward: active mask length mismatch");
  for (std::size_t i = 0; i < block.num_dst(); ++i) {
    if (!is_active(active, i)) continue;
    if (!covered[i])
      throw std::invalid_argument("mixed_layer_forward: dst " + std::to_string(i) + " has no self row");
    for (NodeId u : block.adj.neighbors(static_cast<NodeId>(i))) {
      if (!covered[u])
        throw std::invalid_argument("mixed_layer_forward: src " + std::to_string(u) + " needed by dst " +
                                    std::to_string(i) + " is not supplied");
    }
  }
  return layer_forward(params, block, h_in, active, tape);
}

template <typename T>
Matrix<T> layer_backward(const LayerParams<T>& params, const Block& block, const LayerTape<T>& tape,
                         const Matrix<T>& d_out, LayerParams<T>& grads) {
  const std::size_t in = params.in_dim();
  const std::size_t out = params.out_dim();
  const std::size_t n = block.num_dst();
  if (d_out.rows() != n || d_out.cols() != out) throw std::invalid_argument("layer_backward: d_out shape mismatch");

  std::vector<double> d_w(in * out, 0.0), d_wn(params.kind == LayerKind::SAGE_MEAN ? in * out : 0, 0.0);
  std::vector<double> d_b(out, 0.0);
  std::vector<double> d_h(block.num_src() * in, 0.0);
  std::vector<double> d_pre(out), d_agg(in), d_self(in);

  for (std::size_t i = 0; i < n; ++i) {
    if (!is_active(tape.active, i)) continue;
    auto pre_row = tape.pre.row(i);
    auto go = d_out.row(i);
    bool any = false;
    for (std::size_t j = 0; j < out; ++j) {
      d_pre[j] = (params.relu && pre_row[j] <= T{0}) ? 0.0 : static_cast<double>(go[j]);
      any = any || d_pre[j] != 0.0;
    }
    if (!any) continue;
    for (std::size_t j = 0; j < out; ++j) d_b[j] += d_pre[j];

    auto agg_row = tape.agg.row(i);
    const Matrix<T>& w_agg = params.kind == LayerKind::GCN ? params.weight : params.weight_neigh;
    std::vector<double>& d_w_agg = params.kind == LayerKind::GCN ? d_w : d_wn;
    for (std::size_t k = 0; k < in; ++k) {
      const double a = agg_row[k];
      auto wrow = w_agg.row(k);
      double s = 0.0;
      for (std::size_t j = 0; j < out; ++j) {
        s += d_pre[j] * wrow[j];
        if (a != 0.0) d_w_agg[k * out + j] += a * d_pre[j];
      }
      d_agg[k] = s;
    }

    const RowWeights w = row_weights(params.kind, block, i);
    double* dh_i = d_h.data() + i * in;
    if (params.kind == LayerKind::GCN) {
      for (std::size_t k = 0; k < in; ++k) dh_i[k] += w.self * d_agg[k];
    } else {
      auto self = tape.h_in.row(i);
      for (std::size_t k = 0; k < in; ++k) {
        const double x = self[k];
        auto wrow = params.weight.row(k);
        double s = 0.0;
        for (std::size_t j = 0; j < out; ++j) {
          s += d_pre[j] * wrow[j];
          if (x != 0.0) d_w[k * out + j] += x * d_pre[j];
        }
        dh_i[k] += s;
      }
    }
    for (NodeId u : block.adj.neighbors(static_cast<NodeId>(i))) {
      const double wu = edge_weight(w, block, u);
      double* dh_u = d_h.data() + static_cast<std::size_t>(u) * in;
      for (std::size_t k = 0; k < in; ++k) dh_u[k] += wu * d_agg[k];
    }
  }

  auto add_into = [](Matrix<T>& m, const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) m.storage()[i] += static_cast<T>(v[i]);
  };
  add_into(grads.weight, d_w);
  if (params.kind == LayerKind::SAGE_MEAN) add_into(grads.weight_neigh, d_wn);
  add_into(grads.bias, d_b);

  Matrix<T> d_in(block.num_src(), in);
  for (std::size_t i = 0; i < d_h.size(); ++i) d_in.storage()[i] = static_cast<T>(d_h[i]);
  return d_in;
}

template <typename T>
Network<T> Network<T>::zeros_like() const {
  Network z;
  for (const auto& l : layers) z.layers.push_back(l.zeros_like());
  return z;
}

template <typename T>
std::uint64_t Network<T>::checksum() const {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (const auto& l : layers) {
    for (const Matrix<T>* m : {&l.weight, &l.weight_neigh, &l.bias}) h = mix64(h ^ hgnn::checksum(*m));
  }
  return h;
}

template <typename T>
Network<T> init_network(LayerKind kind, std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("init_network: need at least input and output width");
  Network<T> net;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    LayerParams<T> p;
    p.kind = kind;
    p.relu = l + 2 < dims.size();
    const double limit = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    p.weight = Matrix<T>(dims[l], dims[l + 1]);
    for (auto& v : p.weight.storage()) v = static_cast<T>(dist(rng));
    if (kind == LayerKind::SAGE_MEAN) {
      p.weight_neigh = Matrix<T>(dims[l], dims[l + 1]);
      for (auto& v : p.weight_neigh.storage()) v = static_cast<T>(dist(rng));
    }
    p.bias = Matrix<T>(1, dims[l + 1]);
    net.layers.push_back(std::move(p));
  }
  return net;
}

template <typename T>
ForwardTape<T> network_forward(const Network<T>& net, const LayeredSubgraph& sub, const ForwardInput<T>& in) {
  const std::size_t num_layers = net.num_layers();
  if (sub.num_layers() != num_layers)
    throw std::invalid_argument("network_forward: subgraph has " + std::to_string(sub.num_layers()) +
                                " layers, network has " + std::to_string(num_layers));
  ForwardTape<T> tape;
  tape.layers.resize(num_layers);
  auto active_of = [&](std::size_t l) -> std::span<const std::uint8_t> {
    if (in.active.size() < l) return {};
    return in.active[l - 1];
  };

  Matrix<T> h = layer_forward(net.layers[0], sub.block(1), in.h0, active_of(1), &tape.layers[0]);
  for (std::size_t l = 2; l <= num_layers; ++l) {
    const Block& prev = sub.block(l - 1);
    auto prev_active = active_of(l - 1);
    SrcRows<T> normal;
    for (std::size_t i = 0; i < prev.num_dst(); ++i)
      if (is_active(prev_active, i)) normal.local_ids.push_back(static_cast<NodeId>(i));
    normal.rows = gather_rows<T, NodeId>(h, normal.local_ids);
    static const SrcRows<T> kNone{};
    const SrcRows<T>& cached = in.level_cached.size() > l - 1 ? in.level_cached[l - 1] : kNone;
    h = mixed_layer_forward(net.layers[l - 1], sub.block(l), normal, cached, active_of(l), &tape.layers[l - 1]);
  }
  tape.logits = std::move(h);
  return tape;
}

template <typename T>
BackwardResult<T> network_backward(const Network<T>& net, const LayeredSubgraph& sub, const ForwardTape<T>& tape,
                                   const Matrix<T>& d_logits) {
  const std::size_t num_layers = net.num_layers();
  BackwardResult<T> res;
  res.weight_grads = net.zeros_like();
  res.node_grads.resize(num_layers);
  Matrix<T> d_out = d_logits;
  for (std::size_t l = num_layers; l >= 1; --l) {
    Matrix<T> d_in = layer_backward(net.layers[l - 1], sub.block(l), tape.layers[l - 1], d_out,
                                    res.weight_grads.layers[l - 1]);
    if (l == 1) break;
    res.node_grads[l - 1] = d_in;
    d_out = std::move(d_in);
  }
  return res;
}

template <typename T>
LossResult<T> cross_entropy(const Matrix<T>& logits, std::span<const std::int32_t> labels) {
  if (labels.size() != logits.rows()) throw std::invalid_argument("cross_entropy: label count mismatch");
  LossResult<T> res;
  res.d_logits = Matrix<T>(logits.rows(), logits.cols());
  if (logits.rows() == 0) return res;
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  const std::size_t c = logits.cols();
  std::vector<double> p(c);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const std::int32_t y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    auto row = logits.row(i);
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max<double>(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(static_cast<double>(row[j]) - mx);
      z += p[j];
    }
    total += std::log(z) + mx - static_cast<double>(row[static_cast<std::size_t>(y)]);
    auto g = res.d_logits.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      const double prob = p[j] / z;
      g[j] = static_cast<T>((prob - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) * inv_n);
    }
  }
  res.loss = total * inv_n;
  return res;
}

template <typename T>
void sgd_step(Network<T>& net, const Network<T>& grads, double eta) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto upd = [eta](Matrix<T>& w, const Matrix<T>& g) {
      if (w.size() != g.size()) throw std::invalid_argument("sgd_step: gradient shape mismatch");
      for (std::size_t i = 0; i < w.size(); ++i)
        w.storage()[i] = static_cast<T>(w.storage()[i] - eta * g.storage()[i]);
    };
    upd(net.layers[l].weight, grads.layers[l].weight);
    upd(net.layers[l].weight_neigh, grads.layers[l].weight_neigh);
    upd(net.layers[l].bias, grads.layers[l].bias);
  }
}

template <typename T>
void Adam<T>::step(Network<T>& net, const Network<T>& grads) {
  std::vector<std::pair<Matrix<T>*, const Matrix<T>*>> params;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    params.emplace_back(&net.layers[l].weight, &grads.layers[l].weight);
    params.emplace_back(&net.layers[l].weight_neigh, &grads.layers[l].weight_neigh);
    params.emplace_back(&net.layers[l].bias, &grads.layers[l].bias);
  }
  std::size_t total = 0;
  for (auto& [w, g] : params) total += w->size();
  if (m_.empty()) {
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t off = 0;
  for (auto& [w, g] : params) {
    for (std::size_t i = 0; i < w->size(); ++i, ++off) {
      const double gi = g->storage()[i];
      m_[off] = beta1_ * m_[off] + (1.0 - beta1_) * gi;
      v_[off] = beta2_ * v_[off] + (1.0 - beta2_) * gi * gi;
      const double step = lr_ * (m_[off] / c1) / (std::sqrt(v_[off] / c2) + eps_);
      w->storage()[i] = static_cast<T>(w->storage()[i] - step);
    }
  }
}

template <typename T>
std::vector<double> node_grad_norms(const Matrix<T>& grads) {
  std::vector<double> norms(grads.rows());
  for (std::size_t i = 0; i < grads.rows(); ++i) {
    double s = 0.0;
    for (T v : grads.row(i)) s += static_cast<double>(v) * v;
    norms[i] = std::sqrt(s);
  }
  return norms;
}

#define HGNN_INSTANTIATE(T)                                                                                  \
  template struct LayerParams<T>;                                                                            \
  template struct Network<T>;                                                                                \
  template class Adam<T>;                                                                                    \
  template Matrix<T> layer_forward(const LayerParams<T>&, const Block&, const Matrix<T>&,                    \
                                   std::span<const std::uint8_t>, LayerTape<T>*);                            \
  template Matrix<T> mixed_layer_forward(const LayerParams<T>&, const Block&, const SrcRows<T>&,             \
                                         const SrcRows<T>&, std::span<const std::uint8_t>, LayerTape<T>*);   \
  template Matrix<T> layer_backward(const LayerParams<T>&, const Block&, const LayerTape<T>&,                \
                                    const Matrix<T>&, LayerParams<T>&);                                      \
  template Network<T> init_network(LayerKind, std::span<const std::size_t>, Rng&);                           \
  template ForwardTape<T> network_forward(const Network<T>&, const LayeredSubgraph&, const ForwardInput<T>&); \
  template BackwardResult<T> network_backward(const Network<T>&, const LayeredSubgraph&,                     \
                                              const ForwardTape<T>&, const Matrix<T>&);                      \
  template LossResult<T> cross_entropy(const Matrix<T>&, std::span<const std::int32_t>);                     \
  template void sgd_step(Network<T>&, const Network<T>&, double);                                            \
  template std::vector<double> node_grad_norms(const Matrix<T>&);

HGNN_INSTANTIATE(float)
HGNN_INSTANTIATE(double)
#undef HGNN_INSTANTIATE

}  // namespace hgnn
