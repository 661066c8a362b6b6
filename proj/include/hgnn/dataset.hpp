#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgnn/graph_store.hpp"
#include "hgnn/matrix.hpp"
#include "hgnn/types.hpp"

namespace hgnn {

struct Dataset {
  CooGraph graph;
  EmbMatrix features;
  std::vector<std::int32_t> labels;
  std::vector<NodeId> train, val, test;

  [[nodiscard]] std::size_t num_nodes() const noexcept { return graph.num_nodes; }
  [[nodiscard]] std::size_t num_classes() const;
  /// Throws std::invalid_argument naming the violated invariant.
  void validate() const;
};

/// Loads edges.txt, features.bin, labels.txt, train.txt, val.txt, test.txt
/// from `dir`. Parse failures throw ParseError naming the file and line.
Dataset ingest(const std::string& dir);
void write_dataset(const Dataset& ds, const std::string& dir);

/// features.bin: two little-endian u64 (rows, cols), then rows*cols
/// little-endian IEEE-754 binary32 values, row-major.
EmbMatrix read_features_bin(const std::string& path);
void write_features_bin(const EmbMatrix& m, const std::string& path);

enum class SynthModel { POWER_LAW, SBM };

struct SynthParams {
  SynthModel model = SynthModel::SBM;
  std::size_t num_nodes = 1000;
  // POWER_LAW: edges attached per new node.
  std::size_t m = 3;
  // SBM
  std::size_t blocks = 4;
  double p_in = 0.01;
  double p_out = 0.001;
  // Labels for POWER_LAW: class count and probability of copying the
  // class of the first attachment target.
  std::size_t classes = 4;
  double homophily = 0.7;
  // Features: class mean + N(0, noise^2).
  std::size_t feature_dim = 16;
  double noise = 1.0;
  double train_frac = 0.6;
  double val_frac = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// "sbm:n=2000,blocks=4,p_in=0.01,p_out=0.001,dim=16,noise=1" or
/// "powerlaw:n=2000,m=3,classes=4,dim=16".
SynthParams parse_synth_spec(const std::string& spec);

/// Undirected synthetic graph (both edge directions stored) with
/// class-structured features and a shuffled train/val/test split.
Dataset synth_graph(const SynthParams& params);

}  // namespace hgnn
