#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "marketgraph/tape.hpp"

namespace marketgraph {

/// Weighted directed graph over series.
///
/// Row i holds the weights node i aggregates from; column sums therefore
/// count how many nodes each node feeds, which is what out_degree reports.
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;
  /// Validates: square, matches label count, nonnegative, zero diagonal, unique labels.
  AdjacencyMatrix(std::vector<std::string> labels, Tensor weights);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const Tensor& weights() const noexcept { return weights_; }
  double operator()(std::size_t i, std::size_t j) const { return weights_.at(i, j); }
  std::size_t index_of(const std::string& label) const;

  static AdjacencyMatrix read_csv(const std::filesystem::path& path);
  void write_csv(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> labels_;
  Tensor weights_;
};

/// Source and target node embeddings, each [N, d].
struct NodeEmbeddings {
  Tensor source;
  Tensor target;
};

struct GraphLearnParams {
  Tensor source_proj;  // [d, d]
  Tensor target_proj;  // [d, d]
  double saturation = 3.0;
  std::size_t top_k = 5;
};

/// Tape handles for the learnable graph inputs.
struct GraphLearnVars {
  Var source;
  Var target;
  Var source_proj;
  Var target_proj;
};

/// relu(tanh(a * (M1 M2^T - M2 M1^T))) with M1 = tanh(a E1 T1), M2 = tanh(a E2 T2),
/// before sparsification.
Var dense_adjacency(const GraphLearnVars& vars, double saturation);

/// dense_adjacency with each row restricted to its `top_k` largest entries
/// (ties go to the lower column index) and a zero diagonal.
Var learn_adjacency(const GraphLearnVars& vars, double saturation, std::size_t top_k);

/// Non-differentiable evaluation of learn_adjacency.
AdjacencyMatrix learn_adjacency(const NodeEmbeddings& emb, const GraphLearnParams& params,
                                std::vector<std::string> labels);

/// 0/1 mask keeping the k largest entries of each row, diagonal excluded.
Tensor top_k_mask(const Tensor& a, std::size_t k);

/// Column sums of the binarized adjacency B (hops = 1) or of B + B^2 (hops = 2).
std::vector<std::int64_t> out_degree(const AdjacencyMatrix& a, int hops);
std::vector<std::int64_t> out_degree(const Tensor& a, int hops);

using InfluenceRanking = std::vector<std::pair<std::string, std::int64_t>>;

/// Nodes ordered by out-degree, descending; ties broken by label.
/// `group` restricts the ranking to the listed labels.
InfluenceRanking rank_influence(const AdjacencyMatrix& a, int hops,
                                const std::optional<std::vector<std::string>>& group = {});

}  // namespace marketgraph
