#include "marketgraph/graph_learning.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "marketgraph/csv.hpp"
#include "marketgraph/errors.hpp"
#include "marketgraph/ops.hpp"

namespace marketgraph {

AdjacencyMatrix::AdjacencyMatrix(std::vector<std::string> labels, Tensor weights)
    : labels_(std::move(labels)), weights_(std::move(weights)) {
  const std::size_t n = labels_.size();
  if (weights_.rank() != 2 || weights_.dim(0) != n || weights_.dim(1) != n) {
    throw DimensionError("adjacency must be " + std::to_string(n) + "x" + std::to_string(n) +
                         ", got " + shape_string(weights_.shape()));
  }
  if (std::set<std::string>(labels_.begin(), labels_.end()).size() != n) {
    throw DomainError("adjacency labels must be unique");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (weights_.at(i, i) != 0.0) throw DomainError("adjacency diagonal must be zero");
    for (std::size_t j = 0; j < n; ++j) {
      if (weights_.at(i, j) < 0.0) throw DomainError("adjacency weights must be nonnegative");
    }
  }
}

std::size_t AdjacencyMatrix::index_of(const std::string& label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw DomainError("unknown node label '" + label + "'");
  return static_cast<std::size_t>(it - labels_.begin());
}

AdjacencyMatrix AdjacencyMatrix::read_csv(const std::filesystem::path& path) {
  auto m = csv::read_matrix(path);
  return AdjacencyMatrix(std::move(m.labels), std::move(m.values));
}

void AdjacencyMatrix::write_csv(const std::filesystem::path& path) const {
  csv::write_matrix(path, labels_, weights_);
}

Var dense_adjacency(const GraphLearnVars& v, double saturation) {
  if (!(saturation > 0.0)) throw DomainError("graph learning saturation rate must be positive");
  const Shape& es = v.source.shape();
  if (es.size() != 2 || v.target.shape() != es) {
    throw DimensionError("node embeddings must share an [N, d] shape");
  }
  const Shape proj{es[1], es[1]};
  if (v.source_proj.shape() != proj || v.target_proj.shape() != proj) {
    throw DimensionError("graph projections must be " + shape_string(proj));
  }
  Var m1 = tanh(scale(matmul(v.source, v.source_proj), saturation));
  Var m2 = tanh(scale(matmul(v.target, v.target_proj), saturation));
  Var antisym = matmul(m1, transpose(m2)) - matmul(m2, transpose(m1));
  return relu(tanh(scale(antisym, saturation)));
}

Tensor top_k_mask(const Tensor& a, std::size_t k) {
  const std::size_t n = a.dim(0);
  if (n < 2 || k < 1 || k > n - 1) {
    throw ConfigError("top_k must lie in [1, N-1]; got k=" + std::to_string(k) +
                      " for N=" + std::to_string(n));
  }
  Tensor m({n, n});
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < n; ++i) {
    cols.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) cols.push_back(j);
    std::stable_sort(cols.begin(), cols.end(),
                     [&](std::size_t x, std::size_t y) { return a.at(i, x) > a.at(i, y); });
    for (std::size_t r = 0; r < k; ++r) m.at(i, cols[r]) = 1.0;
  }
  return m;
}

Var learn_adjacency(const GraphLearnVars& vars, double saturation, std::size_t top_k) {
  Var dense = dense_adjacency(vars, saturation);
  return mask(dense, top_k_mask(dense.value(), top_k));
}

AdjacencyMatrix learn_adjacency(const NodeEmbeddings& emb, const GraphLearnParams& params,
                                std::vector<std::string> labels) {
  Tape tape;
  GraphLearnVars vars{tape.constant(emb.source), tape.constant(emb.target),
                      tape.constant(params.source_proj), tape.constant(params.target_proj)};
  Var a = learn_adjacency(vars, params.saturation, params.top_k);
  return AdjacencyMatrix(std::move(labels), a.value());
}

std::vector<std::int64_t> out_degree(const Tensor& a, int hops) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw DimensionError("out_degree needs a square matrix, got " + shape_string(a.shape()));
  }
  if (hops != 1 && hops != 2) throw DomainError("hops must be 1 or 2");
  const std::size_t n = a.dim(0);
  std::vector<std::int64_t> b(n * n);
  for (std::size_t i = 0; i < n * n; ++i) b[i] = a[i] > 0.0 ? 1 : 0;
  std::vector<std::int64_t> reach = b;
  if (hops == 2) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        if (!b[i * n + k]) continue;
        for (std::size_t j = 0; j < n; ++j) reach[i * n + j] += b[k * n + j];
      }
  }
  std::vector<std::int64_t> degree(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) degree[j] += reach[i * n + j];
  return degree;
}

std::vector<std::int64_t> out_degree(const AdjacencyMatrix& a, int hops) {
  return out_degree(a.weights(), hops);
}

InfluenceRanking rank_influence(const AdjacencyMatrix& a, int hops,
                                const std::optional<std::vector<std::string>>& group) {
  const auto degree = out_degree(a, hops);
  std::vector<std::size_t> members;
  if (group) {
    for (const auto& label : *group) members.push_back(a.index_of(label));
  } else {
    members.resize(a.size());
    std::iota(members.begin(), members.end(), std::size_t{0});
  }
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  InfluenceRanking ranking;
  for (std::size_t i : members) ranking.emplace_back(a.labels()[i], degree[i]);
  std::sort(ranking.begin(), ranking.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  return ranking;
}

}  // namespace marketgraph
