#include <cmath>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "marketgraph/errors.hpp"
#include "marketgraph/gradcheck.hpp"
#include "marketgraph/graph_learning.hpp"
#include "marketgraph/ops.hpp"

using namespace marketgraph;

namespace {

const std::filesystem::path kFixture =
    std::filesystem::path(MARKETGRAPH_FIXTURES) / "influence_adjacency.csv";

const std::vector<std::string> kG7{"Italy", "France", "UK", "Germany", "US", "Canada", "Japan"};
const std::vector<std::string> kMint{"Mexico", "Indonesia", "Nigeria", "Türkiye"};

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.normal() * scale;
  return t;
}

// Brute-force column sums of B + B*B with explicit triple loops.
std::vector<std::int64_t> brute_two_hop(const Tensor& a) {
  const std::size_t n = a.shape()[0];
  std::vector<std::vector<int>> b(n, std::vector<int>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) b[i][j] = a.at(i, j) > 0 ? 1 : 0;
  std::vector<std::int64_t> out(n, 0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      int walk2 = 0;
      for (std::size_t m = 0; m < n; ++m) walk2 += b[i][m] * b[m][j];
      out[j] += b[i][j] + walk2;
    }
  return out;
}

std::map<std::string, std::int64_t> by_label(const AdjacencyMatrix& a, int hops) {
  const auto deg = out_degree(a, hops);
  std::map<std::string, std::int64_t> m;
  for (std::size_t i = 0; i < a.size(); ++i) m[a.labels()[i]] = deg[i];
  return m;
}

}  // namespace

TEST_CASE("hand-evaluated two-node adjacency") {
  NodeEmbeddings emb{Tensor({2, 1}, {1, 0}), Tensor({2, 1}, {0, 1})};
  GraphLearnParams params{Tensor({1, 1}, {1}), Tensor({1, 1}, {1}), 1.0, 1};
  const AdjacencyMatrix a = learn_adjacency(emb, params, {"a", "b"});
  const double expected = std::tanh(std::tanh(1.0) * std::tanh(1.0));
  CHECK(a(0, 1) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(a(0, 1) == doctest::Approx(0.5227).epsilon(1e-4));
  CHECK(a(0, 0) == 0.0);
  CHECK(a(1, 0) == 0.0);
  CHECK(a(1, 1) == 0.0);
}

TEST_CASE("identical source and target embeddings give an empty graph") {
  Rng rng(3);
  const Tensor e = random_tensor({6, 4}, rng);
  const Tensor theta = random_tensor({4, 4}, rng);
  const AdjacencyMatrix a =
      learn_adjacency(NodeEmbeddings{e, e}, GraphLearnParams{theta, theta, 3.0, 3},
                      {"a", "b", "c", "d", "e", "f"});
  for (double v : a.weights().values()) CHECK(v == 0.0);
}

TEST_CASE("learned adjacency properties over random inputs") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.index(6);
    const std::size_t d = 1 + rng.index(5);
    const std::size_t k = 1 + rng.index(n - 1);
    const double alpha = 0.5 + 3 * rng.uniform();
    NodeEmbeddings emb{random_tensor({n, d}, rng), random_tensor({n, d}, rng)};
    GraphLearnParams params{random_tensor({d, d}, rng), random_tensor({d, d}, rng), alpha, k};
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back("n" + std::to_string(i));
    const AdjacencyMatrix a = learn_adjacency(emb, params, labels);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t nnz = 0;
      CHECK(a(i, i) == 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(a(i, j) >= 0.0);
        CHECK(a(i, j) < 1.0);
        if (a(i, j) > 0) ++nnz;
      }
      CHECK(nnz <= k);
    }

    // Swapping the source and target roles transposes the dense matrix.
    Tape tape;
    GraphLearnVars fwd{tape.constant(emb.source), tape.constant(emb.target),
                       tape.constant(params.source_proj), tape.constant(params.target_proj)};
    GraphLearnVars rev{fwd.target, fwd.source, fwd.target_proj, fwd.source_proj};
    const Tensor a0 = dense_adjacency(fwd, alpha).value();
    const Tensor a0_rev = dense_adjacency(rev, alpha).value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(a0_rev.at(i, j) == a0.at(j, i));
  }
}

TEST_CASE("sparsification keeps the largest entries and gives ties to the lower column") {
  const Tensor a({3, 3}, {0.9, 0.2, 0.2,  //
                          0.5, 0.0, 0.5,  //
                          0.1, 0.3, 0.7});
  const Tensor m1 = top_k_mask(a, 1);
  CHECK(m1 == Tensor({3, 3}, {0, 1, 0, 1, 0, 0, 0, 1, 0}));
  const Tensor m2 = top_k_mask(a, 2);
  CHECK(m2 == Tensor({3, 3}, {0, 1, 1, 1, 0, 1, 1, 1, 0}));
  CHECK_THROWS_AS(top_k_mask(a, 0), ConfigError);
  CHECK_THROWS_AS(top_k_mask(a, 3), ConfigError);
}

TEST_CASE("learn_adjacency rejects a sparsity budget out of range") {
  NodeEmbeddings emb{Tensor({2, 1}, {1, 0}), Tensor({2, 1}, {0, 1})};
  CHECK_THROWS_AS(learn_adjacency(emb, GraphLearnParams{Tensor({1, 1}, {1}), Tensor({1, 1}, {1}), 1.0, 0},
                                  {"a", "b"}),
                  ConfigError);
  CHECK_THROWS_AS(learn_adjacency(emb, GraphLearnParams{Tensor({1, 1}, {1}), Tensor({1, 1}, {1}), 1.0, 2},
                                  {"a", "b"}),
                  ConfigError);
  CHECK_THROWS(learn_adjacency(emb, GraphLearnParams{Tensor({1, 1}, {1}), Tensor({1, 1}, {1}), -1.0, 1},
                               {"a", "b"}));
}

TEST_CASE("gradients flow through the learned graph") {
  Rng rng(7);
  std::vector<Parameter> p{{"e1", random_tensor({5, 3}, rng, 0.5)},
                           {"e2", random_tensor({5, 3}, rng, 0.5)},
                           {"t1", random_tensor({3, 3}, rng, 0.5)},
                           {"t2", random_tensor({3, 3}, rng, 0.5)}};
  Tensor w({5, 5});
  for (double& v : w.values()) v = rng.uniform(-1, 1);
  std::vector<Parameter*> ptrs{&p[0], &p[1], &p[2], &p[3]};
  auto f = [&](Tape& tape) {
    GraphLearnVars v{tape.leaf(p[0]), tape.leaf(p[1]), tape.leaf(p[2]), tape.leaf(p[3])};
    return sum(mul(learn_adjacency(v, 1.5, 2), tape.constant(w)));
  };
  CHECK(grad_check(f, ptrs) <= 1e-4);

  auto dense = [&](Tape& tape) {
    GraphLearnVars v{tape.leaf(p[0]), tape.leaf(p[1]), tape.leaf(p[2]), tape.leaf(p[3])};
    return sum(mul(dense_adjacency(v, 1.5), tape.constant(w)));
  };
  CHECK(grad_check(dense, ptrs) <= 1e-4);
}

TEST_CASE("adjacency fixture out-degrees") {
  const AdjacencyMatrix a = AdjacencyMatrix::read_csv(kFixture);
  REQUIRE(a.size() == 11);

  SUBCASE("one hop") {
    CHECK(out_degree(a, 1) == std::vector<std::int64_t>{1, 6, 4, 3, 5, 7, 5, 7, 5, 3, 2});
    const auto g7 = rank_influence(a, 1, kG7);
    CHECK(g7[0] == std::pair<std::string, std::int64_t>{"US", 7});
    // Canada and Germany tie at 5; the lexicographic rule puts Canada first.
    CHECK(g7[1] == std::pair<std::string, std::int64_t>{"Canada", 5});
    CHECK(g7[2] == std::pair<std::string, std::int64_t>{"Germany", 5});
    const auto mint = rank_influence(a, 1, kMint);
    CHECK(mint[0] == std::pair<std::string, std::int64_t>{"Indonesia", 7});
    CHECK(mint[1] == std::pair<std::string, std::int64_t>{"Türkiye", 6});
  }

  SUBCASE("two hops") {
    const auto deg = by_label(a, 2);
    CHECK(deg.at("US") == 39);
    CHECK(deg.at("Canada") == 34);
    CHECK(deg.at("Indonesia") == 31);
    CHECK(deg.at("Türkiye") == 25);
    CHECK(out_degree(a, 2) == brute_two_hop(a.weights()));
    const auto g7 = rank_influence(a, 2, kG7);
    CHECK(g7[0].first == "US");
    CHECK(g7[1].first == "Canada");
    const auto mint = rank_influence(a, 2, kMint);
    CHECK(mint[0].first == "Indonesia");
    CHECK(mint[1].first == "Türkiye");
  }

  SUBCASE("edge count and rescaling invariance") {
    std::int64_t total = 0, edges = 0;
    for (auto d : out_degree(a, 1)) total += d;
    for (double v : a.weights().values()) edges += v > 0;
    CHECK(total == edges);
    Tensor scaled = a.weights();
    for (double& v : scaled.values()) v *= 17.5;
    const AdjacencyMatrix b(a.labels(), scaled);
    CHECK(out_degree(b, 1) == out_degree(a, 1));
    CHECK(out_degree(b, 2) == out_degree(a, 2));
  }

  SUBCASE("groups") {
    const auto single = rank_influence(a, 1, std::vector<std::string>{"Italy"});
    REQUIRE(single.size() == 1);
    CHECK(single[0].first == "Italy");
    CHECK_THROWS(rank_influence(a, 1, std::vector<std::string>{"Atlantis"}));
    CHECK(rank_influence(a, 1).size() == 11);
    CHECK_THROWS(out_degree(a, 3));
  }
}

TEST_CASE("out_degree on raw tensors") {
  CHECK(out_degree(Tensor({3, 3}), 1) == std::vector<std::int64_t>{0, 0, 0});
  CHECK(out_degree(Tensor({3, 3}), 2) == std::vector<std::int64_t>{0, 0, 0});
  CHECK_THROWS_AS(out_degree(Tensor({2, 3}), 1), DimensionError);
  // Row 0 aggregates from column 1, row 1 from column 2: 2 feeds 1 feeds 0.
  const Tensor chain({3, 3}, {0, 1, 0, 0, 0, 1, 0, 0, 0});
  CHECK(out_degree(chain, 1) == std::vector<std::int64_t>{0, 1, 1});
  CHECK(out_degree(chain, 2) == std::vector<std::int64_t>{0, 1, 2});
}

TEST_CASE("adjacency validation and CSV round trip") {
  CHECK_THROWS(AdjacencyMatrix({"a", "b"}, Tensor({2, 2}, {0, -1, 0, 0})));
  CHECK_THROWS(AdjacencyMatrix({"a", "b"}, Tensor({2, 2}, {1, 0, 0, 0})));
  CHECK_THROWS(AdjacencyMatrix({"a", "a"}, Tensor({2, 2})));
  CHECK_THROWS(AdjacencyMatrix({"a"}, Tensor({2, 2})));

  const AdjacencyMatrix a = AdjacencyMatrix::read_csv(kFixture);
  const auto tmp = std::filesystem::temp_directory_path() / "mg_adj_roundtrip.csv";
  a.write_csv(tmp);
  const AdjacencyMatrix b = AdjacencyMatrix::read_csv(tmp);
  CHECK(b.labels() == a.labels());
  CHECK(b.weights() == a.weights());
  std::filesystem::remove(tmp);
  CHECK(a.index_of("US") == 5);
  CHECK_THROWS(a.index_of("Atlantis"));
}
