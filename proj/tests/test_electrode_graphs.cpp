#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "v2eg/electrode_graphs.hpp"
#include "v2eg/errors.hpp"
#include "v2eg/rng.hpp"

using namespace v2eg;

namespace {

Graph random_graph(std::size_t n, Rng& rng, double density = 0.4) {
  Graph g;
  g.nodes = n;
  g.adjacency.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(density)) g.adjacency[i * n + j] = g.adjacency[j * n + i] = rng.uniform(0.01, 3.0);
  return g;
}

// Dense eigensolver oracle for L = I - A_hat.
Eigen::VectorXd laplacian_eigenvalues(const std::vector<double>& a_hat, std::size_t n) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) l(i, j) -= a_hat[i * n + j];
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(l).eigenvalues();
}

EegSegment noise_segment(std::size_t channels, std::size_t samples, Rng& rng) {
  auto s = EegSegment::zeros(channels, samples, 200.0);
  for (auto& v : s.data) v = rng.normal();
  return s;
}

}  // namespace

TEST_CASE("standard layout is valid and matches the shipped data file") {
  const auto layout = standard_layout_62();
  CHECK(layout.size() == 62);
  CHECK_NOTHROW(layout.validate());
  CHECK(layout.names.front() == "FP1");
  CHECK(layout.names.back() == "CB2");

  const auto shipped = load_layout(V2EG_DATA_DIR "/layout_seed62.txt");
  REQUIRE(shipped.size() == 62);
  for (std::size_t i = 0; i < 62; ++i) {
    CHECK(shipped.names[i] == layout.names[i]);
    for (int d = 0; d < 3; ++d) CHECK(shipped.positions[i][d] == doctest::Approx(layout.positions[i][d]).epsilon(1e-12));
  }
  const auto sub = layout_subset(layout, 8);
  CHECK(sub.size() == 8);
  CHECK_NOTHROW(sub.validate());
  CHECK_THROWS_AS(layout_subset(layout, 63), ConfigError);
}

TEST_CASE("degenerate layouts are rejected") {
  ElectrodeLayout l;
  l.names = {"A", "B"};
  l.positions = {{1, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(build_e_graph(l, 1), ConstructionError);
  l.positions = {{1, 0, 0}, {0, 2, 0}};
  CHECK_THROWS_AS(l.validate(), ConstructionError);
  l.positions = {{1, 0, 0}, {0, 1, 0}};
  l.names = {"A", "A"};
  CHECK_THROWS_AS(l.validate(), ConstructionError);
}

TEST_CASE("E-Graph examples") {
  ElectrodeLayout tri;
  tri.names = {"a", "b", "c"};
  tri.positions = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const auto g = build_e_graph(tri, 2);
  CHECK(g.at(0, 1) > 0.0);
  CHECK(g.at(0, 1) == g.at(0, 2));
  CHECK(g.at(1, 2) == g.at(0, 1));
  CHECK(g.at(0, 0) == 0.0);
  // Equidistant nodes: sigma equals the distance, weight exp(-1/2).
  CHECK(g.at(0, 1) == doctest::Approx(std::exp(-0.5)));

  CHECK_THROWS_AS(build_e_graph(tri, 0), ParameterError);
  CHECK_THROWS_AS(build_e_graph(tri, 3), ParameterError);

  const auto big = build_e_graph(standard_layout_62(), 8);
  CHECK_NOTHROW(big.validate());
  for (std::size_t i = 0; i < 62; ++i) {
    CHECK(big.nonzeros_in_row(i) >= 8);
    CHECK(big.nonzeros_in_row(i) <= 61);
    for (std::size_t j = 0; j < 62; ++j) CHECK(big.at(i, j) == big.at(j, i));
  }
}

TEST_CASE("S-Graph examples") {
  Rng rng(1);
  auto s = noise_segment(3, 64, rng);
  for (std::size_t t = 0; t < 64; ++t) {
    s.at(1, t) = 2.0 * s.at(0, t);
    s.at(2, t) = -s.at(0, t);
  }
  const auto g = build_s_graph(s, 0.3, "alpha");
  CHECK(g.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.at(0, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.band == "alpha");
  CHECK_NOTHROW(g.validate());

  auto with_const = noise_segment(3, 32, rng);
  for (std::size_t t = 0; t < 32; ++t) with_const.at(2, t) = 4.0;
  const auto gc = build_s_graph(with_const, 0.0);
  CHECK(gc.nonzeros_in_row(2) == 0);

  CHECK_THROWS_AS(build_s_graph(noise_segment(1, 64, rng), 0.3), ParameterError);
  CHECK_THROWS_AS(build_s_graph(noise_segment(3, 7, rng), 0.3), ParameterError);
  CHECK_THROWS_AS(build_s_graph(noise_segment(3, 64, rng), 1.0), ParameterError);
}

TEST_CASE("S-Graph edge density on independent noise matches Monte Carlo") {
  // P(|r| >= 0.3) at 200 samples is about 2e-5, so the graphs need ~1e6
  // channel pairs in total for the comparison to carry information: 20 trials
  // of 320 channels give ~1.0e6 pairs.
  Rng rng(99);
  // Oracle: all pairs of a pool of independent 200-sample vectors.
  const int pool = 3000, len = 200;
  std::vector<double> z(static_cast<std::size_t>(pool) * len);
  for (int p = 0; p < pool; ++p) {
    double m = 0, ss = 0;
    for (int t = 0; t < len; ++t) m += (z[p * len + t] = rng.normal());
    m /= len;
    for (int t = 0; t < len; ++t) ss += (z[p * len + t] - m) * (z[p * len + t] - m);
    for (int t = 0; t < len; ++t) z[p * len + t] = (z[p * len + t] - m) / std::sqrt(ss);
  }
  double hits = 0, total = 0;
  for (int a = 0; a < pool; ++a)
    for (int b = a + 1; b < pool; ++b) {
      double r = 0;
      for (int t = 0; t < len; ++t) r += z[a * len + t] * z[b * len + t];
      hits += std::abs(r) >= 0.3;
      total += 1;
    }
  const double expected = hits / total;

  double edges = 0, slots = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = build_s_graph(noise_segment(320, len, rng), 0.3);
    for (std::size_t i = 0; i < 320; ++i)
      for (std::size_t j = i + 1; j < 320; ++j) {
        edges += g.at(i, j) != 0.0;
        slots += 1;
      }
  }
  const double density = edges / slots;
  INFO("oracle hits " << hits << " expected " << expected << " observed edges " << edges << " density " << density);
  CHECK(density >= 0.5 * expected);
  CHECK(density <= 1.5 * expected);
}

TEST_CASE("S-Graph is invariant to per-channel affine rescaling") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = noise_segment(6, 100, rng);
    // Correlate some channels so edges exist.
    for (std::size_t t = 0; t < 100; ++t) s.at(3, t) += 0.8 * s.at(1, t);
    auto r = s;
    for (std::size_t c = 0; c < 6; ++c) {
      const double a = (c % 2 ? -1.0 : 1.0) * rng.uniform(0.1, 50.0);
      const double b = rng.uniform(-100, 100);
      for (auto& v : r.channel(c)) v = a * v + b;
    }
    const auto g1 = build_s_graph(s, 0.0);
    const auto g2 = build_s_graph(r, 0.0);
    for (std::size_t i = 0; i < g1.adjacency.size(); ++i) CHECK(std::abs(g1.adjacency[i] - g2.adjacency[i]) <= 1e-9);
  }
}

TEST_CASE("normalized adjacency examples") {
  Graph empty;
  empty.nodes = 3;
  empty.adjacency.assign(9, 0.0);
  const auto id = normalized_adjacency(empty);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(id[i * 3 + j] == (i == j ? 1.0 : 0.0));

  Graph two;
  two.nodes = 2;
  two.adjacency = {0, 1, 1, 0};
  const auto a = normalized_adjacency(two);
  for (double v : a) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("normalized Laplacian spectrum lies in [0, 2] on 20 random graphs") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = random_graph(10, rng);
    CHECK_NOTHROW(g.validate());
    const auto a = normalized_adjacency(g);
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 10; ++j) CHECK(a[i * 10 + j] == a[j * 10 + i]);
    const auto ev = laplacian_eigenvalues(a, 10);
    for (int k = 0; k < ev.size(); ++k) {
      CHECK(ev(k) >= -1e-9);
      CHECK(ev(k) <= 2.0 + 1e-9);
    }
  }
}

TEST_CASE("normalized adjacency preserves constants on regular graphs") {
  // Ring of 8 nodes with unit weights: every degree is 2.
  Graph ring;
  ring.nodes = 8;
  ring.adjacency.assign(64, 0.0);
  for (std::size_t i = 0; i < 8; ++i) {
    ring.adjacency[i * 8 + (i + 1) % 8] = 1.0;
    ring.adjacency[((i + 1) % 8) * 8 + i] = 1.0;
  }
  const auto a = normalized_adjacency(ring);
  for (std::size_t i = 0; i < 8; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 8; ++j) s += a[i * 8 + j];
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("graph set from a multichannel signal") {
  Rng rng(8);
  const auto layout = layout_subset(standard_layout_62(), 8);
  auto sig = noise_segment(8, 400, rng);
  const auto set = build_graph_set(layout, 3, sig, default_bands(200.0), 0.3);
  CHECK(set.s_graphs.size() == 5);
  CHECK(set.all().size() == 6);
  CHECK(set.nodes() == 8);
  for (const Graph* g : set.all()) CHECK_NOTHROW(g->validate());
  CHECK_THROWS_AS(build_graph_set(standard_layout_62(), 3, sig, default_bands(200.0), 0.3), ConfigError);
}
