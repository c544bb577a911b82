#include <algorithm>
#include <random>

#include "doctest.h"
#include "protoeeg/atlas.hpp"

using namespace protoeeg;

namespace {

// Three tight, well separated Gaussian clusters in 8 dimensions.
Eigen::MatrixXd clusters(int per, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.05);
  Eigen::MatrixXd x(3 * per, 8);
  for (int i = 0; i < x.rows(); ++i)
    for (int d = 0; d < 8; ++d) x(i, d) = (d == i % 3 ? 3.0 : 0.0) + g(rng);
  return x;
}

ScoredSample sample_for(int i, ClassLabel majority, double score) {
  ScoredSample s;
  s.sample_id = "s" + std::to_string(100 + i);
  s.patient_id = "p";
  s.votes.counts[index_of(majority)] = 10;
  s.majority = majority;
  s.scores = Eigen::VectorXd::Constant(6, (1.0 - score) / 5.0);
  s.scores[index_of(majority)] = score;
  s.latent = Eigen::VectorXd::Ones(2);
  return s;
}

Eigen::MatrixXd points(std::initializer_list<std::pair<double, double>> xy) {
  Eigen::MatrixXd m(xy.size(), 2);
  int i = 0;
  for (auto [x, y] : xy) {
    m(i, 0) = x;
    m(i, 1) = y;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("embedding is deterministic in its seed and finite") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd x = clusters(15, rng);
  EmbeddingConfig cfg;
  cfg.iterations = 150;
  cfg.phase1_iterations = 50;
  cfg.phase2_iterations = 50;
  const Eigen::MatrixXd a = embed_2d(x, cfg, 3);
  const Eigen::MatrixXd b = embed_2d(x, cfg, 3);
  const Eigen::MatrixXd c = embed_2d(x, cfg, 4);
  CHECK(a.rows() == 45);
  CHECK(a.cols() == 2);
  CHECK(a.allFinite());
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("embedding keeps separated clusters apart") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd x = clusters(20, rng);
  const Eigen::MatrixXd y = embed_2d(x, EmbeddingConfig{}, 0);
  // Every point's nearest 2D neighbor comes from its own cluster.
  int same = 0;
  for (int i = 0; i < y.rows(); ++i) {
    int best = -1;
    for (int j = 0; j < y.rows(); ++j)
      if (j != i && (best < 0 || (y.row(j) - y.row(i)).norm() < (y.row(best) - y.row(i)).norm())) best = j;
    same += best % 3 == i % 3;
  }
  CHECK(same == y.rows());
}

TEST_CASE("embedding preserves neighborhoods of a planar grid lifted into eight dimensions") {
  std::mt19937_64 rng(6);
  Eigen::MatrixXd lift(2, 8);
  std::normal_distribution<double> g;
  for (Eigen::Index i = 0; i < lift.size(); ++i) lift.data()[i] = g(rng);
  Eigen::MatrixXd grid(64, 2);
  for (int i = 0; i < 64; ++i) {
    grid(i, 0) = i % 8 + 0.01 * g(rng);
    grid(i, 1) = i / 8 + 0.01 * g(rng);
  }
  const Eigen::MatrixXd x = grid * lift;
  const Eigen::MatrixXd y = embed_2d(x, EmbeddingConfig{}, 0);
  CHECK(knn_preservation(x, y) >= 0.6);
}

TEST_CASE("embed_points keeps ids aligned and records the source space") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd x = clusters(5, rng);
  std::vector<std::string> ids;
  for (int i = 0; i < 15; ++i) ids.push_back("id" + std::to_string(i));
  EmbeddingConfig cfg;
  cfg.space = EmbeddingSpace::Latent;
  cfg.neighbors = 4;
  const auto pts = embed_points(ids, x, cfg, 1);
  const Eigen::MatrixXd raw = embed_2d(x, cfg, 1);
  REQUIRE(pts.size() == 15);
  for (int i = 0; i < 15; ++i) {
    CHECK(pts[i].sample_id == ids[i]);
    CHECK(pts[i].x == raw(i, 0));
    CHECK(pts[i].y == raw(i, 1));
    CHECK(pts[i].source == EmbeddingSpace::Latent);
  }
  CHECK(parse_embedding_space("scores") == EmbeddingSpace::ClassScores);
  CHECK(parse_embedding_space("latent") == EmbeddingSpace::Latent);
  CHECK_THROWS(parse_embedding_space("umap"));
}

TEST_CASE("k-NN preservation fixtures") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd x = clusters(6, rng);
  CHECK(knn_preservation(x, x, 3) == 1.0);
  const Eigen::MatrixXd scaled = 2.5 * x;
  CHECK(knn_preservation(x, scaled, 3) == 1.0);
  const Eigen::MatrixXd line = points({{0, 0}, {1, 0}, {2, 0}, {3, 0}});
  const Eigen::MatrixXd swapped = points({{0, 0}, {1, 0}, {3, 0}, {2, 0}});
  // Nearest neighbors 1, 0, 1, 2 against 1, 0, 3, 1 (ties to the lower index).
  CHECK(knn_preservation(line, swapped, 1) == doctest::Approx(0.5));
}

TEST_CASE("default epsilon is twice the median nearest-neighbor distance") {
  const Eigen::MatrixXd m = points({{0, 0}, {1, 0}, {3, 0}, {7, 0}, {7.5, 0}});
  // Nearest-neighbor distances 1, 1, 2, 0.5, 0.5 with median 1.
  CHECK(default_path_epsilon(m) == doctest::Approx(2.0));
}

TEST_CASE("continuum path takes fewest hops then the shortest route") {
  // Class a at 0, class b at 4. Two 2-hop routes through points 2 and 3; point 3 is shorter.
  const Eigen::MatrixXd m = points({{0, 0}, {4, 0}, {2, 1.5}, {2, 0}, {1, 0}, {3, 0}});
  std::vector<ScoredSample> s{sample_for(0, ClassLabel::Other, 0.9), sample_for(1, ClassLabel::LPD, 0.9),
                              sample_for(2, ClassLabel::Other, 0.5), sample_for(3, ClassLabel::Other, 0.5),
                              sample_for(4, ClassLabel::Other, 0.5), sample_for(5, ClassLabel::LPD, 0.5)};
  const auto p = continuum_path(m, s, ClassLabel::Other, ClassLabel::LPD, 2.6);
  CHECK(p.indices == std::vector<std::size_t>{0, 3, 1});
  CHECK(p.sample_ids == std::vector<std::string>{"s100", "s103", "s101"});
  REQUIRE(p.step_distance.size() == 2);
  CHECK(p.step_distance[0] == doctest::Approx(2.0));
  CHECK(p.epsilon == 2.6);
  // With a smaller radius only unit hops remain.
  const auto q = continuum_path(m, s, ClassLabel::Other, ClassLabel::LPD, 1.0);
  CHECK(q.indices == std::vector<std::size_t>{0, 4, 3, 5, 1});
}

TEST_CASE("property: paths start and end at the confident endpoints with hops within epsilon") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 10.0), conf(0.3, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 10 + int(rng() % 30);
    Eigen::MatrixXd m(n, 2);
    std::vector<ScoredSample> s;
    for (int i = 0; i < n; ++i) {
      m(i, 0) = u(rng);
      m(i, 1) = u(rng);
      s.push_back(sample_for(i, label_at(int(rng() % 3)), conf(rng)));
    }
    s[0].majority = ClassLabel::Other;
    s[1].majority = ClassLabel::Seizure;
    const double eps = default_path_epsilon(m) * (1.0 + double(rng() % 4));
    const std::size_t from = most_confident(s, ClassLabel::Other);
    const std::size_t to = most_confident(s, ClassLabel::Seizure);
    try {
      const auto p = continuum_path(m, s, ClassLabel::Other, ClassLabel::Seizure, eps);
      CHECK(p.indices.front() == from);
      CHECK(p.indices.back() == to);
      for (double d : p.step_distance) CHECK(d <= eps);
      // Reversing the classes reverses a path of the same length.
      const auto r = continuum_path(m, s, ClassLabel::Seizure, ClassLabel::Other, eps);
      CHECK(r.indices.size() == p.indices.size());
      CHECK(r.indices.front() == to);
      CHECK(minimal_connecting_epsilon(m, from, to) <= eps);
    } catch (const NoPathError& e) {
      CHECK(e.minimal_epsilon > eps);
      CHECK(e.minimal_epsilon == minimal_connecting_epsilon(m, from, to));
      CHECK_NOTHROW(continuum_path(m, s, ClassLabel::Other, ClassLabel::Seizure, e.minimal_epsilon));
    }
  }
}

TEST_CASE("disconnected islands raise NoPathError with the connecting radius") {
  const Eigen::MatrixXd m = points({{0, 0}, {1, 0}, {10, 0}, {11, 0}});
  std::vector<ScoredSample> s{sample_for(0, ClassLabel::GPD, 0.9), sample_for(1, ClassLabel::GPD, 0.8),
                              sample_for(2, ClassLabel::GRDA, 0.7), sample_for(3, ClassLabel::GRDA, 0.9)};
  try {
    continuum_path(m, s, ClassLabel::GPD, ClassLabel::GRDA, 2.0);
    FAIL("expected NoPathError");
  } catch (const NoPathError& e) {
    CHECK(e.epsilon == 2.0);
    CHECK(e.minimal_epsilon == doctest::Approx(9.0));
  }
  CHECK(most_confident(s, ClassLabel::GRDA) == 3);
  CHECK_THROWS(most_confident(s, ClassLabel::LRDA));
}
