#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "protoeeg/objectives.hpp"
#include "support.hpp"

using namespace protoeeg;

namespace {

std::vector<int> random_labels(int n, std::mt19937_64& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = int(rng() % kNumClasses);
  return y;
}

}  // namespace

TEST_CASE("default loss weights") {
  const LossWeights w;
  CHECK(w.cluster == -0.8);
  CHECK(w.separation == -0.08);
  CHECK(w.orthogonality == 100.0);
  CHECK(w.last_layer_l1 == 0.0001);
}

TEST_CASE("cross-entropy fixtures") {
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(1, 6);
  onehot(0, 2) = 1.0;
  const std::vector<int> y{2};
  CHECK(cross_entropy_loss(onehot, y) == doctest::Approx(0.0).epsilon(1e-9));
  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(1, 6, 1.0 / 6.0);
  CHECK(cross_entropy_loss(uniform, y) == doctest::Approx(1.791759469228055).epsilon(1e-12));
  Eigen::MatrixXd two(2, 6);
  two.row(0) = uniform.row(0);
  two.row(1) = onehot.row(0);
  const std::vector<int> y2{0, 2};
  CHECK(cross_entropy_loss(two, y2) == doctest::Approx(0.5 * std::log(6.0)));
  // log(0) is clamped at 1e-12.
  const std::vector<int> wrong{0};
  CHECK(cross_entropy_loss(onehot, wrong) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("inverse-frequency weights average one over present classes") {
  const std::vector<int> y{0, 0, 0, 1, 2, 2};
  const ClassVector w = inverse_frequency_weights(y);
  // Raw 1/3, 1, 1/2 with mean 11/18.
  CHECK(w[0] == doctest::Approx((1.0 / 3.0) * 18.0 / 11.0));
  CHECK(w[1] == doctest::Approx(18.0 / 11.0));
  CHECK(w[2] == doctest::Approx(0.5 * 18.0 / 11.0));
  CHECK(w[3] == 0.0);
  CHECK((w[0] + w[1] + w[2]) / 3.0 == doctest::Approx(1.0));
}

TEST_CASE("cluster and separation fixtures") {
  const auto info = default_prototype_layout();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(45, 50);
  for (int j = 0; j < 45; ++j) p(j, j) = 1.0;
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(1, 50);
  f(0, 6) = 2.0;  // equals prototype 6, a Seizure single
  const std::vector<int> seizure{1}, other{0};
  CHECK(cluster_loss(f, seizure, p, info) == doctest::Approx(64.0));
  CHECK(separation_loss(f, other, p, info) == doctest::Approx(-64.0));
  CHECK(separation_loss(f, seizure, p, info) == doctest::Approx(0.0));
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(1, 50);
  g(0, 49) = 1.0;  // orthogonal to every prototype
  CHECK(cluster_loss(g, seizure, p, info) == doctest::Approx(0.0));
  CHECK(separation_loss(g, seizure, p, info) == doctest::Approx(0.0));
}

TEST_CASE("property: cluster and separation match a brute-force oracle for both aggregations") {
  std::mt19937_64 rng(7);
  const auto info = default_prototype_layout();
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd f = testing::random_matrix(9, 11, rng);
    const Eigen::MatrixXd p = testing::random_matrix(45, 11, rng);
    const auto y = random_labels(9, rng);
    for (auto agg : {Aggregation::Max, Aggregation::Min}) {
      double clst = 0.0, sep = 0.0;
      for (int i = 0; i < 9; ++i) {
        std::vector<double> own, oth;
        for (int j = 0; j < 45; ++j) {
          const double s = 64.0 * oracle::cosine(f.row(i).transpose(), p.row(j).transpose());
          (info[j].belongs_to(label_at(y[i])) ? own : oth).push_back(s);
        }
        const bool mx = agg == Aggregation::Max;
        clst += mx ? *std::max_element(own.begin(), own.end()) : *std::min_element(own.begin(), own.end());
        sep -= mx ? *std::max_element(oth.begin(), oth.end()) : *std::min_element(oth.begin(), oth.end());
      }
      CHECK(cluster_loss(f, y, p, info, 64.0, agg) == doctest::Approx(clst / 9).epsilon(1e-10));
      CHECK(separation_loss(f, y, p, info, 64.0, agg) == doctest::Approx(sep / 9).epsilon(1e-10));
      // Invariant to positive rescaling of features.
      CHECK(cluster_loss(3.7 * f, y, p, info, 64.0, agg) == doctest::Approx(clst / 9).epsilon(1e-10));
    }
  }
}

TEST_CASE("orthogonality fixtures") {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(45, 60);
  CHECK(orthogonality_loss(eye) == doctest::Approx(0.0).epsilon(1e-15));
  Eigen::MatrixXd dup = eye;
  dup.row(1) = 5.0 * dup.row(0);
  CHECK(orthogonality_loss(dup) == doctest::Approx(2.0).epsilon(1e-14));
  Eigen::MatrixXd zero = eye;
  zero.row(3).setZero();
  CHECK_THROWS_AS(orthogonality_loss(zero), std::domain_error);
}

TEST_CASE("property: Frobenius and pairwise-cosine orthogonality forms agree and ignore rescaling") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::MatrixXd p = testing::random_matrix(6 + rep % 5, 8, rng);
    const double frob = orthogonality_loss(p);
    CHECK(frob == doctest::Approx(oracle::orthogonality_pairwise(p)).epsilon(1e-9));
    p.row(rep % p.rows()) *= scale(rng);
    CHECK(orthogonality_loss(p) == doctest::Approx(frob).epsilon(1e-12));
  }
}

TEST_CASE("last-layer L1 fixtures") {
  ClassConnectionMatrix cc;
  cc.weights = Eigen::MatrixXd::Zero(45, 6);
  CHECK(last_layer_l1(cc) == 0.0);
  CHECK(last_layer_l1(ClassConnectionMatrix::initial(default_prototype_layout())) == 270.0);
  std::mt19937_64 rng(1);
  cc.weights = testing::random_matrix(45, 6, rng);
  double sum = 0.0;
  for (int j = 0; j < 45; ++j)
    for (int c = 0; c < 6; ++c) sum += std::abs(cc.weights(j, c));
  CHECK(last_layer_l1(cc) == doctest::Approx(sum).epsilon(1e-14));
}

TEST_CASE("stage objectives") {
  LossBreakdown ones{1, 1, 1, 1, 1, 0, 0};
  CHECK(stage_objective(Stage::Joint, ones, {}).total == doctest::Approx(100.1201).epsilon(1e-12));
  CHECK(stage_objective(Stage::Warm, ones, {}).total == doctest::Approx(1 - 0.8 - 0.08 + 100).epsilon(1e-12));
  LossBreakdown varied{1, 7, -3, 42, 1, 0, 0};
  CHECK(stage_objective(Stage::Last, ones, {}).total == stage_objective(Stage::Last, varied, {}).total);
  CHECK(stage_objective(Stage::Last, ones, {}).total == doctest::Approx(1.0001));
  LossWeights no_ortho;
  no_ortho.orthogonality = 0.0;
  const LossBreakdown b{2, 3, 5, 11, 13, 0, 0};
  CHECK(stage_objective(Stage::Warm, b, no_ortho).total == doctest::Approx(2 - 0.8 * 3 - 0.08 * 5));
  LossBreakdown with_margin = b;
  with_margin.margin = 0.5;
  CHECK(stage_objective(Stage::Warm, with_margin, {}).total == stage_objective(Stage::Warm, b, {}).total);
  CHECK(stage_objective(Stage::Warm, with_margin, {}, true).total ==
        doctest::Approx(stage_objective(Stage::Warm, b, {}).total + 0.5));
}

TEST_CASE("margin term is zero when disabled and non-negative otherwise") {
  std::mt19937_64 rng(3);
  const auto info = default_prototype_layout();
  const auto cc = ClassConnectionMatrix::initial(info);
  const Eigen::MatrixXd f = testing::random_matrix(10, 7, rng);
  const Eigen::MatrixXd p = testing::random_matrix(45, 7, rng);
  const auto y = random_labels(10, rng);
  CHECK(margin_loss(f, y, p, info, cc, 0.0) == 0.0);
  // Lowering own-class similarity under +1 own connections can only raise the cross-entropy.
  CHECK(margin_loss(f, y, p, info, cc, 0.1) > 0.0);
}

TEST_CASE("accumulated sample terms match the batch loss functions") {
  std::mt19937_64 rng(5);
  const auto info = default_prototype_layout();
  auto cc = ClassConnectionMatrix::initial(info);
  const Eigen::MatrixXd f = testing::random_matrix(6, 9, rng);
  const Eigen::MatrixXd p = testing::random_matrix(45, 9, rng);
  const auto y = random_labels(6, rng);
  // A small scale keeps every probability above the clamp of the probability-space loss.
  ObjectiveOptions o;
  o.scale = 2.0;
  LossBreakdown acc;
  Eigen::MatrixXd probs(6, 6);
  for (int i = 0; i < 6; ++i) {
    accumulate_sample_terms(Stage::Joint, f.row(i).transpose(), {y[i], {}}, 1.0 / 6, o, p, info, cc, acc, nullptr);
    probs.row(i) = softmax(logits(similarities(f.row(i).transpose(), p, 2.0), cc)).transpose();
  }
  accumulate_global_terms(Stage::Joint, o, p, cc, acc, nullptr);
  CHECK(acc.cross_entropy == doctest::Approx(cross_entropy_loss(probs, y)).epsilon(1e-10));
  CHECK(acc.cluster == doctest::Approx(cluster_loss(f, y, p, info, 2.0)).epsilon(1e-12));
  CHECK(acc.separation == doctest::Approx(separation_loss(f, y, p, info, 2.0)).epsilon(1e-12));
  CHECK(acc.orthogonality == doctest::Approx(orthogonality_loss(p)).epsilon(1e-12));
  CHECK(acc.last_layer_l1 == 270.0);
}
