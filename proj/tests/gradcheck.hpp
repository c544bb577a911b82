#pragma once

// Finite-difference checks shared by the gradient unit tests and the acceptance binary.

#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "protoeeg/extractor.hpp"
#include "protoeeg/objectives.hpp"

namespace gradcheck {

using namespace protoeeg;

struct Case {
  std::string name;
  Stage stage = Stage::Joint;
  ObjectiveOptions options;
};

struct Errors {
  double value = 0.0;  // relative gap between library and oracle objective values
  double prototypes = 0.0;
  double class_connections = 0.0;
  double features = 0.0;
  double worst() const { return std::max({prototypes, class_connections, features}); }
};

inline ObjectiveOptions only(double cluster, double separation, double ortho, double l1) {
  ObjectiveOptions o;
  o.weights = {cluster, separation, ortho, l1};
  return o;
}

// One configuration per loss term, the label variants, and everything together.
inline std::vector<Case> cases() {
  std::vector<Case> out;
  out.push_back({"cross-entropy", Stage::Last, only(0, 0, 0, 0)});
  out.push_back({"cluster max", Stage::Warm, only(-0.8, 0, 0, 0)});
  out.push_back({"separation max", Stage::Warm, only(0, -0.08, 0, 0)});
  auto cmin = only(-0.8, 0, 0, 0);
  cmin.aggregation = Aggregation::Min;
  out.push_back({"cluster min", Stage::Warm, cmin});
  auto smin = only(0, -0.08, 0, 0);
  smin.aggregation = Aggregation::Min;
  out.push_back({"separation min", Stage::Warm, smin});
  out.push_back({"orthogonality", Stage::Warm, only(0, 0, 100, 0)});
  out.push_back({"last-layer l1", Stage::Joint, only(0, 0, 0, 0.5)});
  auto margin = only(0, 0, 0, 0);
  margin.margin = 0.1;
  out.push_back({"margin", Stage::Warm, margin});
  auto soft = only(0, 0, 0, 0);
  soft.soft_labels = true;
  out.push_back({"soft labels", Stage::Last, soft});
  auto weighted = only(0, 0, 0, 0);
  weighted.class_weights = {0.5, 1.5, 1.0, 0.7, 2.0, 0.3};
  out.push_back({"class weights", Stage::Last, weighted});
  out.push_back({"warm defaults", Stage::Warm, ObjectiveOptions{}});
  out.push_back({"joint defaults", Stage::Joint, ObjectiveOptions{}});
  out.push_back({"last defaults", Stage::Last, ObjectiveOptions{}});
  auto all = ObjectiveOptions{};
  all.margin = 0.05;
  all.soft_labels = true;
  all.aggregation = Aggregation::Min;
  all.class_weights = {1.2, 0.8, 1.1, 0.9, 1.0, 1.0};
  out.push_back({"everything", Stage::Joint, all});
  return out;
}

// Five prototypes over classes 0..2 so every label has own and other-class prototypes.
inline std::vector<PrototypeInfo> miniature_layout() {
  using enum ClassLabel;
  return {{PrototypeKind::Single, Other, Other, {}},
          {PrototypeKind::Single, Seizure, Seizure, {}},
          {PrototypeKind::Dual, Other, Seizure, {}},
          {PrototypeKind::Single, LPD, LPD, {}},
          {PrototypeKind::Dual, Seizure, LPD, {}}};
}

inline Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Errors check_objective(const Case& c, std::uint64_t seed, int n = 4, int dim = 8) {
  std::mt19937_64 rng(seed);
  const auto info = miniature_layout();
  const int m = int(info.size());
  Eigen::MatrixXd p = gaussian(m, dim, rng);
  ClassConnectionMatrix cc = ClassConnectionMatrix::initial(info);
  cc.weights += 0.2 * gaussian(m, kNumClasses, rng);
  std::vector<oracle::Sample> batch(n);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (auto& s : batch) {
    s.feature = gaussian(dim, 1, rng);
    s.label = int(rng() % 3);
    double total = 0.0;
    for (auto& x : s.soft) total += (x = u(rng));
    for (auto& x : s.soft) x /= total;
  }
  const ObjectiveOptions& o = c.options;

  LossBreakdown acc;
  ObjectiveGradients g;
  g.reset(m, dim);
  Eigen::VectorXd d_features(n * dim);
  for (int i = 0; i < n; ++i) {
    const SampleTarget t{batch[i].label, batch[i].soft};
    d_features.segment(i * dim, dim) =
        accumulate_sample_terms(c.stage, batch[i].feature, t, 1.0 / n, o, p, info, cc, acc, &g);
  }
  accumulate_global_terms(c.stage, o, p, cc, acc, &g);
  const double value = stage_objective(c.stage, acc, o.weights, o.margin != 0.0).total;

  auto f = [&] { return oracle::objective(c.stage, batch, p, info, cc.weights, o); };
  Errors e;
  const double expect = f();
  e.value = std::abs(value - expect) / std::max(1.0, std::abs(expect));

  Eigen::Map<Eigen::VectorXd> p_flat(p.data(), p.size());
  const Eigen::VectorXd fd_p = oracle::central_difference(p_flat, f);
  e.prototypes = oracle::relative_error(Eigen::Map<const Eigen::VectorXd>(g.prototypes.data(), g.prototypes.size()), fd_p);

  Eigen::Map<Eigen::VectorXd> w_flat(cc.weights.data(), cc.weights.size());
  const Eigen::VectorXd fd_w = oracle::central_difference(w_flat, f);
  e.class_connections = oracle::relative_error(
      Eigen::Map<const Eigen::VectorXd>(g.class_connections.data(), g.class_connections.size()), fd_w);

  Eigen::VectorXd fd_f(n * dim);
  for (int i = 0; i < n; ++i) fd_f.segment(i * dim, dim) = oracle::central_difference(batch[i].feature, f);
  e.features = oracle::relative_error(d_features, fd_f);
  return e;
}

inline ExtractorConfig miniature_extractor() {
  ExtractorConfig cfg;
  cfg.input_channels = 2;
  cfg.window_samples = 48;
  cfg.windows = 2;
  cfg.blocks = 2;
  cfg.base_width = 3;
  cfg.kernel = 5;
  cfg.stride = 2;
  cfg.window_features = 4;
  cfg.precision = Precision::F64;
  return cfg;
}

inline EegSample random_sample(const ExtractorConfig& cfg, std::mt19937_64& rng) {
  EegSample s;
  s.id = "g";
  s.channels = cfg.input_channels;
  s.sample_rate = 1;
  std::normal_distribution<float> n(0.0f, 40.0f);
  s.signal.resize(std::size_t(cfg.input_channels) * cfg.windows * cfg.window_samples);
  for (auto& x : s.signal) x = n(rng);
  return s;
}

// Relative error of the extractor parameter gradient of <g, feature(x)>.
inline double check_extractor(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const ExtractorConfig cfg = miniature_extractor();
  ExtractorWeights w = ExtractorWeights::random(cfg, rng());
  const EegSample s = random_sample(cfg, rng);
  const Eigen::VectorXd upstream = gaussian(cfg.feature_dim(), 1, rng);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(w.params.size());
  FeatureExtractor(w).forward_backward(s, [&](const FeatureVector&) { return upstream; }, grad);
  auto f = [&] { return upstream.dot(FeatureExtractor(w).extract(s)); };
  const Eigen::VectorXd fd = oracle::central_difference(w.params, f);
  return oracle::relative_error(grad, fd);
}

}  // namespace gradcheck
