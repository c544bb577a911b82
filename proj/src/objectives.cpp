#include "protoeeg/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace protoeeg {

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::Warm: return "warm";
    case Stage::Joint: return "joint";
    case Stage::Last: return "last";
  }
  return "?";
}

double cross_entropy_loss(const Eigen::MatrixXd& probabilities, std::span<const int> labels,
                          std::span<const double> class_weights) {
  if (static_cast<std::size_t>(probabilities.rows()) != labels.size())
    throw std::invalid_argument("cross_entropy_loss: batch size mismatch");
  if (labels.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double w = class_weights.empty() ? 1.0 : class_weights[labels[i]];
    sum += -w * std::log(std::max(probabilities(static_cast<Eigen::Index>(i), labels[i]), kLogEpsilon));
  }
  return sum / double(labels.size());
}

ClassVector inverse_frequency_weights(std::span<const int> labels) {
  ClassVector counts{};
  for (int y : labels) counts.at(y) += 1.0;
  ClassVector w{};
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < kNumClasses; ++c)
    if (counts[c] > 0) {
      w[c] = 1.0 / counts[c];
      sum += w[c];
      ++present;
    }
  if (present == 0) return w;
  for (double& v : w) v *= present / sum;
  return w;
}

namespace {

// Index of the aggregated similarity among prototypes whose membership in `label` equals `own`.
int select_prototype(const Eigen::VectorXd& sims, int label, bool own, const std::vector<PrototypeInfo>& info,
                     Aggregation agg) {
  int best = -1;
  for (int j = 0; j < sims.size(); ++j) {
    if (info[j].belongs_to(label_at(label)) != own) continue;
    if (best < 0 || (agg == Aggregation::Max ? sims[j] > sims[best] : sims[j] < sims[best])) best = j;
  }
  if (best < 0)
    throw std::invalid_argument(std::string("no ") + (own ? "own-class" : "other-class") +
                                " prototype for class " + std::string(kClassNames.at(label)));
  return best;
}

Eigen::MatrixXd normalized_rows(const Eigen::MatrixXd& p) {
  const Eigen::VectorXd norms = p.rowwise().norm();
  if ((norms.array() <= 0.0).any()) throw std::domain_error("zero-norm prototype");
  return norms.cwiseInverse().asDiagonal() * p;
}

Eigen::VectorXd own_class_mask(int label, const std::vector<PrototypeInfo>& info) {
  Eigen::VectorXd mask(static_cast<Eigen::Index>(info.size()));
  for (std::size_t j = 0; j < info.size(); ++j) mask[j] = info[j].belongs_to(label_at(label)) ? 1.0 : 0.0;
  return mask;
}

// Weighted cross-entropy from logits and its gradient w.r.t. the logits.
double ce_from_logits(const Eigen::VectorXd& z, const SampleTarget& t, const ObjectiveOptions& o,
                      Eigen::VectorXd* dz) {
  const Eigen::VectorXd logp = log_softmax(z);
  const Eigen::VectorXd p = logp.array().exp();
  if (!o.soft_labels) {
    const double w = o.class_weights[t.label];
    if (dz) {
      *dz = w * p;
      (*dz)[t.label] -= w;
    }
    return -w * logp[t.label];
  }
  double loss = 0.0, mass = 0.0;
  Eigen::VectorXd wq(kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) {
    wq[c] = o.class_weights[c] * t.soft[c];
    loss -= wq[c] * logp[c];
    mass += wq[c];
  }
  if (dz) *dz = mass * p - wq;
  return loss;
}

}  // namespace

double cluster_loss(const Eigen::MatrixXd& features, std::span<const int> labels, const Eigen::MatrixXd& prototypes,
                    const std::vector<PrototypeInfo>& info, double scale, Aggregation agg) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw std::invalid_argument("cluster_loss: batch size mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Eigen::VectorXd s = similarities(features.row(i).transpose(), prototypes, scale);
    sum += s[select_prototype(s, labels[i], true, info, agg)];
  }
  return labels.empty() ? 0.0 : sum / double(labels.size());
}

double separation_loss(const Eigen::MatrixXd& features, std::span<const int> labels,
                       const Eigen::MatrixXd& prototypes, const std::vector<PrototypeInfo>& info, double scale,
                       Aggregation agg) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw std::invalid_argument("separation_loss: batch size mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Eigen::VectorXd s = similarities(features.row(i).transpose(), prototypes, scale);
    sum += s[select_prototype(s, labels[i], false, info, agg)];
  }
  return labels.empty() ? 0.0 : -sum / double(labels.size());
}

double orthogonality_loss(const Eigen::MatrixXd& prototypes) {
  const Eigen::MatrixXd v = normalized_rows(prototypes);
  const Eigen::MatrixXd gram = v * v.transpose() - Eigen::MatrixXd::Identity(v.rows(), v.rows());
  return gram.squaredNorm();
}

double last_layer_l1(const ClassConnectionMatrix& cc) { return cc.weights.cwiseAbs().sum(); }

double margin_loss(const Eigen::MatrixXd& features, std::span<const int> labels, const Eigen::MatrixXd& prototypes,
                   const std::vector<PrototypeInfo>& info, const ClassConnectionMatrix& cc, double margin,
                   double scale) {
  if (margin == 0.0 || labels.empty()) return 0.0;
  ObjectiveOptions o;
  o.scale = scale;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Eigen::VectorXd s = similarities(features.row(i).transpose(), prototypes, scale);
    const Eigen::VectorXd shifted = s - scale * margin * own_class_mask(labels[i], info);
    SampleTarget t{labels[i], {}};
    sum += ce_from_logits(logits(shifted, cc), t, o, nullptr) - ce_from_logits(logits(s, cc), t, o, nullptr);
  }
  return sum / double(labels.size());
}

LossBreakdown stage_objective(Stage stage, LossBreakdown c, const LossWeights& w, bool margin_enabled) {
  switch (stage) {
    case Stage::Warm:
      c.total = c.cross_entropy + w.cluster * c.cluster + w.separation * c.separation +
                w.orthogonality * c.orthogonality;
      break;
    case Stage::Joint:
      c.total = c.cross_entropy + w.cluster * c.cluster + w.separation * c.separation +
                w.orthogonality * c.orthogonality + w.last_layer_l1 * c.last_layer_l1;
      break;
    case Stage::Last:
      c.total = c.cross_entropy + w.last_layer_l1 * c.last_layer_l1;
      break;
  }
  if (margin_enabled && stage != Stage::Last) c.total += c.margin;
  return c;
}

Eigen::VectorXd accumulate_sample_terms(Stage stage, const FeatureVector& f, const SampleTarget& target,
                                        double inv_n, const ObjectiveOptions& o, const Eigen::MatrixXd& prototypes,
                                        const std::vector<PrototypeInfo>& info, const ClassConnectionMatrix& cc,
                                        LossBreakdown& acc, ObjectiveGradients* grads) {
  const double f_norm = f.norm();
  if (!(f_norm > 0.0)) throw std::domain_error("zero-norm feature vector");
  const Eigen::VectorXd p_norms = prototypes.rowwise().norm();
  if ((p_norms.array() <= 0.0).any()) throw std::domain_error("zero-norm prototype");
  const Eigen::VectorXd u = f / f_norm;
  const Eigen::VectorXd cosines = (prototypes * u).cwiseQuotient(p_norms);
  const Eigen::VectorXd sims = o.scale * cosines;
  const Eigen::MatrixXd& w = cc.weights;

  const bool need = grads != nullptr;
  Eigen::VectorXd d_sims = Eigen::VectorXd::Zero(sims.size());

  Eigen::VectorXd dz;
  acc.cross_entropy += inv_n * ce_from_logits(w.transpose() * sims, target, o, need ? &dz : nullptr);
  if (need) {
    d_sims += inv_n * (w * dz);
    grads->class_connections += inv_n * sims * dz.transpose();
  }

  const int own = select_prototype(sims, target.label, true, info, o.aggregation);
  const int other = select_prototype(sims, target.label, false, info, o.aggregation);
  acc.cluster += inv_n * sims[own];
  acc.separation -= inv_n * sims[other];
  if (need && stage != Stage::Last) {
    d_sims[own] += inv_n * o.weights.cluster;
    d_sims[other] -= inv_n * o.weights.separation;
  }

  if (o.margin != 0.0) {
    const Eigen::VectorXd shifted = sims - o.scale * o.margin * own_class_mask(target.label, info);
    Eigen::VectorXd dz_m;
    const double ce_m = ce_from_logits(w.transpose() * shifted, target, o, need ? &dz_m : nullptr);
    const double ce = ce_from_logits(w.transpose() * sims, target, o, nullptr);
    acc.margin += inv_n * (ce_m - ce);
    if (need && stage != Stage::Last) {
      d_sims += inv_n * (w * (dz_m - dz));
      grads->class_connections += inv_n * (shifted * dz_m.transpose() - sims * dz.transpose());
    }
  }

  if (!need) return {};
  // ds/df = (a/|f|)(v - c u); ds/dp = (a/|p|)(u - c v), with v the unit prototype.
  const Eigen::MatrixXd v = p_norms.cwiseInverse().asDiagonal() * prototypes;
  const Eigen::VectorXd d_f = (o.scale / f_norm) * (v.transpose() * d_sims - d_sims.dot(cosines) * u);
  const Eigen::VectorXd coef = o.scale * d_sims.cwiseQuotient(p_norms);
  grads->prototypes.noalias() += coef * u.transpose();
  grads->prototypes.noalias() -= (coef.cwiseProduct(cosines)).asDiagonal() * v;
  return d_f;
}

void accumulate_global_terms(Stage stage, const ObjectiveOptions& o, const Eigen::MatrixXd& prototypes,
                             const ClassConnectionMatrix& cc, LossBreakdown& acc, ObjectiveGradients* grads) {
  const Eigen::VectorXd norms = prototypes.rowwise().norm();
  if ((norms.array() <= 0.0).any()) throw std::domain_error("zero-norm prototype");
  const Eigen::MatrixXd v = norms.cwiseInverse().asDiagonal() * prototypes;
  const Eigen::MatrixXd gram = v * v.transpose() - Eigen::MatrixXd::Identity(v.rows(), v.rows());
  acc.orthogonality += gram.squaredNorm();
  acc.last_layer_l1 += last_layer_l1(cc);
  if (!grads) return;
  if (stage != Stage::Last) {
    const Eigen::MatrixXd d_v = 4.0 * o.weights.orthogonality * gram * v;
    // Project out the radial component and undo the normalization.
    const Eigen::VectorXd radial = (d_v.cwiseProduct(v)).rowwise().sum();
    grads->prototypes += norms.cwiseInverse().asDiagonal() * (d_v - radial.asDiagonal() * v);
  }
  if (stage != Stage::Warm)
    grads->class_connections += o.weights.last_layer_l1 * cc.weights.unaryExpr([](double x) {
      return double((x > 0.0) - (x < 0.0));
    });
}

}  // namespace protoeeg
