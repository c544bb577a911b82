#include "protoeeg/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace protoeeg {

std::vector<PrototypeInfo> default_prototype_layout() {
  std::vector<PrototypeInfo> out;
  for (int c = 0; c < kNumClasses; ++c)
    for (int k = 0; k < kSinglePrototypesPerClass; ++k)
      out.push_back({PrototypeKind::Single, label_at(c), label_at(c), std::nullopt});
  for (int a = 0; a < kNumClasses; ++a)
    for (int b = a + 1; b < kNumClasses; ++b) out.push_back({PrototypeKind::Dual, label_at(a), label_at(b), std::nullopt});
  return out;
}

ClassConnectionMatrix ClassConnectionMatrix::initial(const std::vector<PrototypeInfo>& layout) {
  ClassConnectionMatrix cc;
  cc.weights = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(layout.size()), kNumClasses, -1.0);
  for (std::size_t j = 0; j < layout.size(); ++j)
    for (int c = 0; c < kNumClasses; ++c)
      if (layout[j].belongs_to(label_at(c))) cc.weights(static_cast<Eigen::Index>(j), c) = 1.0;
  return cc;
}

bool PrototypeModel::grounded() const {
  return !info.empty() && std::all_of(info.begin(), info.end(), [](const auto& p) { return p.source_sample_id.has_value(); });
}

double similarity(const Eigen::VectorXd& f, const Eigen::VectorXd& p, double scale) {
  const double nf = f.norm();
  const double np = p.norm();
  if (!(nf > 0.0) || !(np > 0.0)) throw std::domain_error("similarity: zero-norm vector");
  return scale * f.dot(p) / (nf * np);
}

Eigen::VectorXd similarities(const Eigen::VectorXd& f, const Eigen::MatrixXd& prototypes, double scale) {
  const double nf = f.norm();
  if (!(nf > 0.0)) throw std::domain_error("similarity: zero-norm feature");
  // Row by row so identical prototypes get bit-identical similarities.
  Eigen::VectorXd out(prototypes.rows());
  for (Eigen::Index j = 0; j < prototypes.rows(); ++j) {
    const double np = prototypes.row(j).norm();
    if (!(np > 0.0)) throw std::domain_error("similarity: zero-norm prototype");
    out[j] = (scale / nf) * (prototypes.row(j).dot(f) / np);
  }
  return out;
}

Eigen::VectorXd logits(const Eigen::VectorXd& sims, const ClassConnectionMatrix& cc) {
  if (sims.size() != cc.weights.rows()) throw std::invalid_argument("logits: prototype count mismatch");
  return cc.weights.transpose() * sims;
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

ClassLabel Prediction::predicted() const {
  Eigen::Index best = 0;
  probabilities.maxCoeff(&best);
  return label_at(static_cast<int>(best));
}

Prediction predict_from_feature(const FeatureVector& f, const PrototypeModel& model) {
  Prediction p;
  p.sims = similarities(f, model.prototypes, model.scale);
  p.logits = logits(p.sims, model.class_connections);
  p.probabilities = softmax(p.logits);
  return p;
}

Eigen::VectorXd predict(const EegSample& sample, const PrototypeModel& model) {
  return predict_from_feature(feature_extract(sample, model.extractor), model).probabilities;
}

namespace {

SimilarityRecord make_record(const std::string& id, int j, ClassLabel c, double sim, const PrototypeModel& m) {
  SimilarityRecord r;
  r.sample_id = id;
  r.prototype_index = j;
  r.designated_class = c;
  r.sim = sim;
  r.affinity = m.class_connections.weights(j, index_of(c));
  r.score = r.sim * r.affinity;
  return r;
}

// Class indices ordered by descending value, lower index first on ties.
std::vector<int> rank_desc(const Eigen::VectorXd& v) {
  std::vector<int> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return v[a] > v[b]; });
  return order;
}

}  // namespace

std::vector<SimilarityRecord> explain_feature(const std::string& sample_id, const FeatureVector& f,
                                              const PrototypeModel& model, std::optional<ClassLabel> target,
                                              int k) {
  if (k < 0 || k > model.prototype_count()) throw std::invalid_argument("explain: k out of range");
  const Prediction pred = predict_from_feature(f, model);
  const ClassLabel cls = target.value_or(pred.predicted());
  const auto order = rank_desc(pred.sims);
  std::vector<SimilarityRecord> out;
  for (int i = 0; i < k; ++i) out.push_back(make_record(sample_id, order[i], cls, pred.sims[order[i]], model));
  return out;
}

std::vector<SimilarityRecord> explain(const EegSample& sample, const PrototypeModel& model,
                                      std::optional<ClassLabel> target, int k) {
  return explain_feature(sample.id, feature_extract(sample, model.extractor), model, target, k);
}

std::vector<SimilarityRecord> explain_per_class_feature(const std::string& sample_id, const FeatureVector& f,
                                                        const PrototypeModel& model) {
  const Prediction pred = predict_from_feature(f, model);
  const auto classes = rank_desc(pred.logits);
  std::vector<SimilarityRecord> out;
  for (int r = 0; r < 3; ++r) {
    const ClassLabel c = label_at(classes[r]);
    int best = -1;
    for (int j = 0; j < model.prototype_count(); ++j)
      if (model.info[j].belongs_to(c) && (best < 0 || pred.sims[j] > pred.sims[best])) best = j;
    if (best < 0) throw std::logic_error("explain_per_class: class without prototypes");
    out.push_back(make_record(sample_id, best, c, pred.sims[best], model));
  }
  return out;
}

std::vector<SimilarityRecord> explain_per_class(const EegSample& sample, const PrototypeModel& model) {
  return explain_per_class_feature(sample.id, feature_extract(sample, model.extractor), model);
}

}  // namespace protoeeg
