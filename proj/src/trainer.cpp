#include "protoeeg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>

#include "protoeeg/hashing.hpp"
#include "protoeeg/optim.hpp"

namespace protoeeg {

using nlohmann::json;

// ---------------------------------------------------------------- config

json TrainConfig::to_json() const {
  return {
      {"epochs_total", epochs_total},
      {"warm_epochs", warm_epochs},
      {"joint_epochs_per_cycle", joint_epochs_per_cycle},
      {"last_layer_epochs_per_cycle", last_layer_epochs_per_cycle},
      {"lr_warm_prototypes", lr_warm_prototypes},
      {"lr_joint_extractor", lr_joint_extractor},
      {"lr_joint_prototypes", lr_joint_prototypes},
      {"lr_joint_last_layer", lr_joint_last_layer},
      {"lr_last_layer", lr_last_layer},
      {"batch_size", batch_size},
      {"seed", seed},
      {"lambda_cluster", weights.cluster},
      {"lambda_separation", weights.separation},
      {"lambda_orthogonality", weights.orthogonality},
      {"lambda_l1", weights.last_layer_l1},
      {"aggregation", aggregation == Aggregation::Max ? "max" : "min"},
      {"soft_labels", soft_labels},
      {"margin", margin},
      {"scale", scale},
      {"pretrain_epochs", pretrain_epochs},
      {"lr_pretrain", lr_pretrain},
      {"validation_fraction", validation_fraction},
      {"base_width", base_width},
      {"window_features", window_features},
      {"precision", precision == Precision::F32 ? "f32" : "f64"},
  };
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  const json defaults = c.to_json();
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw ConfigError("unknown training option: " + key);
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j.at(key).get<std::decay_t<decltype(field)>>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("invalid value for training option ") + key);
    }
  };
  get("epochs_total", c.epochs_total);
  get("warm_epochs", c.warm_epochs);
  get("joint_epochs_per_cycle", c.joint_epochs_per_cycle);
  get("last_layer_epochs_per_cycle", c.last_layer_epochs_per_cycle);
  get("lr_warm_prototypes", c.lr_warm_prototypes);
  get("lr_joint_extractor", c.lr_joint_extractor);
  get("lr_joint_prototypes", c.lr_joint_prototypes);
  get("lr_joint_last_layer", c.lr_joint_last_layer);
  get("lr_last_layer", c.lr_last_layer);
  get("batch_size", c.batch_size);
  get("seed", c.seed);
  get("lambda_cluster", c.weights.cluster);
  get("lambda_separation", c.weights.separation);
  get("lambda_orthogonality", c.weights.orthogonality);
  get("lambda_l1", c.weights.last_layer_l1);
  get("soft_labels", c.soft_labels);
  get("margin", c.margin);
  get("scale", c.scale);
  get("pretrain_epochs", c.pretrain_epochs);
  get("lr_pretrain", c.lr_pretrain);
  get("validation_fraction", c.validation_fraction);
  get("base_width", c.base_width);
  get("window_features", c.window_features);
  std::string agg = c.aggregation == Aggregation::Max ? "max" : "min";
  get("aggregation", agg);
  if (agg != "max" && agg != "min") throw ConfigError("aggregation must be max or min");
  c.aggregation = agg == "max" ? Aggregation::Max : Aggregation::Min;
  std::string prec = "f32";
  get("precision", prec);
  if (prec != "f32" && prec != "f64") throw ConfigError("precision must be f32 or f64");
  c.precision = prec == "f32" ? Precision::F32 : Precision::F64;
  c.validate();
  return c;
}

std::string TrainConfig::hash() const { return sha256_hex(to_json().dump()); }

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(epochs_total >= 0, "epochs_total must be >= 0");
  require(warm_epochs >= 0 && epochs_total >= warm_epochs, "need 0 <= warm_epochs <= epochs_total");
  require(joint_epochs_per_cycle >= 1, "joint_epochs_per_cycle must be >= 1");
  require(last_layer_epochs_per_cycle >= 0, "last_layer_epochs_per_cycle must be >= 0");
  for (double lr : {lr_warm_prototypes, lr_joint_extractor, lr_joint_prototypes, lr_joint_last_layer, lr_last_layer,
                    lr_pretrain})
    require(std::isfinite(lr) && lr >= 0.0, "learning rates must be finite and >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(scale > 0.0, "scale must be > 0");
  require(margin >= 0.0, "margin must be >= 0");
  require(pretrain_epochs >= 0, "pretrain_epochs must be >= 0");
  require(validation_fraction >= 0.0 && validation_fraction < 1.0, "validation_fraction must be in [0, 1)");
  require(base_width >= 1 && window_features >= 1, "extractor widths must be >= 1");
}

std::vector<ScheduledEpoch> training_schedule(const TrainConfig& c) {
  std::vector<ScheduledEpoch> out;
  const int cycle = c.joint_epochs_per_cycle + c.last_layer_epochs_per_cycle;
  for (int e = 1; e <= c.epochs_total; ++e) {
    if (e <= c.warm_epochs) {
      out.push_back({e, Stage::Warm, false});
      continue;
    }
    const int k = (e - c.warm_epochs - 1) % cycle;
    if (k < c.joint_epochs_per_cycle)
      out.push_back({e, Stage::Joint, k == c.joint_epochs_per_cycle - 1});
    else
      out.push_back({e, Stage::Last, false});
  }
  return out;
}

// ---------------------------------------------------------------- history

namespace {

json loss_json(const LossBreakdown& l) {
  return {{"cross_entropy", l.cross_entropy}, {"cluster", l.cluster},
          {"separation", l.separation},       {"orthogonality", l.orthogonality},
          {"last_layer_l1", l.last_layer_l1}, {"margin", l.margin},
          {"total", l.total}};
}

LossBreakdown loss_from_json(const json& j) {
  LossBreakdown l;
  l.cross_entropy = j.at("cross_entropy");
  l.cluster = j.at("cluster");
  l.separation = j.at("separation");
  l.orthogonality = j.at("orthogonality");
  l.last_layer_l1 = j.at("last_layer_l1");
  l.margin = j.at("margin");
  l.total = j.at("total");
  return l;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> optional_from(const json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

Stage parse_stage(const std::string& s) {
  if (s == "warm") return Stage::Warm;
  if (s == "joint") return Stage::Joint;
  if (s == "last") return Stage::Last;
  throw std::invalid_argument("unknown stage " + s);
}

}  // namespace

json TrainingHistory::to_json() const {
  json epochs_j = json::array();
  for (const auto& e : epochs)
    epochs_j.push_back({{"epoch", e.epoch},
                        {"stage", stage_name(e.stage)},
                        {"loss", loss_json(e.loss)},
                        {"train_accuracy", e.train_accuracy},
                        {"val_cross_entropy", optional_json(e.val_cross_entropy)},
                        {"val_accuracy", optional_json(e.val_accuracy)}});
  json proj_j = json::array();
  for (const auto& p : projections)
    proj_j.push_back({{"epoch", p.epoch},
                      {"prototype", p.prototype},
                      {"source_sample_id", p.source_sample_id},
                      {"similarity_before", p.similarity_before},
                      {"similarity_after", p.similarity_after}});
  return {{"epochs", epochs_j},
          {"projections", proj_j},
          {"pretrain_loss", pretrain_loss},
          {"pretrain_accuracy", optional_json(pretrain_accuracy)}};
}

TrainingHistory TrainingHistory::from_json(const json& j) {
  TrainingHistory h;
  for (const auto& e : j.at("epochs")) {
    EpochRecord r;
    r.epoch = e.at("epoch");
    r.stage = parse_stage(e.at("stage"));
    r.loss = loss_from_json(e.at("loss"));
    r.train_accuracy = e.at("train_accuracy");
    r.val_cross_entropy = optional_from(e.at("val_cross_entropy"));
    r.val_accuracy = optional_from(e.at("val_accuracy"));
    h.epochs.push_back(r);
  }
  for (const auto& p : j.at("projections"))
    h.projections.push_back({p.at("epoch"), p.at("prototype"), p.at("source_sample_id"), p.at("similarity_before"),
                             p.at("similarity_after")});
  h.pretrain_loss = j.at("pretrain_loss").get<std::vector<double>>();
  h.pretrain_accuracy = optional_from(j.at("pretrain_accuracy"));
  return h;
}

std::string TrainingHistory::csv() const {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "epoch,stage,cross_entropy,cluster,separation,orthogonality,last_layer_l1,margin,total,train_accuracy,"
         "val_cross_entropy,val_accuracy\n";
  for (const auto& e : epochs) {
    const auto& l = e.loss;
    out << e.epoch << ',' << stage_name(e.stage) << ',' << l.cross_entropy << ',' << l.cluster << ','
        << l.separation << ',' << l.orthogonality << ',' << l.last_layer_l1 << ',' << l.margin << ',' << l.total
        << ',' << e.train_accuracy << ',';
    if (e.val_cross_entropy) out << *e.val_cross_entropy;
    out << ',';
    if (e.val_accuracy) out << *e.val_accuracy;
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------- data plumbing

FitSplit fit_split(const Dataset& ds, double validation_fraction, std::uint64_t seed) {
  const auto train = ds.indices(Split::Train);
  std::set<std::string> patient_set;
  for (auto i : train) patient_set.insert(ds.samples[i].patient_id);
  std::vector<std::string> patients(patient_set.begin(), patient_set.end());
  std::mt19937_64 rng(seed ^ 0x76616c6964ULL);
  std::shuffle(patients.begin(), patients.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * double(patients.size())));
  const std::set<std::string> held(patients.begin(), patients.begin() + std::min(n_val, patients.size()));
  FitSplit s;
  for (auto i : train) (held.count(ds.samples[i].patient_id) ? s.validation : s.fit).push_back(i);
  return s;
}

ExtractorConfig extractor_config(const Dataset& ds, const TrainConfig& c) {
  ExtractorConfig e = ExtractorConfig::for_dataset(ds.channels, ds.sample_rate);
  e.base_width = c.base_width;
  e.window_features = c.window_features;
  e.precision = c.precision;
  return e;
}

Eigen::MatrixXd extract_features(const Dataset& ds, std::span<const std::size_t> indices,
                                 const ExtractorWeights& weights) {
  const FeatureExtractor fx(weights);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(indices.size()), weights.config.feature_dim());
  for (std::size_t r = 0; r < indices.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = fx.extract(ds.samples[indices[r]]).transpose();
  return out;
}

namespace {

void shuffle_order(std::vector<std::size_t>& order, std::mt19937_64& rng) { std::shuffle(order.begin(), order.end(), rng); }

std::vector<int> majority_labels(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<int> out;
  for (auto i : idx) out.push_back(index_of(ds.samples[i].majority()));
  return out;
}

SampleTarget target_of(const EegSample& s) { return {index_of(s.majority()), s.votes.normalized()}; }

// Weighted cross-entropy of an affine softmax head; fills the head gradients and returns dL/df.
Eigen::VectorXd head_terms(const FeatureVector& f, int label, double w, double inv_n, const Eigen::MatrixXd& hw,
                           const Eigen::VectorXd& hb, double& loss, int& correct, Eigen::MatrixXd& g_w,
                           Eigen::VectorXd& g_b) {
  const Eigen::VectorXd z = hw * f + hb;
  const Eigen::VectorXd logp = log_softmax(z);
  Eigen::Index arg = 0;
  z.maxCoeff(&arg);
  correct += arg == label;
  loss += -w * logp[label];
  Eigen::VectorXd dz = w * inv_n * logp.array().exp().matrix();
  dz[label] -= w * inv_n;
  g_w.noalias() += dz * f.transpose();
  g_b += dz;
  return hw.transpose() * dz;
}

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NonFiniteLoss(what);
}

// Trains an extractor with an affine head; shared by pretraining and the baseline.
struct HeadTrainer {
  const Dataset& ds;
  std::vector<std::size_t> fit;
  ClassVector class_weights;
  int batch_size;

  // One epoch; returns (mean weighted loss, running accuracy).
  std::pair<double, double> epoch(ExtractorWeights& ext, Eigen::MatrixXd& hw, Eigen::VectorXd& hb, Adam& opt_e,
                                  Adam& opt_w, Adam& opt_b, std::mt19937_64& rng, const std::string& tag) const {
    std::vector<std::size_t> order = fit;
    shuffle_order(order, rng);
    double loss = 0.0;
    int correct = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      const double inv_n = 1.0 / double(end - start);
      const FeatureExtractor fx(ext);
      Eigen::VectorXd g_e = Eigen::VectorXd::Zero(ext.params.size());
      Eigen::MatrixXd g_w = Eigen::MatrixXd::Zero(hw.rows(), hw.cols());
      Eigen::VectorXd g_b = Eigen::VectorXd::Zero(hb.size());
      for (std::size_t k = start; k < end; ++k) {
        const EegSample& s = ds.samples[order[k]];
        const int y = index_of(s.majority());
        fx.forward_backward(
            s, [&](const FeatureVector& f) { return head_terms(f, y, class_weights[y], inv_n, hw, hb, loss, correct, g_w, g_b); },
            g_e);
      }
      require_finite(loss, tag + ": non-finite cross-entropy");
      opt_e.step(ext.params, g_e);
      opt_w.step(hw, g_w);
      opt_b.step(hb, g_b);
    }
    return {loss / double(order.size()), double(correct) / double(order.size())};
  }
};

}  // namespace

PretrainResult pretrain_extractor(const Dataset& ds, const TrainConfig& c) {
  c.validate();
  const ExtractorConfig ec = extractor_config(ds, c);
  PretrainResult r;
  r.weights = ExtractorWeights::random(ec, c.seed);
  const FitSplit split = fit_split(ds, c.validation_fraction, c.seed);
  if (split.fit.empty()) throw DatasetError("pretraining needs a non-empty train split");
  const auto labels = majority_labels(ds, split.fit);

  std::mt19937_64 rng(c.seed ^ 0x70726574ULL);
  std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / ec.feature_dim()));
  r.head_weight = Eigen::MatrixXd::NullaryExpr(kNumClasses, ec.feature_dim(), [&] { return normal(rng); });
  r.head_bias = Eigen::VectorXd::Zero(kNumClasses);
  if (c.pretrain_epochs == 0) return r;

  const HeadTrainer trainer{ds, split.fit, inverse_frequency_weights(labels), c.batch_size};
  Adam opt_e(c.lr_pretrain), opt_w(c.lr_pretrain), opt_b(c.lr_pretrain);
  for (int e = 1; e <= c.pretrain_epochs; ++e) {
    const auto [loss, acc] =
        trainer.epoch(r.weights, r.head_weight, r.head_bias, opt_e, opt_w, opt_b, rng, "pretrain epoch " + std::to_string(e));
    r.epoch_loss.push_back(loss);
  }
  const Eigen::MatrixXd feats = extract_features(ds, split.fit, r.weights);
  int correct = 0;
  for (Eigen::Index i = 0; i < feats.rows(); ++i) {
    Eigen::Index arg = 0;
    (r.head_weight * feats.row(i).transpose() + r.head_bias).maxCoeff(&arg);
    correct += arg == labels[i];
  }
  r.head_accuracy = double(correct) / double(feats.rows());
  return r;
}

PrototypeModel init_model(const Dataset& ds, const TrainConfig& c, const ExtractorWeights& extractor,
                          std::uint64_t seed) {
  const auto candidates = ds.projection_indices();
  if (candidates.empty()) throw DatasetError("empty projection set");
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (auto i : candidates) by_class[index_of(ds.samples[i].majority())].push_back(i);
  for (int k = 0; k < kNumClasses; ++k)
    if (by_class[k].empty())
      throw DatasetError("class " + std::string(kClassNames[k]) + " has no projection-set samples");

  PrototypeModel m;
  m.extractor = extractor;
  m.info = default_prototype_layout();
  m.class_connections = ClassConnectionMatrix::initial(m.info);
  m.scale = c.scale;
  m.config_hash = c.hash();

  // Draw without replacement per class, reshuffling a class's pool once it is exhausted.
  std::mt19937_64 rng(seed ^ 0x696e6974ULL);
  std::array<std::vector<std::size_t>, kNumClasses> pools;
  auto draw = [&](int k) {
    if (pools[k].empty()) {
      pools[k] = by_class[k];
      std::shuffle(pools[k].begin(), pools[k].end(), rng);
    }
    const std::size_t i = pools[k].back();
    pools[k].pop_back();
    return i;
  };
  std::vector<std::size_t> chosen;
  int dual_seen = 0;
  for (const auto& p : m.info) {
    const bool take_b = p.kind == PrototypeKind::Dual && (dual_seen++ % 2 == 1);
    chosen.push_back(draw(index_of(take_b ? p.class_b : p.class_a)));
  }
  const Eigen::MatrixXd feats = extract_features(ds, chosen, extractor);
  const Eigen::VectorXd norms = feats.rowwise().norm();
  if ((norms.array() <= 0.0).any()) throw std::domain_error("init_model: zero-norm feature");
  m.prototypes = norms.cwiseInverse().asDiagonal() * feats;
  return m;
}

std::vector<ProjectionEvent> project_prototypes(PrototypeModel& m, const Eigen::MatrixXd& features,
                                                std::span<const std::string> ids, int epoch) {
  if (features.rows() == 0) throw DatasetError("empty projection set");
  if (static_cast<std::size_t>(features.rows()) != ids.size())
    throw std::invalid_argument("project_prototypes: ids and features differ in length");
  std::vector<ProjectionEvent> events;
  for (int j = 0; j < m.prototype_count(); ++j) {
    const Eigen::VectorXd p = m.prototypes.row(j).transpose();
    const Eigen::VectorXd sims = similarities(p, features, m.scale);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < sims.size(); ++i)
      if (sims[i] > sims[best] || (sims[i] == sims[best] && ids[i] < ids[best])) best = i;
    ProjectionEvent ev;
    ev.epoch = epoch;
    ev.prototype = j;
    ev.source_sample_id = ids[best];
    ev.similarity_before = sims[best];
    m.prototypes.row(j) = features.row(best);
    m.info[j].source_sample_id = ids[best];
    ev.similarity_after = similarity(features.row(best).transpose(), m.prototypes.row(j).transpose(), m.scale);
    events.push_back(ev);
  }
  return events;
}

std::vector<ProjectionEvent> project_prototypes(PrototypeModel& m, const Dataset& ds, int epoch) {
  const auto idx = ds.projection_indices();
  std::vector<std::string> ids;
  for (auto i : idx) ids.push_back(ds.samples[i].id);
  return project_prototypes(m, extract_features(ds, idx, m.extractor), ids, epoch);
}

// ---------------------------------------------------------------- training loop

namespace {

// Lazily computed features under the current extractor weights.
class FeatureCache {
 public:
  FeatureCache(const Dataset& ds, const ExtractorWeights& w) : ds_(ds), w_(w), rows_(ds.samples.size()) {}

  const FeatureVector& get(std::size_t i) {
    if (rows_[i].size() == 0) {
      if (!fx_) fx_ = std::make_unique<FeatureExtractor>(w_);
      rows_[i] = fx_->extract(ds_.samples[i]);
    }
    return rows_[i];
  }
  void invalidate() {
    fx_.reset();
    for (auto& r : rows_) r.resize(0);
  }

 private:
  const Dataset& ds_;
  const ExtractorWeights& w_;
  std::unique_ptr<FeatureExtractor> fx_;
  std::vector<FeatureVector> rows_;
};

std::string describe(const LossBreakdown& l) {
  std::ostringstream o;
  o << "ce=" << l.cross_entropy << " clst=" << l.cluster << " sep=" << l.separation << " ortho=" << l.orthogonality
    << " l1=" << l.last_layer_l1 << " margin=" << l.margin;
  return o.str();
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& c, const EpochCallback& on_epoch) {
  c.validate();
  return train(ds, c, pretrain_extractor(ds, c), on_epoch);
}

TrainResult train(const Dataset& ds, const TrainConfig& c, const PretrainResult& pre, const EpochCallback& on_epoch) {
  c.validate();
  const FitSplit split = fit_split(ds, c.validation_fraction, c.seed);
  if (split.fit.empty()) throw DatasetError("training needs a non-empty train split");

  TrainResult out;
  PrototypeModel& m = out.model;
  m = init_model(ds, c, pre.weights, c.seed);
  TrainingHistory& hist = out.history;
  hist.pretrain_loss = pre.epoch_loss;
  if (!pre.epoch_loss.empty()) hist.pretrain_accuracy = pre.head_accuracy;

  std::vector<SampleTarget> targets(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) targets[i] = target_of(ds.samples[i]);
  const auto candidates = ds.projection_indices();
  std::vector<std::string> candidate_ids;
  for (auto i : candidates) candidate_ids.push_back(ds.samples[i].id);

  ObjectiveOptions opts;
  opts.weights = c.weights;
  opts.aggregation = c.aggregation;
  opts.soft_labels = c.soft_labels;
  opts.margin = c.margin;
  opts.class_weights = inverse_frequency_weights(majority_labels(ds, split.fit));
  opts.scale = c.scale;

  Adam warm_p(c.lr_warm_prototypes);
  Adam joint_e(c.lr_joint_extractor), joint_p(c.lr_joint_prototypes), joint_c(c.lr_joint_last_layer);
  Adam last_c(c.lr_last_layer);

  FeatureCache cache(ds, m.extractor);
  std::mt19937_64 rng(c.seed ^ 0x747261696eULL);
  const Eigen::Index n_proto = m.prototype_count();
  const Eigen::Index dim = m.prototypes.cols();
  ObjectiveGradients grads;
  Eigen::MatrixXd& w = m.class_connections.weights;

  for (const ScheduledEpoch& e : training_schedule(c)) {
    const std::string tag = "epoch " + std::to_string(e.epoch) + " (" + std::string(stage_name(e.stage)) + ")";
    std::vector<std::size_t> order = split.fit;
    shuffle_order(order, rng);
    for (std::size_t start = 0; start < order.size(); start += c.batch_size) {
      const std::size_t end = std::min(order.size(), start + c.batch_size);
      const double inv_n = 1.0 / double(end - start);
      grads.reset(n_proto, dim);
      LossBreakdown acc;
      Eigen::VectorXd g_e;
      if (e.stage == Stage::Joint) {
        g_e = Eigen::VectorXd::Zero(m.extractor.params.size());
        const FeatureExtractor fx(m.extractor);
        for (std::size_t k = start; k < end; ++k)
          fx.forward_backward(
              ds.samples[order[k]],
              [&](const FeatureVector& f) {
                return accumulate_sample_terms(e.stage, f, targets[order[k]], inv_n, opts, m.prototypes, m.info,
                                               m.class_connections, acc, &grads);
              },
              g_e);
      } else {
        for (std::size_t k = start; k < end; ++k)
          accumulate_sample_terms(e.stage, cache.get(order[k]), targets[order[k]], inv_n, opts, m.prototypes, m.info,
                                  m.class_connections, acc, &grads);
      }
      accumulate_global_terms(e.stage, opts, m.prototypes, m.class_connections, acc, &grads);
      require_finite(stage_objective(e.stage, acc, c.weights, c.margin != 0.0).total,
                     tag + ": non-finite batch objective; " + describe(acc));
      switch (e.stage) {
        case Stage::Warm:
          warm_p.step(m.prototypes, grads.prototypes);
          break;
        case Stage::Joint:
          joint_e.step(m.extractor.params, g_e);
          joint_p.step(m.prototypes, grads.prototypes);
          joint_c.step(w, grads.class_connections);
          cache.invalidate();
          break;
        case Stage::Last:
          last_c.step(w, grads.class_connections);
          break;
      }
    }

    EpochRecord rec;
    rec.epoch = e.epoch;
    rec.stage = e.stage;
    LossBreakdown acc;
    int correct = 0;
    const double inv_fit = 1.0 / double(split.fit.size());
    for (auto i : split.fit) {
      const FeatureVector& f = cache.get(i);
      accumulate_sample_terms(e.stage, f, targets[i], inv_fit, opts, m.prototypes, m.info, m.class_connections, acc,
                              nullptr);
      correct += index_of(predict_from_feature(f, m).predicted()) == targets[i].label;
    }
    accumulate_global_terms(e.stage, opts, m.prototypes, m.class_connections, acc, nullptr);
    rec.loss = stage_objective(e.stage, acc, c.weights, c.margin != 0.0);
    require_finite(rec.loss.total, tag + ": non-finite objective; " + describe(rec.loss));
    rec.train_accuracy = correct * inv_fit;
    if (!split.validation.empty()) {
      double ce = 0.0;
      int ok = 0;
      for (auto i : split.validation) {
        const Prediction p = predict_from_feature(cache.get(i), m);
        ce -= log_softmax(p.logits)[targets[i].label];
        ok += index_of(p.predicted()) == targets[i].label;
      }
      rec.val_cross_entropy = ce / double(split.validation.size());
      rec.val_accuracy = double(ok) / double(split.validation.size());
    }
    hist.epochs.push_back(rec);

    if (e.project_after) {
      Eigen::MatrixXd feats(static_cast<Eigen::Index>(candidates.size()), dim);
      for (std::size_t r = 0; r < candidates.size(); ++r) feats.row(static_cast<Eigen::Index>(r)) = cache.get(candidates[r]).transpose();
      const auto events = project_prototypes(m, feats, candidate_ids, e.epoch);
      hist.projections.insert(hist.projections.end(), events.begin(), events.end());
    }
    if (on_epoch) on_epoch(m, hist, e.project_after);
  }
  return out;
}

BaselineResult train_baseline(const Dataset& ds, const TrainConfig& c) {
  c.validate();
  return train_baseline(ds, c, pretrain_extractor(ds, c));
}

BaselineResult train_baseline(const Dataset& ds, const TrainConfig& c, const PretrainResult& pre) {
  c.validate();
  const FitSplit split = fit_split(ds, c.validation_fraction, c.seed);
  if (split.fit.empty()) throw DatasetError("training needs a non-empty train split");
  BaselineResult out;
  BaselineModel& m = out.model;
  m.extractor = pre.weights;
  m.head_weight = pre.head_weight;
  m.head_bias = pre.head_bias;
  m.config_hash = c.hash();
  out.history.pretrain_loss = pre.epoch_loss;
  if (!pre.epoch_loss.empty()) out.history.pretrain_accuracy = pre.head_accuracy;

  const HeadTrainer trainer{ds, split.fit, inverse_frequency_weights(majority_labels(ds, split.fit)), c.batch_size};
  Adam opt_e(c.lr_joint_extractor), opt_w(c.lr_last_layer), opt_b(c.lr_last_layer);
  std::mt19937_64 rng(c.seed ^ 0x626173656cULL);
  for (int e = 1; e <= c.epochs_total; ++e) {
    const auto [loss, acc] =
        trainer.epoch(m.extractor, m.head_weight, m.head_bias, opt_e, opt_w, opt_b, rng, "baseline epoch " + std::to_string(e));
    EpochRecord rec;
    rec.epoch = e;
    rec.stage = Stage::Joint;
    rec.loss.cross_entropy = loss;
    rec.loss.total = loss;
    rec.train_accuracy = acc;
    if (!split.validation.empty()) {
      const Eigen::MatrixXd feats = extract_features(ds, split.validation, m.extractor);
      double ce = 0.0;
      int ok = 0;
      for (Eigen::Index r = 0; r < feats.rows(); ++r) {
        const Eigen::VectorXd z = m.logits(feats.row(r).transpose());
        const int y = index_of(ds.samples[split.validation[r]].majority());
        ce -= log_softmax(z)[y];
        Eigen::Index arg = 0;
        z.maxCoeff(&arg);
        ok += arg == y;
      }
      rec.val_cross_entropy = ce / double(feats.rows());
      rec.val_accuracy = double(ok) / double(feats.rows());
    }
    out.history.epochs.push_back(rec);
  }
  return out;
}

}  // namespace protoeeg
