#include "protoeeg/checkpoint.hpp"

namespace protoeeg {

using nlohmann::json;

namespace {

constexpr const char* kPrototypeKind = "protoeeg-model";
constexpr const char* kBaselineKind = "protoeeg-baseline";

json extractor_json(const ExtractorConfig& c) {
  return {{"input_channels", c.input_channels}, {"window_samples", c.window_samples},
          {"windows", c.windows},               {"blocks", c.blocks},
          {"base_width", c.base_width},         {"kernel", c.kernel},
          {"stride", c.stride},                 {"window_features", c.window_features},
          {"input_scale", c.input_scale},       {"precision", c.precision == Precision::F32 ? "f32" : "f64"}};
}

ExtractorConfig extractor_from_json(const json& j) {
  ExtractorConfig c;
  c.input_channels = j.at("input_channels");
  c.window_samples = j.at("window_samples");
  c.windows = j.at("windows");
  c.blocks = j.at("blocks");
  c.base_width = j.at("base_width");
  c.kernel = j.at("kernel");
  c.stride = j.at("stride");
  c.window_features = j.at("window_features");
  c.input_scale = j.at("input_scale");
  c.precision = j.at("precision") == "f32" ? Precision::F32 : Precision::F64;
  return c;
}

void put_extractor(TensorArchive& a, const ExtractorWeights& w) {
  a.meta["extractor"] = extractor_json(w.config);
  for (const auto& t : extractor_layout(w.config)) {
    const Eigen::Map<const Eigen::MatrixXd> m(w.params.data() + t.offset, t.rows, t.cols);
    a.put("extractor." + t.name, Eigen::MatrixXd(m));
  }
}

ExtractorWeights get_extractor(const TensorArchive& a) {
  ExtractorWeights w;
  w.config = extractor_from_json(a.meta.at("extractor"));
  w.params.resize(static_cast<Eigen::Index>(extractor_parameter_count(w.config)));
  for (const auto& t : extractor_layout(w.config)) {
    const Eigen::MatrixXd m = a.matrix("extractor." + t.name);
    if (m.rows() != t.rows || m.cols() != t.cols) throw ArchiveError("extractor tensor " + t.name + " has wrong shape");
    Eigen::Map<Eigen::MatrixXd>(w.params.data() + t.offset, t.rows, t.cols) = m;
  }
  return w;
}

json prototype_info_json(const std::vector<PrototypeInfo>& info) {
  json out = json::array();
  for (const auto& p : info)
    out.push_back({{"kind", p.kind == PrototypeKind::Single ? "single" : "dual"},
                   {"class_a", class_name(p.class_a)},
                   {"class_b", class_name(p.class_b)},
                   {"source_sample_id", p.source_sample_id ? json(*p.source_sample_id) : json(nullptr)}});
  return out;
}

ClassLabel class_from(const json& j) {
  const auto c = parse_class(j.get<std::string>());
  if (!c) throw ArchiveError("unknown class name in checkpoint");
  return *c;
}

std::vector<PrototypeInfo> prototype_info_from(const json& j) {
  std::vector<PrototypeInfo> out;
  for (const auto& p : j) {
    PrototypeInfo info;
    info.kind = p.at("kind") == "single" ? PrototypeKind::Single : PrototypeKind::Dual;
    info.class_a = class_from(p.at("class_a"));
    info.class_b = class_from(p.at("class_b"));
    if (!p.at("source_sample_id").is_null()) info.source_sample_id = p.at("source_sample_id").get<std::string>();
    out.push_back(info);
  }
  return out;
}

}  // namespace

const PrototypeModel& Checkpoint::prototype_model() const { return std::get<PrototypeModel>(model); }
const BaselineModel& Checkpoint::baseline_model() const { return std::get<BaselineModel>(model); }

const ExtractorWeights& Checkpoint::extractor() const {
  return is_baseline() ? baseline_model().extractor : prototype_model().extractor;
}

int Checkpoint::prototype_count() const { return is_baseline() ? 0 : prototype_model().prototype_count(); }

TensorArchive to_archive(const Checkpoint& ck) {
  TensorArchive a;
  a.meta["train_config"] = ck.train_config;
  a.meta["history"] = ck.history.to_json();
  if (const auto* b = std::get_if<BaselineModel>(&ck.model)) {
    a.kind = kBaselineKind;
    a.meta["config_hash"] = b->config_hash;
    a.meta["prototype_count"] = 0;
    put_extractor(a, b->extractor);
    a.put("head.weight", b->head_weight);
    a.put("head.bias", b->head_bias);
    return a;
  }
  const PrototypeModel& m = ck.prototype_model();
  a.kind = kPrototypeKind;
  a.meta["config_hash"] = m.config_hash;
  a.meta["prototype_count"] = m.prototype_count();
  a.meta["prototypes"] = prototype_info_json(m.info);
  put_extractor(a, m.extractor);
  a.put("prototypes", m.prototypes);
  a.put("class_connections", m.class_connections.weights);
  a.put("scale", Eigen::VectorXd(Eigen::VectorXd::Constant(1, m.scale)));
  return a;
}

namespace {

Checkpoint checkpoint_from(const TensorArchive& a) {
  Checkpoint ck;
  ck.train_config = a.meta.at("train_config");
  ck.history = TrainingHistory::from_json(a.meta.at("history"));
  if (a.kind == kBaselineKind) {
    BaselineModel b;
    b.config_hash = a.meta.at("config_hash");
    b.extractor = get_extractor(a);
    b.head_weight = a.matrix("head.weight");
    b.head_bias = a.vector("head.bias");
    ck.model = std::move(b);
    return ck;
  }
  PrototypeModel m;
  m.config_hash = a.meta.at("config_hash");
  m.extractor = get_extractor(a);
  m.prototypes = a.matrix("prototypes");
  m.class_connections.weights = a.matrix("class_connections");
  m.scale = a.vector("scale")[0];
  m.info = prototype_info_from(a.meta.at("prototypes"));
  if (static_cast<Eigen::Index>(m.info.size()) != m.prototypes.rows() ||
      m.class_connections.weights.rows() != m.prototypes.rows())
    throw ArchiveError("checkpoint prototype tensors disagree in count");
  ck.model = std::move(m);
  return ck;
}

}  // namespace

Checkpoint from_archive(const TensorArchive& a) {
  if (a.kind != kPrototypeKind && a.kind != kBaselineKind) throw ArchiveError("not a model checkpoint: " + a.kind);
  try {
    return checkpoint_from(a);
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(std::string("malformed checkpoint metadata: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) { to_archive(ck).save(path); }

Checkpoint load_checkpoint(const std::filesystem::path& path) { return from_archive(TensorArchive::load(path)); }

}  // namespace protoeeg
