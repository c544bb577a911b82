#include "protoeeg/snapshot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "protoeeg/hashing.hpp"

namespace protoeeg {

using nlohmann::json;

const std::vector<ColorScheme>& color_schemes() {
  static const std::vector<ColorScheme> schemes = [] {
    std::vector<ColorScheme> s{
        {"majority", "Human majority vote", "class", "Class with the most rater votes (ties: lowest class index)."},
        {"prediction", "Model prediction", "class", "Class with the highest predicted probability."},
        {"uncertainty", "Model uncertainty", "scalar", "Entropy of the predicted class distribution, in nats."},
    };
    for (int c = 0; c < kNumClasses; ++c) {
      std::string name(kClassNames[c]);
      std::string id = "prob_" + name;
      std::transform(id.begin(), id.end(), id.begin(), [](unsigned char ch) { return std::tolower(ch); });
      s.push_back({id, "Predicted probability: " + name, "scalar", "Model probability of class " + name + "."});
    }
    return s;
  }();
  return schemes;
}

json SnapshotConfig::to_json() const {
  return {{"embedding", embedding.to_json()},
          {"seed", seed},
          {"waveform_columns", waveform_columns},
          {"spectrogram",
           {{"window_seconds", spectrogram.window_seconds},
            {"overlap", spectrogram.overlap},
            {"floor_db", spectrogram.floor_db},
            {"epsilon", spectrogram.epsilon}}}};
}

namespace {

SnapshotConfig config_from_json(const json& j) {
  SnapshotConfig c;
  const json& e = j.at("embedding");
  c.embedding.neighbors = e.at("neighbors");
  c.embedding.mid_near_ratio = e.at("mid_near_ratio");
  c.embedding.further_ratio = e.at("further_ratio");
  c.embedding.iterations = e.at("iterations");
  c.embedding.phase1_iterations = e.at("phase1_iterations");
  c.embedding.phase2_iterations = e.at("phase2_iterations");
  c.embedding.learning_rate = e.at("learning_rate");
  c.embedding.pca_dims = e.at("pca_dims");
  c.embedding.space = parse_embedding_space(e.at("space").get<std::string>());
  c.seed = j.at("seed");
  c.waveform_columns = j.at("waveform_columns");
  const json& s = j.at("spectrogram");
  c.spectrogram.window_seconds = s.at("window_seconds");
  c.spectrogram.overlap = s.at("overlap");
  c.spectrogram.floor_db = s.at("floor_db");
  c.spectrogram.epsilon = s.at("epsilon");
  return c;
}

ClassLabel class_from(const json& j) {
  const auto c = parse_class(j.get<std::string>());
  if (!c) throw SnapshotError("unknown class name in snapshot");
  return *c;
}

// Rows of equal-length float vectors as one matrix.
template <typename Get>
Eigen::MatrixXd stack(std::size_t n, Eigen::Index cols, Get get) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), cols);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = get(i);
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = v[c];
  }
  return m;
}

}  // namespace

ClassLabel SnapshotSample::predicted() const {
  Eigen::Index arg = 0;
  probabilities.maxCoeff(&arg);
  return label_at(static_cast<int>(arg));
}

double SnapshotSample::entropy() const {
  double h = 0.0;
  for (Eigen::Index c = 0; c < probabilities.size(); ++c)
    if (probabilities[c] > 0.0) h -= probabilities[c] * std::log(probabilities[c]);
  return h;
}

std::optional<std::size_t> AtlasSnapshot::find(std::string_view id) const {
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].id == id) return i;
  return std::nullopt;
}

std::size_t AtlasSnapshot::map_size() const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.on_map; }));
}

PrototypeModel AtlasSnapshot::prototype_layer() const {
  PrototypeModel m;
  m.prototypes = prototype_latents;
  m.scale = scale;
  m.config_hash = model_config_hash;
  m.class_connections.weights.resize(static_cast<Eigen::Index>(prototypes.size()), kNumClasses);
  for (std::size_t j = 0; j < prototypes.size(); ++j) {
    m.info.push_back(prototypes[j].info);
    m.class_connections.weights.row(static_cast<Eigen::Index>(j)) = prototypes[j].class_connections.transpose();
  }
  return m;
}

std::vector<ScoredSample> AtlasSnapshot::map_samples() const {
  std::vector<ScoredSample> out;
  for (const auto& s : samples)
    if (s.on_map) out.push_back({s.id, s.patient_id, s.votes, s.majority, s.probabilities, s.latent});
  return out;
}

Eigen::MatrixXd AtlasSnapshot::map_coordinates() const {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(map_size()), 2);
  Eigen::Index r = 0;
  for (const auto& s : samples)
    if (s.on_map) y.row(r++) << s.x, s.y;
  return y;
}

TensorArchive AtlasSnapshot::to_archive() const {
  TensorArchive a;
  a.kind = "protoeeg-snapshot";
  a.meta["config"] = config.to_json();
  a.meta["model_config_hash"] = model_config_hash;
  a.meta["scale"] = scale;
  a.meta["channels"] = channels;
  a.meta["sample_rate"] = sample_rate;
  a.meta["waveform_columns"] = waveform_columns;
  json recs = json::array();
  for (const auto& s : samples) {
    json r = {{"id", s.id},
              {"patient_id", s.patient_id},
              {"split", split_name(s.split)},
              {"on_map", s.on_map},
              {"votes", s.votes.counts},
              {"spectrogram_floor_db", s.spectrogram.floor_value_db}};
    if (s.blend)
      r["blend"] = {{"pattern_a", class_name(s.blend->pattern_a)},
                    {"pattern_b", class_name(s.blend->pattern_b)},
                    {"beta", s.blend->beta},
                    {"bridge", s.blend->bridge}};
    recs.push_back(std::move(r));
  }
  a.meta["samples"] = std::move(recs);
  const Spectrogram& sp0 = samples.empty() ? Spectrogram{} : samples.front().spectrogram;
  a.meta["spectrogram"] = {{"bins", sp0.bins},
                           {"frames", sp0.frames},
                           {"freq_resolution", sp0.freq_resolution},
                           {"time_resolution", sp0.time_resolution}};
  json protos = json::array();
  for (const auto& p : prototypes)
    protos.push_back({{"index", p.index},
                      {"kind", p.info.kind == PrototypeKind::Single ? "single" : "dual"},
                      {"class_a", class_name(p.info.class_a)},
                      {"class_b", class_name(p.info.class_b)},
                      {"source_sample_id", p.info.source_sample_id.value_or("")}});
  a.meta["prototypes"] = std::move(protos);

  const std::size_t n = samples.size();
  if (n > 0) {
    a.put("latents", stack(n, samples[0].latent.size(), [&](std::size_t i) { return samples[i].latent; }));
    a.put("coords", stack(n, 2, [&](std::size_t i) { return std::array<double, 2>{samples[i].x, samples[i].y}; }));
    const auto wcols = static_cast<Eigen::Index>(samples[0].wave_min.size());
    a.put("waveform_min", stack(n, wcols, [&](std::size_t i) { return samples[i].wave_min; }));
    a.put("waveform_max", stack(n, wcols, [&](std::size_t i) { return samples[i].wave_max; }));
    const auto scols = static_cast<Eigen::Index>(samples[0].spectrogram.power_db.size());
    a.put("spectrogram", stack(n, scols, [&](std::size_t i) { return samples[i].spectrogram.power_db; }));
  }
  a.put("prototype_latents", prototype_latents);
  a.put("class_connections",
        stack(prototypes.size(), kNumClasses, [&](std::size_t j) { return prototypes[j].class_connections; }));
  return a;
}

AtlasSnapshot AtlasSnapshot::from_archive(const TensorArchive& a, const std::string& hash) {
  if (a.kind != "protoeeg-snapshot") throw SnapshotError("not a snapshot archive: " + a.kind);
  AtlasSnapshot s;
  try {
    s.config = config_from_json(a.meta.at("config"));
    s.model_config_hash = a.meta.at("model_config_hash");
    s.scale = a.meta.at("scale");
    s.channels = a.meta.at("channels");
    s.sample_rate = a.meta.at("sample_rate");
    s.waveform_columns = a.meta.at("waveform_columns");
    const json& recs = a.meta.at("samples");
    const json& sp = a.meta.at("spectrogram");
    Eigen::MatrixXd lat, coords, wmin, wmax, spec;
    if (!recs.empty()) {
      lat = a.matrix("latents");
      coords = a.matrix("coords");
      wmin = a.matrix("waveform_min");
      wmax = a.matrix("waveform_max");
      spec = a.matrix("spectrogram");
    }
    Eigen::Index i = 0;
    for (const auto& r : recs) {
      SnapshotSample x;
      x.id = r.at("id");
      x.patient_id = r.at("patient_id");
      x.split = r.at("split") == "test" ? Split::Test : Split::Train;
      x.on_map = r.at("on_map");
      x.votes.counts = r.at("votes").get<std::array<int, kNumClasses>>();
      x.majority = x.votes.majority();
      if (r.contains("blend")) {
        const json& b = r["blend"];
        x.blend = BlendInfo{class_from(b.at("pattern_a")), class_from(b.at("pattern_b")), b.at("beta"), b.at("bridge")};
      }
      x.latent = lat.row(i).transpose();
      x.x = coords(i, 0);
      x.y = coords(i, 1);
      x.wave_min.resize(wmin.cols());
      x.wave_max.resize(wmax.cols());
      for (Eigen::Index c = 0; c < wmin.cols(); ++c) {
        x.wave_min[c] = static_cast<float>(wmin(i, c));
        x.wave_max[c] = static_cast<float>(wmax(i, c));
      }
      x.spectrogram.bins = sp.at("bins");
      x.spectrogram.frames = sp.at("frames");
      x.spectrogram.freq_resolution = sp.at("freq_resolution");
      x.spectrogram.time_resolution = sp.at("time_resolution");
      x.spectrogram.floor_value_db = r.at("spectrogram_floor_db");
      x.spectrogram.power_db.assign(spec.cols(), 0.0);
      for (Eigen::Index c = 0; c < spec.cols(); ++c) x.spectrogram.power_db[c] = spec(i, c);
      s.samples.push_back(std::move(x));
      ++i;
    }
    s.prototype_latents = a.matrix("prototype_latents");
    const Eigen::MatrixXd cc = a.matrix("class_connections");
    Eigen::Index j = 0;
    for (const auto& p : a.meta.at("prototypes")) {
      SnapshotPrototype proto;
      proto.index = p.at("index");
      proto.info.kind = p.at("kind") == "single" ? PrototypeKind::Single : PrototypeKind::Dual;
      proto.info.class_a = class_from(p.at("class_a"));
      proto.info.class_b = class_from(p.at("class_b"));
      proto.info.source_sample_id = p.at("source_sample_id").get<std::string>();
      proto.class_connections = cc.row(j++).transpose();
      s.prototypes.push_back(std::move(proto));
    }
    // Scores are derived from the stored latents so the panel reproduces them exactly.
    const PrototypeModel layer = s.prototype_layer();
    for (auto& x : s.samples) {
      const Prediction p = predict_from_feature(x.latent, layer);
      x.logits = p.logits;
      x.probabilities = p.probabilities;
    }
  } catch (const json::exception& e) {
    throw SnapshotError(std::string("malformed snapshot: ") + e.what());
  }
  s.hash = hash;
  return s;
}

void AtlasSnapshot::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = to_archive().serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SnapshotError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

AtlasSnapshot AtlasSnapshot::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SnapshotError("cannot open snapshot " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  return from_archive(TensorArchive::deserialize(bytes), sha256_hex(bytes));
}

void downsample_minmax(const EegSample& sample, int columns, std::vector<float>& mins, std::vector<float>& maxs) {
  const int t = sample.timesteps();
  if (t == 0) throw std::invalid_argument("downsample_minmax: empty signal");
  columns = std::min(columns, t);
  mins.assign(std::size_t(sample.channels) * columns, 0.0f);
  maxs.assign(mins.size(), 0.0f);
  for (int c = 0; c < sample.channels; ++c) {
    const auto ch = sample.channel(c);
    for (int k = 0; k < columns; ++k) {
      const std::size_t begin = std::size_t(k) * t / columns;
      const std::size_t end = std::size_t(k + 1) * t / columns;
      const auto [lo, hi] = std::minmax_element(ch.begin() + begin, ch.begin() + end);
      mins[std::size_t(c) * columns + k] = *lo;
      maxs[std::size_t(c) * columns + k] = *hi;
    }
  }
}

AtlasSnapshot build_snapshot(const PrototypeModel& model, const Dataset& ds, const SnapshotConfig& cfg) {
  if (!model.grounded()) throw SnapshotError("model prototypes are not grounded; projection never ran");
  std::vector<std::size_t> order = ds.indices(Split::Test);
  std::set<std::string> source_ids;
  for (const auto& p : model.info) source_ids.insert(*p.source_sample_id);
  for (const auto& id : source_ids) {
    std::size_t idx;
    try {
      idx = ds.index_of(id);
    } catch (const std::out_of_range&) {
      throw SnapshotError("prototype source " + id + " is not in the dataset");
    }
    if (ds.samples[idx].split != Split::Test) order.push_back(idx);
  }

  AtlasSnapshot s;
  s.config = cfg;
  s.model_config_hash = model.config_hash;
  s.scale = model.scale;
  s.channels = ds.channels;
  s.sample_rate = ds.sample_rate;
  s.waveform_columns = std::min(cfg.waveform_columns, ds.timesteps());
  const FeatureExtractor fx(model.extractor);
  for (auto i : order) {
    const EegSample& e = ds.samples[i];
    SnapshotSample x;
    x.id = e.id;
    x.patient_id = e.patient_id;
    x.split = e.split;
    x.on_map = e.split == Split::Test;
    x.votes = e.votes;
    x.majority = e.majority();
    x.blend = e.blend;
    x.latent = fx.extract(e);
    const Prediction p = predict_from_feature(x.latent, model);
    x.probabilities = p.probabilities;
    x.logits = p.logits;
    downsample_minmax(e, s.waveform_columns, x.wave_min, x.wave_max);
    x.spectrogram = compute_spectrogram(e, ChannelReduce::Mean, 0, cfg.spectrogram);
    s.samples.push_back(std::move(x));
  }
  Eigen::MatrixXd input(static_cast<Eigen::Index>(s.samples.size()),
                        cfg.embedding.space == EmbeddingSpace::ClassScores ? kNumClasses : model.prototypes.cols());
  for (std::size_t i = 0; i < s.samples.size(); ++i)
    input.row(static_cast<Eigen::Index>(i)) =
        (cfg.embedding.space == EmbeddingSpace::ClassScores ? s.samples[i].probabilities : s.samples[i].latent)
            .transpose();
  const Eigen::MatrixXd y = embed_2d(input, cfg.embedding, cfg.seed);
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    s.samples[i].x = y(static_cast<Eigen::Index>(i), 0);
    s.samples[i].y = y(static_cast<Eigen::Index>(i), 1);
  }
  s.prototype_latents = model.prototypes;
  for (int j = 0; j < model.prototype_count(); ++j)
    s.prototypes.push_back({j, model.info[j], model.class_connections.weights.row(j).transpose()});

  // Round-trip through the archive so the in-memory snapshot equals a loaded one.
  const std::string bytes = s.to_archive().serialize();
  return AtlasSnapshot::from_archive(TensorArchive::deserialize(bytes), sha256_hex(bytes));
}

std::optional<PanelMode> parse_panel_mode(std::string_view name) {
  if (name == "nearest") return PanelMode::Nearest;
  if (name == "per_class") return PanelMode::PerClass;
  return std::nullopt;
}

std::vector<SimilarityRecord> prototype_panel(const AtlasSnapshot& snap, std::string_view sample_id, PanelMode mode,
                                              int k, std::optional<ClassLabel> target) {
  const auto idx = snap.find(sample_id);
  if (!idx) throw std::out_of_range("unknown sample id " + std::string(sample_id));
  const SnapshotSample& s = snap.samples[*idx];
  const PrototypeModel layer = snap.prototype_layer();
  if (mode == PanelMode::PerClass) return explain_per_class_feature(s.id, s.latent, layer);
  return explain_feature(s.id, s.latent, layer, target, k);
}

}  // namespace protoeeg
