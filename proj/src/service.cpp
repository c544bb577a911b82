#include "protoeeg/service.hpp"

#include <charconv>
#include <cmath>

#include "httplib.h"
#include "protoeeg/atlas.hpp"

namespace protoeeg {

using nlohmann::json;

namespace {

ApiResponse error(int status, const std::string& message) {
  return {status, {{"error", {{"status", status}, {"message", message}}}}};
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json class_vector_json(const Eigen::VectorXd& v) {
  json o = json::object();
  for (int c = 0; c < kNumClasses; ++c) o[std::string(kClassNames[c])] = v[c];
  return o;
}

json votes_json(const VoteDistribution& v) {
  json o = json::object();
  for (int c = 0; c < kNumClasses; ++c) o[std::string(kClassNames[c])] = v.counts[c];
  return o;
}

std::optional<long> parse_int(const std::string& s) {
  long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

bool flag_set(const std::map<std::string, std::string>& q, const std::string& key) {
  const auto it = q.find(key);
  return it != q.end() && (it->second == "1" || it->second == "true" || it->second.empty());
}

json prototype_json(const SnapshotPrototype& p, const AtlasSnapshot& s) {
  json o = {{"index", p.index},
            {"kind", p.info.kind == PrototypeKind::Single ? "single" : "dual"},
            {"classes", p.info.kind == PrototypeKind::Single
                            ? json::array({class_name(p.info.class_a)})
                            : json::array({class_name(p.info.class_a), class_name(p.info.class_b)})},
            {"class_connections", class_vector_json(p.class_connections)}};
  const std::string src = p.info.source_sample_id.value_or("");
  o["source_sample_id"] = src;
  if (const auto i = s.find(src)) {
    const SnapshotSample& x = s.samples[*i];
    o["source"] = {{"id", x.id},         {"split", split_name(x.split)},
                   {"on_map", x.on_map}, {"x", x.x},
                   {"y", x.y},           {"majority", class_name(x.majority)},
                   {"prediction", class_name(x.predicted())},
                   {"url", "/api/sample/" + x.id}};
  }
  return o;
}

}  // namespace

json scheme_value(const SnapshotSample& s, const std::string& id) {
  if (id == "majority") return class_name(s.majority);
  if (id == "prediction") return class_name(s.predicted());
  if (id == "uncertainty") return s.entropy();
  for (int c = 0; c < kNumClasses; ++c)
    if (id == color_schemes()[3 + c].id) return s.probabilities[c];
  throw std::invalid_argument("unknown color scheme " + id);
}

SnapshotApi::SnapshotApi(std::shared_ptr<const AtlasSnapshot> snapshot, std::shared_ptr<const Dataset> dataset)
    : snapshot_(std::move(snapshot)), dataset_(std::move(dataset)) {
  if (!snapshot_) throw std::invalid_argument("SnapshotApi: null snapshot");
  map_samples_ = snapshot_->map_samples();
  map_coords_ = snapshot_->map_coordinates();
  if (map_coords_.rows() >= 2) default_epsilon_ = default_path_epsilon(map_coords_);
}

ApiResponse SnapshotApi::get(const std::string& path, const std::map<std::string, std::string>& query) const {
  static const std::string kSample = "/api/sample/";
  if (path == "/api/meta") return meta();
  if (path == "/api/samples") return samples();
  if (path == "/api/prototypes") return prototypes();
  if (path == "/api/path") return path_(query);
  if (path.rfind(kSample, 0) == 0) {
    std::string rest = path.substr(kSample.size());
    static const std::string kProto = "/prototypes";
    if (rest.size() > kProto.size() && rest.compare(rest.size() - kProto.size(), kProto.size(), kProto) == 0)
      return prototypes_of(rest.substr(0, rest.size() - kProto.size()), query);
    if (!rest.empty() && rest.find('/') == std::string::npos) return sample(rest, query);
  }
  return error(404, "no such endpoint: " + path);
}

ApiResponse SnapshotApi::meta() const {
  const AtlasSnapshot& s = *snapshot_;
  json schemes = json::array();
  for (const auto& c : color_schemes())
    schemes.push_back({{"id", c.id}, {"name", c.name}, {"kind", c.kind}, {"description", c.description}});
  return {200,
          {{"hash", s.hash},
           {"class_names", kClassNames},
           {"schemes", schemes},
           {"scheme_notes", "Seizure burden is not offered: it needs longitudinal recordings, which this corpus lacks."},
           {"sample_count", s.map_size()},
           {"prototype_count", s.prototypes.size()},
           {"channels", s.channels},
           {"sample_rate", s.sample_rate},
           {"duration_seconds", kSampleDurationSeconds},
           {"waveform_columns", s.waveform_columns},
           {"embedding", s.config.embedding.to_json()},
           {"default_path_epsilon", default_epsilon_},
           {"model_config_hash", s.model_config_hash},
           {"full_resolution_available", dataset_ != nullptr}}};
}

ApiResponse SnapshotApi::samples() const {
  json arr = json::array();
  for (const auto& s : snapshot_->samples) {
    if (!s.on_map) continue;
    json schemes = json::object();
    for (const auto& c : color_schemes()) schemes[c.id] = scheme_value(s, c.id);
    arr.push_back({{"id", s.id},
                   {"x", s.x},
                   {"y", s.y},
                   {"majority", class_name(s.majority)},
                   {"prediction", class_name(s.predicted())},
                   {"schemes", std::move(schemes)}});
  }
  return {200, std::move(arr)};
}

ApiResponse SnapshotApi::sample(const std::string& id, const std::map<std::string, std::string>& query) const {
  const auto idx = snapshot_->find(id);
  if (!idx) return error(404, "unknown sample id " + id);
  const SnapshotSample& s = snapshot_->samples[*idx];
  json o = {{"id", s.id},
            {"patient_id", s.patient_id},
            {"split", split_name(s.split)},
            {"on_map", s.on_map},
            {"x", s.x},
            {"y", s.y},
            {"votes", votes_json(s.votes)},
            {"majority", class_name(s.majority)},
            {"prediction", class_name(s.predicted())},
            {"probabilities", class_vector_json(s.probabilities)},
            {"logits", class_vector_json(s.logits)},
            {"uncertainty", s.entropy()}};
  if (s.blend)
    o["blend"] = {{"pattern_a", class_name(s.blend->pattern_a)},
                  {"pattern_b", class_name(s.blend->pattern_b)},
                  {"beta", s.blend->beta},
                  {"bridge", s.blend->bridge}};
  const int cols = snapshot_->waveform_columns;
  json mins = json::array(), maxs = json::array();
  for (int c = 0; c < snapshot_->channels; ++c) {
    mins.push_back(std::vector<float>(s.wave_min.begin() + std::size_t(c) * cols,
                                      s.wave_min.begin() + std::size_t(c + 1) * cols));
    maxs.push_back(std::vector<float>(s.wave_max.begin() + std::size_t(c) * cols,
                                      s.wave_max.begin() + std::size_t(c + 1) * cols));
  }
  o["waveform"] = {{"channels", snapshot_->channels},
                   {"columns", cols},
                   {"seconds_per_column", kSampleDurationSeconds / cols},
                   {"min", std::move(mins)},
                   {"max", std::move(maxs)}};
  const Spectrogram& sp = s.spectrogram;
  json rows = json::array();
  for (int b = 0; b < sp.bins; ++b)
    rows.push_back(std::vector<double>(sp.power_db.begin() + std::size_t(b) * sp.frames,
                                       sp.power_db.begin() + std::size_t(b + 1) * sp.frames));
  o["spectrogram"] = {{"bins", sp.bins},
                      {"frames", sp.frames},
                      {"freq_resolution", sp.freq_resolution},
                      {"time_resolution", sp.time_resolution},
                      {"floor_db", sp.floor_value_db},
                      {"power_db", std::move(rows)}};
  if (flag_set(query, "latent")) o["latent"] = vector_json(s.latent);
  if (flag_set(query, "full")) {
    if (!dataset_) return error(400, "full-resolution waveforms need the service started with a dataset");
    std::size_t di;
    try {
      di = dataset_->index_of(id);
    } catch (const std::out_of_range&) {
      return error(404, "sample " + id + " is not in the attached dataset");
    }
    const EegSample& e = dataset_->samples[di];
    json full = json::array();
    for (int c = 0; c < e.channels; ++c) {
      const auto ch = e.channel(c);
      full.push_back(std::vector<float>(ch.begin(), ch.end()));
    }
    o["waveform_full"] = {{"sample_rate", e.sample_rate}, {"signal", std::move(full)}};
  }
  return {200, std::move(o)};
}

ApiResponse SnapshotApi::prototypes_of(const std::string& id, const std::map<std::string, std::string>& query) const {
  if (!snapshot_->find(id)) return error(404, "unknown sample id " + id);
  PanelMode mode = PanelMode::Nearest;
  if (const auto it = query.find("mode"); it != query.end()) {
    const auto m = parse_panel_mode(it->second);
    if (!m) return error(400, "mode must be nearest or per_class");
    mode = *m;
  }
  int k = 3;
  if (const auto it = query.find("k"); it != query.end()) {
    const auto v = parse_int(it->second);
    if (!v || *v < 1 || *v > static_cast<long>(snapshot_->prototypes.size()))
      return error(400, "k must be an integer in [1, " + std::to_string(snapshot_->prototypes.size()) + "]");
    k = static_cast<int>(*v);
  }
  std::optional<ClassLabel> target;
  if (const auto it = query.find("target"); it != query.end()) {
    target = parse_class(it->second);
    if (!target) return error(400, "unknown target class " + it->second);
  }
  const auto records = prototype_panel(*snapshot_, id, mode, k, target);
  json arr = json::array();
  for (const auto& r : records)
    arr.push_back({{"sample_id", r.sample_id},
                   {"prototype_index", r.prototype_index},
                   {"designated_class", class_name(r.designated_class)},
                   {"sim", r.sim},
                   {"aff", r.affinity},
                   {"score", r.score},
                   {"prototype", prototype_json(snapshot_->prototypes[r.prototype_index], *snapshot_)}});
  return {200, {{"sample_id", id}, {"mode", mode == PanelMode::Nearest ? "nearest" : "per_class"}, {"records", arr}}};
}

ApiResponse SnapshotApi::prototypes() const {
  json arr = json::array();
  for (const auto& p : snapshot_->prototypes) arr.push_back(prototype_json(p, *snapshot_));
  return {200, std::move(arr)};
}

ApiResponse SnapshotApi::path_(const std::map<std::string, std::string>& query) const {
  const auto ia = query.find("a");
  const auto ib = query.find("b");
  if (ia == query.end() || ib == query.end()) return error(400, "path needs class parameters a and b");
  const auto a = parse_class(ia->second);
  const auto b = parse_class(ib->second);
  if (!a || !b) return error(400, "unknown class name");
  if (*a == *b) return error(400, "a and b must differ");
  double eps = default_epsilon_;
  if (const auto it = query.find("epsilon"); it != query.end()) {
    const auto v = parse_double(it->second);
    if (!v || *v <= 0.0) return error(400, "epsilon must be a positive number");
    eps = *v;
  }
  try {
    const ContinuumPath p = continuum_path(map_coords_, map_samples_, *a, *b, eps);
    json o = p.to_json();
    json pts = json::array();
    for (auto i : p.indices) pts.push_back({map_coords_(static_cast<Eigen::Index>(i), 0),
                                            map_coords_(static_cast<Eigen::Index>(i), 1)});
    o["points"] = std::move(pts);
    return {200, std::move(o)};
  } catch (const NoPathError& e) {
    ApiResponse r = error(422, e.what());
    r.body["error"]["epsilon"] = e.epsilon;
    r.body["error"]["minimal_epsilon"] = e.minimal_epsilon;
    return r;
  } catch (const std::invalid_argument& e) {
    return error(404, e.what());
  }
}

SnapshotServer::SnapshotServer(std::shared_ptr<const SnapshotApi> api)
    : api_(std::move(api)), server_(std::make_unique<httplib::Server>()) {
  auto api_ref = api_;
  server_->Get(R"(/api/.*)", [api_ref](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    ApiResponse r;
    try {
      r = api_ref->get(req.path, query);
    } catch (const std::exception& e) {
      r = error(500, e.what());
    }
    res.status = r.status;
    res.set_header("X-Snapshot-Hash", api_ref->hash());
    res.set_header("ETag", "\"" + api_ref->hash() + "\"");
    res.set_content(r.body.dump(), "application/json");
  });
  server_->set_error_handler([api_ref](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    res.set_header("X-Snapshot-Hash", api_ref->hash());
    res.set_content(error(res.status, "no such endpoint: " + req.path).body.dump(), "application/json");
  });
}

SnapshotServer::~SnapshotServer() = default;

int SnapshotServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p <= 0) throw BindError("cannot bind " + host + " to any port");
    return p;
  }
  if (!server_->bind_to_port(host, port)) throw BindError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void SnapshotServer::run() { server_->listen_after_bind(); }

void SnapshotServer::stop() { server_->stop(); }

}  // namespace protoeeg
