#include "protoeeg/signal_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "protoeeg/binary_io.hpp"
#include "protoeeg/hashing.hpp"

namespace protoeeg {

using nlohmann::json;

std::string_view class_name(ClassLabel c) { return kClassNames.at(index_of(c)); }

std::optional<ClassLabel> parse_class(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i)
    if (kClassNames[i] == name) return label_at(i);
  return std::nullopt;
}

int VoteDistribution::total() const { return std::accumulate(counts.begin(), counts.end(), 0); }

ClassVector VoteDistribution::normalized() const {
  ClassVector p{};
  const int t = total();
  if (t <= 0) return p;
  for (int c = 0; c < kNumClasses; ++c) p[c] = double(counts[c]) / t;
  return p;
}

ClassLabel VoteDistribution::majority() const {
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c)
    if (counts[c] > counts[best]) best = c;
  return label_at(best);
}

std::string_view split_name(Split s) { return s == Split::Train ? "train" : "test"; }

MissingSignalFile::MissingSignalFile(const std::string& id, const std::string& path)
    : DatasetError("sample " + id + ": signal file missing: " + path), sample_id(id) {}

SignalLengthMismatch::SignalLengthMismatch(const std::string& id, std::uintmax_t expected,
                                           std::uintmax_t actual)
    : DatasetError("sample " + id + ": signal length mismatch: expected " + std::to_string(expected) +
                   " bytes, found " + std::to_string(actual)),
      sample_id(id) {}

UnsupportedSchema::UnsupportedSchema(int version)
    : DatasetError("unsupported manifest schema version " + std::to_string(version)) {}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == s) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::projection_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].prototype_candidate) out.push_back(i);
  return out;
}

std::size_t Dataset::index_of(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) throw std::out_of_range("unknown sample id: " + std::string(id));
  return it->second;
}

void Dataset::rebuild_index() {
  by_id_.clear();
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!by_id_.emplace(samples[i].id, i).second)
      throw ManifestError("duplicate sample id: " + samples[i].id);
}

ClassVector vote_probability_mean(const BlendInfo& blend, double rater_floor) {
  ClassVector w{};
  w[index_of(blend.pattern_a)] += 1.0 - blend.beta;
  w[index_of(blend.pattern_b)] += blend.beta;
  for (double& v : w) v = (1.0 - rater_floor) * v + rater_floor / kNumClasses;
  return w;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct PatientTraits {
  std::string id;
  double gain = 1.0;
  double background = 1.0;
  int side = 0;
  Split split = Split::Train;
};

void validate(const GeneratorConfig& cfg) {
  for (int c = 0; c < kNumClasses; ++c)
    if (cfg.per_class[c] <= 0)
      throw ConfigError("per-class count for " + std::string(kClassNames[c]) + " must be positive");
  if (cfg.patients <= 0) throw ConfigError("patient count must be positive");
  if (cfg.patients < 2) throw ConfigError("need at least 2 patients for a train/test partition");
  if (cfg.channels <= 0) throw ConfigError("channel count must be positive");
  if (cfg.channels < 2 && (cfg.per_class[index_of(ClassLabel::LPD)] > 0 ||
                           cfg.per_class[index_of(ClassLabel::LRDA)] > 0))
    throw ConfigError("lateralized classes need at least 2 channels");
  if (cfg.sample_rate <= 0) throw ConfigError("sample rate must be positive");
  if (cfg.blend_fraction < 0.0 || cfg.blend_fraction > 1.0)
    throw ConfigError("blend fraction must lie in [0, 1]");
  if (cfg.bridges_per_pair < 0) throw ConfigError("bridges per pair must be non-negative");
  if (cfg.min_votes < 1 || cfg.max_votes < cfg.min_votes)
    throw ConfigError("vote range must satisfy 1 <= min <= max");
  if (!(cfg.rater_concentration > 0.0)) throw ConfigError("rater concentration must be positive");
  if (cfg.rater_floor < 0.0 || cfg.rater_floor > 1.0) throw ConfigError("rater floor must lie in [0, 1]");
  if (cfg.test_patient_fraction <= 0.0 || cfg.test_patient_fraction >= 1.0)
    throw ConfigError("test patient fraction must lie in (0, 1)");
}

// Pink (1/f) background noise: Kellet's economy filter, rescaled to the target RMS.
std::vector<double> pink_noise(int n, double rms, std::mt19937_64& rng) {
  std::normal_distribution<double> white(0.0, 1.0);
  std::vector<double> out(n);
  double b0 = 0, b1 = 0, b2 = 0;
  for (int i = 0; i < n; ++i) {
    const double w = white(rng);
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    out[i] = b0 + b1 + b2 + w * 0.1848;
  }
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / n;
  double ss = 0;
  for (double& v : out) {
    v -= mean;
    ss += v * v;
  }
  const double scale = ss > 0 ? rms / std::sqrt(ss / n) : 0.0;
  for (double& v : out) v *= scale;
  return out;
}

// Channel weights for a spatial distribution: generalized patterns cover every channel,
// lateralized ones one hemisphere (the first or second channel half) with slight leakage.
std::vector<double> spatial_weights(int channels, bool lateralized, int side, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(0.85, 1.15);
  std::vector<double> w(channels);
  const int half = channels / 2;
  for (int c = 0; c < channels; ++c) {
    double base = 1.0;
    if (lateralized) {
      const bool in_side = side == 0 ? c < half : c >= half;
      base = in_side ? 1.0 : 0.08;
    }
    w[c] = base * jitter(rng);
  }
  return w;
}

using Pattern = std::vector<double>;  // channels x timesteps, row-major

Pattern render_pattern(ClassLabel cls, int channels, int fs, int side, std::mt19937_64& rng) {
  const int n = static_cast<int>(fs * kSampleDurationSeconds);
  Pattern p(std::size_t(channels) * n, 0.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  const double dt = 1.0 / fs;

  switch (cls) {
    case ClassLabel::Other: {
      // Intermittent 8-12 Hz bursts, strongest over the posterior channels.
      const int bursts = 5 + static_cast<int>(u01(rng) * 6);
      std::vector<double> w(channels);
      for (int c = 0; c < channels; ++c) {
        const int pos = c % std::max(1, channels / 2);
        w[c] = 0.5 + 0.5 * double(pos) / std::max(1, channels / 2 - 1);
      }
      for (int b = 0; b < bursts; ++b) {
        const double f = uniform(8.0, 12.0);
        const double len = uniform(1.0, 3.0);
        const double start = uniform(0.0, kSampleDurationSeconds - len);
        const double amp = uniform(15.0, 25.0);
        const double phase = uniform(0.0, kTwoPi);
        const int i0 = static_cast<int>(start * fs);
        const int i1 = std::min(n, static_cast<int>((start + len) * fs));
        for (int i = i0; i < i1; ++i) {
          const double t = i * dt;
          const double taper = 0.5 - 0.5 * std::cos(kTwoPi * (t - start) / len);
          const double v = amp * taper * std::sin(kTwoPi * f * t + phase);
          for (int c = 0; c < channels; ++c) p[std::size_t(c) * n + i] += w[c] * v;
        }
      }
      break;
    }
    case ClassLabel::GRDA:
    case ClassLabel::LRDA: {
      const double f = uniform(1.0, 3.0);
      const double amp = uniform(40.0, 70.0);
      const double phase = uniform(0.0, kTwoPi);
      const double mod_f = uniform(0.02, 0.1);
      const auto w = spatial_weights(channels, cls == ClassLabel::LRDA, side, rng);
      std::vector<double> lag(channels);
      for (double& l : lag) l = uniform(-0.15, 0.15);
      for (int c = 0; c < channels; ++c)
        for (int i = 0; i < n; ++i) {
          const double t = i * dt;
          const double env = 1.0 + 0.2 * std::sin(kTwoPi * mod_f * t);
          p[std::size_t(c) * n + i] = w[c] * amp * env * std::sin(kTwoPi * f * t + phase + lag[c]);
        }
      break;
    }
    case ClassLabel::GPD:
    case ClassLabel::LPD: {
      // Periodic sharp discharges: fast negative spike followed by a slower positive wave.
      const double rate = uniform(0.5, 2.0);
      const double amp = uniform(60.0, 100.0);
      const auto w = spatial_weights(channels, cls == ClassLabel::LPD, side, rng);
      std::vector<double> shape;
      const int span = static_cast<int>(0.35 * fs);
      for (int k = 0; k < span; ++k) {
        const double t = k * dt;
        const double spike = -std::exp(-0.5 * std::pow((t - 0.04) / 0.015, 2));
        const double wave = 0.45 * std::exp(-0.5 * std::pow((t - 0.16) / 0.05, 2));
        shape.push_back(spike + wave);
      }
      double t = uniform(0.0, 1.0 / rate);
      while (t < kSampleDurationSeconds) {
        const int i0 = static_cast<int>(t * fs);
        const double a = amp * uniform(0.85, 1.15);
        for (int k = 0; k < span && i0 + k < n; ++k)
          for (int c = 0; c < channels; ++c) p[std::size_t(c) * n + i0 + k] += w[c] * a * shape[k];
        t += (1.0 / rate) * uniform(0.95, 1.05);
      }
      break;
    }
    case ClassLabel::Seizure: {
      // Evolving rhythm: linear frequency sweep with growing amplitude and sharpened waveform.
      const double f0 = uniform(2.0, 3.0);
      const double f1 = uniform(5.0, 7.0);
      const double a0 = uniform(20.0, 35.0);
      const double a1 = uniform(90.0, 130.0);
      const double phase = uniform(0.0, kTwoPi);
      const auto w = spatial_weights(channels, false, side, rng);
      const double dur = kSampleDurationSeconds;
      for (int i = 0; i < n; ++i) {
        const double t = i * dt;
        const double phi = kTwoPi * (f0 * t + 0.5 * (f1 - f0) * t * t / dur) + phase;
        const double amp = a0 + (a1 - a0) * t / dur;
        const double v = amp * (std::sin(phi) + 0.4 * std::sin(2.0 * phi + 1.0));
        for (int c = 0; c < channels; ++c) p[std::size_t(c) * n + i] = w[c] * v;
      }
      break;
    }
  }
  return p;
}

VoteDistribution draw_votes(const BlendInfo& blend, const GeneratorConfig& cfg, std::mt19937_64& rng) {
  const ClassVector mean = vote_probability_mean(blend, cfg.rater_floor);
  ClassVector prob{};
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    std::gamma_distribution<double> g(cfg.rater_concentration * mean[c], 1.0);
    prob[c] = g(rng);
    sum += prob[c];
  }
  if (!(sum > 0.0)) prob = mean, sum = 1.0;
  for (double& v : prob) v /= sum;

  std::uniform_int_distribution<int> total_dist(cfg.min_votes, cfg.max_votes);
  const int total = total_dist(rng);
  VoteDistribution votes;
  int remaining = total;
  double mass_left = 1.0;
  for (int c = 0; c < kNumClasses - 1 && remaining > 0; ++c) {
    const double q = mass_left > 0 ? std::clamp(prob[c] / mass_left, 0.0, 1.0) : 0.0;
    std::binomial_distribution<int> bin(remaining, q);
    votes.counts[c] = bin(rng);
    remaining -= votes.counts[c];
    mass_left -= prob[c];
  }
  votes.counts[kNumClasses - 1] += remaining;
  return votes;
}

std::string pad_id(char prefix, std::size_t i, int width) {
  std::ostringstream os;
  os << prefix;
  os.width(width);
  os.fill('0');
  os << i;
  return os.str();
}

}  // namespace

Dataset generate_dataset(const GeneratorConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<PatientTraits> patients(cfg.patients);
  for (int i = 0; i < cfg.patients; ++i) {
    patients[i].id = pad_id('p', i, 4);
    patients[i].gain = 0.7 + 0.6 * u01(rng);
    patients[i].background = 0.8 + 0.4 * u01(rng);
    patients[i].side = u01(rng) < 0.5 ? 0 : 1;
  }
  std::vector<int> order(cfg.patients);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_test = std::clamp(static_cast<int>(std::lround(cfg.test_patient_fraction * cfg.patients)), 1,
                                cfg.patients - 1);
  for (int k = 0; k < cfg.patients; ++k) patients[order[k]].split = k < n_test ? Split::Test : Split::Train;

  std::vector<BlendInfo> plan;
  for (int c = 0; c < kNumClasses; ++c) {
    const int n_blend = static_cast<int>(std::lround(cfg.blend_fraction * cfg.per_class[c]));
    for (int k = 0; k < cfg.per_class[c]; ++k) {
      BlendInfo b{label_at(c), label_at(c), 0.0, false};
      if (k < n_blend) {
        std::uniform_int_distribution<int> other(0, kNumClasses - 2);
        int o = other(rng);
        if (o >= c) ++o;
        b.pattern_b = label_at(o);
        b.beta = u01(rng);
      }
      plan.push_back(b);
    }
  }
  for (int a = 0; a < kNumClasses; ++a)
    for (int b = a + 1; b < kNumClasses; ++b)
      for (int k = 0; k < cfg.bridges_per_pair; ++k) {
        const double beta = cfg.bridges_per_pair == 1 ? 0.5 : double(k) / (cfg.bridges_per_pair - 1);
        plan.push_back({label_at(a), label_at(b), beta, true});
      }

  Dataset ds;
  ds.channels = cfg.channels;
  ds.sample_rate = cfg.sample_rate;
  ds.generator = cfg;
  ds.seed = seed;
  const int n = ds.timesteps();
  const int id_width = plan.size() > 99999 ? 7 : 5;
  std::uniform_int_distribution<int> pick_patient(0, cfg.patients - 1);

  for (std::size_t i = 0; i < plan.size(); ++i) {
    const BlendInfo& blend = plan[i];
    const PatientTraits& pt = patients[pick_patient(rng)];
    EegSample s;
    s.id = pad_id('s', i, id_width);
    s.patient_id = pt.id;
    s.channels = cfg.channels;
    s.sample_rate = cfg.sample_rate;
    s.split = pt.split;
    s.blend = blend;

    const Pattern pa = render_pattern(blend.pattern_a, cfg.channels, cfg.sample_rate, pt.side, rng);
    Pattern pb;
    if (blend.pattern_b != blend.pattern_a || blend.beta != 0.0)
      pb = render_pattern(blend.pattern_b, cfg.channels, cfg.sample_rate, pt.side, rng);
    s.signal.resize(std::size_t(cfg.channels) * n);
    for (int c = 0; c < cfg.channels; ++c) {
      const auto bg = pink_noise(n, 10.0 * pt.background, rng);
      for (int t = 0; t < n; ++t) {
        const std::size_t k = std::size_t(c) * n + t;
        double v = (1.0 - blend.beta) * pa[k];
        if (!pb.empty()) v += blend.beta * pb[k];
        s.signal[k] = static_cast<float>(bg[t] + pt.gain * v);
      }
    }
    s.votes = draw_votes(blend, cfg, rng);
    s.prototype_candidate = s.split == Split::Train && s.votes.total() >= 20;
    ds.samples.push_back(std::move(s));
  }
  ds.rebuild_index();
  return ds;
}

namespace {

json generator_to_json(const GeneratorConfig& g) {
  return {{"per_class", g.per_class},
          {"patients", g.patients},
          {"blend_fraction", g.blend_fraction},
          {"bridges_per_pair", g.bridges_per_pair},
          {"channels", g.channels},
          {"sample_rate", g.sample_rate},
          {"rater_concentration", g.rater_concentration},
          {"rater_floor", g.rater_floor},
          {"min_votes", g.min_votes},
          {"max_votes", g.max_votes},
          {"test_patient_fraction", g.test_patient_fraction}};
}

GeneratorConfig generator_from_json(const json& j) {
  GeneratorConfig g;
  g.per_class = j.at("per_class").get<std::array<int, kNumClasses>>();
  g.patients = j.at("patients");
  g.blend_fraction = j.at("blend_fraction");
  g.bridges_per_pair = j.at("bridges_per_pair");
  g.channels = j.at("channels");
  g.sample_rate = j.at("sample_rate");
  g.rater_concentration = j.at("rater_concentration");
  g.rater_floor = j.at("rater_floor");
  g.min_votes = j.at("min_votes");
  g.max_votes = j.at("max_votes");
  g.test_patient_fraction = j.at("test_patient_fraction");
  return g;
}

std::string signal_rel_path(const EegSample& s) { return "signals/" + s.id + ".f32"; }

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "signals");
  json samples = json::array();
  for (const auto& s : ds.samples) {
    const std::string rel = signal_rel_path(s);
    {
      std::ofstream out(dir / rel, std::ios::binary | std::ios::trunc);
      if (!out) throw DatasetError("cannot write " + (dir / rel).string());
      write_f32_le(out, s.signal);
    }
    json rec = {{"id", s.id},
                {"patient_id", s.patient_id},
                {"votes", s.votes.counts},
                {"majority", class_name(s.majority())},
                {"split", split_name(s.split)},
                {"prototype_candidate", s.prototype_candidate},
                {"signal", rel},
                {"bytes", s.signal.size() * sizeof(float)}};
    if (s.blend)
      rec["blend"] = {{"pattern_a", class_name(s.blend->pattern_a)},
                      {"pattern_b", class_name(s.blend->pattern_b)},
                      {"beta", s.blend->beta},
                      {"bridge", s.blend->bridge}};
    samples.push_back(std::move(rec));
  }
  json manifest = {{"schema_version", Dataset::kSchemaVersion},
                   {"channels", ds.channels},
                   {"sample_rate", ds.sample_rate},
                   {"duration_s", kSampleDurationSeconds},
                   {"class_names", kClassNames},
                   {"samples", std::move(samples)}};
  if (ds.generator) manifest["generator"] = generator_to_json(*ds.generator);
  if (ds.seed) manifest["seed"] = *ds.seed;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(1) << '\n';
  if (!out) throw DatasetError("cannot write manifest in " + dir.string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ManifestError("manifest not found in " + dir.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestError(std::string("manifest parse error: ") + e.what());
  }
  const int version = m.value("schema_version", -1);
  if (version != Dataset::kSchemaVersion) throw UnsupportedSchema(version);

  Dataset ds;
  try {
    ds.channels = m.at("channels");
    ds.sample_rate = m.at("sample_rate");
    if (m.contains("generator")) ds.generator = generator_from_json(m["generator"]);
    if (m.contains("seed")) ds.seed = m["seed"].get<std::uint64_t>();
    const std::size_t n_values = std::size_t(ds.channels) * ds.timesteps();
    for (const auto& rec : m.at("samples")) {
      EegSample s;
      s.id = rec.at("id");
      s.patient_id = rec.at("patient_id");
      s.channels = ds.channels;
      s.sample_rate = ds.sample_rate;
      s.votes.counts = rec.at("votes").get<std::array<int, kNumClasses>>();
      s.split = rec.at("split") == "test" ? Split::Test : Split::Train;
      s.prototype_candidate = rec.at("prototype_candidate");
      if (rec.contains("blend")) {
        const auto& b = rec["blend"];
        s.blend = BlendInfo{*parse_class(b.at("pattern_a").get<std::string>()),
                            *parse_class(b.at("pattern_b").get<std::string>()), b.at("beta"), b.at("bridge")};
      }
      const fs::path path = dir / rec.at("signal").get<std::string>();
      if (!fs::exists(path)) throw MissingSignalFile(s.id, path.string());
      const std::uintmax_t expected = n_values * sizeof(float);
      const std::uintmax_t declared = rec.at("bytes");
      const std::uintmax_t actual = fs::file_size(path);
      if (declared != expected || actual != expected) throw SignalLengthMismatch(s.id, expected, actual);
      s.signal.resize(n_values);
      std::ifstream sig(path, std::ios::binary);
      read_f32_le(sig, s.signal);
      ds.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  }
  ds.rebuild_index();
  return ds;
}

std::string dataset_hash(const std::filesystem::path& dir) {
  Sha256 h;
  h.update_file(dir / "manifest.json");
  std::ifstream in(dir / "manifest.json");
  const json m = json::parse(in);
  for (const auto& rec : m.at("samples")) h.update_file(dir / rec.at("signal").get<std::string>());
  return h.hex_digest();
}

bool check_invariants(const Dataset& ds, std::string* why) {
  auto fail = [&](std::string msg) {
    if (why) *why = std::move(msg);
    return false;
  };
  std::set<std::string> ids;
  std::set<std::string> train_patients, test_patients;
  for (const auto& s : ds.samples) {
    if (!ids.insert(s.id).second) return fail("duplicate id " + s.id);
    if (s.channels != ds.channels) return fail(s.id + ": channel count differs from dataset");
    if (s.timesteps() != ds.timesteps() || s.signal.size() != std::size_t(s.channels) * ds.timesteps())
      return fail(s.id + ": timestep count is not sample_rate x 50 s");
    for (float v : s.signal)
      if (!std::isfinite(v)) return fail(s.id + ": non-finite signal value");
    const bool candidate = s.split == Split::Train && s.votes.total() >= 20;
    if (candidate != s.prototype_candidate) return fail(s.id + ": prototype candidate flag violates rule");
    (s.split == Split::Train ? train_patients : test_patients).insert(s.patient_id);
  }
  for (const auto& p : train_patients)
    if (test_patients.count(p)) return fail("patient " + p + " spans train and test");
  return true;
}

}  // namespace protoeeg
