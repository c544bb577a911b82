// Runs every primary acceptance criterion and prints one PASS/FAIL line per criterion.
// Usage: acceptance [--only 1,3,10]

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "protoeeg/atlas.hpp"
#include "protoeeg/cli.hpp"
#include "protoeeg/evaluation.hpp"
#include "protoeeg/hashing.hpp"
#include "protoeeg/metrics.hpp"
#include "protoeeg/snapshot.hpp"
#include "protoeeg/trainer.hpp"
#include "support.hpp"

using namespace protoeeg;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int precision = 6) {
  std::ostringstream o;
  o.precision(precision);
  o << v;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Full-scale training shared by the criteria that need a trained model.
struct FullRun {
  Dataset dataset;
  PretrainResult pretrained;
  TrainResult result;
  double train_seconds = 0.0;
};

FullRun& full_run() {
  static std::optional<FullRun> run;
  if (!run) {
    run.emplace();
    run->dataset = generate_dataset(GeneratorConfig{}, 0);
    const TrainConfig cfg;
    const auto t0 = std::chrono::steady_clock::now();
    run->pretrained = pretrain_extractor(run->dataset, cfg);
    run->result = train(run->dataset, cfg, run->pretrained, [&](const PrototypeModel&, const TrainingHistory& h, bool) {
      const auto& e = h.epochs.back();
      std::fprintf(stderr, "  epoch %d %s loss %.4f (%.0f s)\n", e.epoch, std::string(stage_name(e.stage)).c_str(),
                   e.loss.total, seconds_since(t0));
    });
    run->train_seconds = seconds_since(t0);
  }
  return *run;
}

std::vector<ScoredSample> test_scores(const PrototypeModel& m, const Dataset& ds) {
  const auto idx = ds.indices(Split::Test);
  return score_samples(m, ds, idx);
}

Verdict criterion_1() {
  FullRun& r = full_run();
  const auto scored = test_scores(r.result.model, r.dataset);
  double worst = 1.0;
  std::ostringstream d;
  d << "train " << num(r.train_seconds, 4) << " s; AUROC";
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<double> s;
    std::vector<int> y;
    for (const auto& x : scored) {
      s.push_back(x.scores[c]);
      y.push_back(index_of(x.majority) == c);
    }
    const double a = auroc(s, y);
    worst = std::min(worst, a);
    d << " " << kClassNames[c] << "=" << num(a, 4);
  }
  return {r.train_seconds < 1800.0 && worst >= 0.90, d.str()};
}

Verdict criterion_2() {
  FullRun& r = full_run();
  const BaselineResult base = train_baseline(r.dataset, TrainConfig{}, r.pretrained);
  const auto idx = r.dataset.indices(Split::Test);
  EvalConfig cfg;
  cfg.n_boot = 1000;
  cfg.permutation_rounds = 10000;
  cfg.units = {BootstrapUnit::Sample};
  const MetricsReport report =
      build_report({{"prototype", score_samples(r.result.model, r.dataset, idx)},
                    {"baseline", score_samples(base.model, r.dataset, idx)}},
                   cfg);
  const auto& proto = report.json["models"][0]["metrics"]["neighborhood_max"]["All"];
  const auto& baseline = report.json["models"][1]["metrics"]["neighborhood_max"]["All"];
  const auto& cmp = report.json["comparison"]["metrics"]["neighborhood_max"]["All"];
  const double pv = proto["value"], bv = baseline["value"];
  const double pm = proto["sample"]["mean"], bm = baseline["sample"]["mean"];
  const double better = cmp["sample"]["percent_better"];
  std::ostringstream d;
  d << "neighborhood-by-max All: prototype " << num(pv) << " (boot mean " << num(pm) << ") vs baseline " << num(bv)
    << " (boot mean " << num(bm) << "); prototype better in " << num(better, 4) << "% of paired draws; sign-flip p "
    << num(cmp["significance_p"].get<double>(), 4);
  return {pv >= bv && pm >= bm, d.str()};
}

Verdict criterion_3() {
  FullRun& r = full_run();
  const PrototypeModel& m = r.result.model;
  auto idx = r.dataset.indices(Split::Test);
  std::mt19937_64 rng(0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(100);
  const FeatureExtractor fx(m.extractor);
  double worst = 0.0;
  for (auto i : idx) {
    const EegSample& s = r.dataset.samples[i];
    const FeatureVector f = fx.extract(s);
    const Eigen::VectorXd z = predict_from_feature(f, m).logits;
    for (int c = 0; c < kNumClasses; ++c) {
      double total = 0.0;
      for (const auto& rec : explain_feature(s.id, f, m, label_at(c), m.prototype_count())) total += rec.score;
      worst = std::max(worst, std::abs(total - z[c]) / std::max(std::abs(z[c]), 1e-300));
    }
  }
  return {worst <= 1e-6, "100 samples x 6 classes, worst relative gap " + num(worst, 3)};
}

Verdict criterion_4() {
  FullRun& r = full_run();
  const PrototypeModel& m = r.result.model;
  const FeatureExtractor fx(m.extractor);
  double worst = 0.0;
  int grounded = 0;
  for (int j = 0; j < m.prototype_count(); ++j) {
    if (!m.info[j].source_sample_id) continue;
    ++grounded;
    const FeatureVector f = fx.extract(r.dataset.at(*m.info[j].source_sample_id));
    worst = std::max(worst, std::abs(similarity(f, m.prototypes.row(j).transpose(), m.scale) - 64.0));
  }
  return {grounded == 45 && worst <= 1e-4,
          std::to_string(grounded) + " grounded prototypes, worst |sim - 64| " + num(worst, 3)};
}

Verdict criterion_5() {
  double worst = 0.0, worst_value = 0.0;
  std::string where;
  int checks = 0;
  for (const auto& c : gradcheck::cases())
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto e = gradcheck::check_objective(c, seed);
      worst_value = std::max(worst_value, e.value);
      if (e.worst() > worst) {
        worst = e.worst();
        where = c.name;
      }
      ++checks;
    }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double e = gradcheck::check_extractor(seed);
    if (e > worst) {
      worst = e;
      where = "extractor";
    }
    ++checks;
  }
  return {worst < 1e-4 && worst_value < 1e-10,
          std::to_string(checks) + " checks, worst gradient relative error " + num(worst, 3) + " (" + where +
              "), worst objective gap " + num(worst_value, 3)};
}

Verdict criterion_6() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const auto x = oracle::random_binary_instance(rng);
    worst = std::max(worst, std::abs(auroc(x.scores, x.labels) - oracle::auroc(x.scores, x.labels)));
    worst = std::max(worst, std::abs(auprc(x.scores, x.labels) - oracle::auprc(x.scores, x.labels)));
  }
  const auto c = oracle::delong_case();
  const auto d = delong_test(c.a, c.b, c.labels);
  const double perm = oracle::auroc_permutation_p(c.a, c.b, c.labels, 10000, 1);
  return {worst <= 1e-10 && std::abs(d.p - perm) <= 0.02,
          "worst oracle gap " + num(worst, 3) + "; DeLong p " + num(d.p, 4) + " vs permutation p " + num(perm, 4)};
}

ScoredSample scored(const std::string& id, const std::string& patient, std::array<int, 6> votes,
                    std::vector<double> latent) {
  ScoredSample s;
  s.sample_id = id;
  s.patient_id = patient;
  s.votes.counts = votes;
  s.majority = s.votes.majority();
  s.scores = Eigen::VectorXd::Constant(6, 1.0 / 6.0);
  s.latent = Eigen::Map<Eigen::VectorXd>(latent.data(), Eigen::Index(latent.size()));
  return s;
}

Verdict criterion_7() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  std::vector<ScoredSample> samples;
  for (int i = 0; i < 120; ++i) {
    std::array<int, 6> v{};
    v[rng() % 6] += 5;
    for (int k = 0; k < 5; ++k) ++v[rng() % 6];
    auto s = scored("s" + std::to_string(1000 + i), "p" + std::to_string(i % 30), v, {g(rng), g(rng), g(rng)});
    for (int c = 0; c < 6; ++c) s.scores[c] = std::uniform_real_distribution<>(0, 1)(rng);
    samples.push_back(s);
  }
  const IndexMetric metric = [&](std::span<const std::size_t> idx) {
    std::vector<double> s;
    std::vector<int> y;
    for (auto i : idx) {
      s.push_back(samples[i].scores[0]);
      y.push_back(samples[i].majority == ClassLabel::Other);
    }
    return auroc(s, y);
  };
  bool identical = true;
  double worst = 0.0;
  for (auto unit : {BootstrapUnit::Sample, BootstrapUnit::Patient}) {
    const auto a = bootstrap_ci(metric, samples, 1000, unit, 7);
    const auto b = bootstrap_ci(metric, samples, 1000, unit, 7);
    identical = identical && a.draws == b.draws && a.index_log_sha256 == b.index_log_sha256;
    const double n = double(a.draws.size());
    const double mean = std::accumulate(a.draws.begin(), a.draws.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : a.draws) ss += (x - mean) * (x - mean);
    const double half = 1.96 * std::sqrt(ss / n) / std::sqrt(n);
    worst = std::max({worst, std::abs(a.lo - (mean - half)), std::abs(a.hi - (mean + half))});
  }
  return {identical && worst <= 1e-12, std::string("draws ") + (identical ? "identical" : "differ") +
                                           "; worst CI bound gap " + num(worst, 3)};
}

Verdict criterion_8() {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  std::vector<ScoredSample> uniform, same;
  const std::array<int, 6> counts{5, 3, 1, 1, 0, 10};
  for (int i = 0; i < 30; ++i) {
    uniform.push_back(scored("u" + std::to_string(i), "p", {2, 2, 2, 2, 2, 2}, {g(rng), g(rng)}));
    same.push_back(scored("s" + std::to_string(i), "p", counts, {g(rng), g(rng)}));
  }
  const double u = neighborhood_by_vote(uniform, 10).all;
  double h = 0.0;
  for (int c : counts)
    if (c > 0) h -= (c / 20.0) * std::log(c / 20.0);
  const double s = neighborhood_by_vote(same, 10).all;
  const double u_gap = std::abs(u - 1.791759469228055);
  return {u_gap <= 1e-9 && std::abs(s - h) <= 1e-12,
          "uniform " + num(u, 16) + " (gap " + num(u_gap, 3) + "); identical " + num(s, 16) + " vs H(p) " + num(h, 16)};
}

Verdict criterion_9() {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(45, 60);
  const double zero = orthogonality_loss(eye);
  Eigen::MatrixXd dup = eye;
  dup.row(1) = 3.0 * dup.row(0);
  const double two = orthogonality_loss(dup);
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::MatrixXd p = gradcheck::gaussian(4 + rep % 42, 12, rng);
    worst = std::max(worst, std::abs(orthogonality_loss(p) - oracle::orthogonality_pairwise(p)));
  }
  return {std::abs(zero) <= 1e-12 && std::abs(two - 2.0) <= 1e-12 && worst <= 1e-9,
          "orthonormal " + num(zero, 3) + "; duplicate pair " + num(two, 16) + "; worst form gap " + num(worst, 3)};
}

struct MapResult {
  Eigen::MatrixXd coords;
  Eigen::MatrixXd input;
  std::vector<ScoredSample> samples;
};

// Test split of a seed-1 dataset, scored by the model and embedded in the default space.
MapResult map_of(const PrototypeModel& model, const GeneratorConfig& g) {
  const Dataset ds = generate_dataset(g, 1);
  const EmbeddingConfig cfg;
  MapResult r;
  r.samples = score_samples(model, ds, ds.indices(Split::Test));
  r.input = embedding_input(r.samples, cfg.space);
  r.coords = embed_2d(r.input, cfg, 0);
  return r;
}

Verdict criterion_10() {
  const PrototypeModel& model = full_run().result.model;
  GeneratorConfig bridged;
  bridged.bridges_per_pair = 101;
  GeneratorConfig pure;
  pure.blend_fraction = 0.0;

  const MapResult b = map_of(model, bridged);
  const double eps = default_path_epsilon(b.coords);
  int found = 0;
  for (int i = 0; i < kNumClasses; ++i)
    for (int j = i + 1; j < kNumClasses; ++j) try {
        continuum_path(b.coords, b.samples, label_at(i), label_at(j), eps);
        ++found;
      } catch (const NoPathError&) {
      }
  const double preservation = knn_preservation(b.input, b.coords);

  const MapResult p = map_of(model, pure);
  int failed = 0;
  for (int i = 0; i < kNumClasses; ++i)
    for (int j = i + 1; j < kNumClasses; ++j) try {
        continuum_path(p.coords, p.samples, label_at(i), label_at(j), eps);
      } catch (const NoPathError&) {
        ++failed;
      }
  std::ostringstream d;
  d << "bridged: " << found << "/15 paths at epsilon " << num(eps, 4) << ", k-NN preservation " << num(preservation, 4)
    << "; pure: " << failed << "/15 pairs without a path at the same epsilon (pure-map default "
    << num(default_path_epsilon(p.coords), 4) << ")";
  return {found == 15 && preservation >= 0.6 && failed >= 10, d.str()};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// gen -> train -> eval -> atlas through the command-line entry point into `dir`.
std::map<std::string, std::string> pipeline(const fs::path& dir) {
  auto cli = [&](std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    if (code != 0) throw std::runtime_error("command failed: " + args[0] + ": " + err.str());
    return out.str();
  };
  const std::string data = (dir / "data").string(), model = (dir / "model").string();
  cli({"gen", "--out-dir", data, "--seed", "4", "--per-class", "10", "--patients", "8", "--min-votes", "20",
       "--max-votes", "20"});
  cli({"train", "--dataset", data, "--out-dir", model, "--seed", "4", "--epochs", "6", "--warm-epochs", "2",
       "--joint-epochs", "2", "--last-layer-epochs", "1", "--pretrain-epochs", "2", "--base-width", "8"});
  const std::string ck = model + "/checkpoint.ckpt";
  cli({"eval", "--dataset", data, "--checkpoint", ck, "--out-dir", (dir / "eval").string(), "--seed", "4", "--n-boot",
       "100", "--permutation-rounds", "200"});
  cli({"atlas", "--dataset", data, "--checkpoint", ck, "--out-dir", (dir / "atlas").string(), "--seed", "4",
       "--iterations", "200"});
  return {{"dataset", dataset_hash(data)},
          {"checkpoint", sha256_hex(file_bytes(ck))},
          {"metrics report", sha256_hex(file_bytes(dir / "eval" / "metrics_report.json"))},
          {"snapshot", sha256_hex(file_bytes(dir / "atlas" / "snapshot.atlas"))}};
}

Verdict criterion_11() {
  testing::TempDir tmp;
  const auto a = pipeline(tmp / "a");
  const auto b = pipeline(tmp / "b");
  std::ostringstream d;
  bool same = true;
  for (const auto& [what, hash] : a) {
    same = same && b.at(what) == hash;
    d << what << (b.at(what) == hash ? " identical " : " DIFFERS ") << hash.substr(0, 12) << "; ";
  }
  std::string s = d.str();
  s.resize(s.size() - 2);
  return {same, s};
}

struct Criterion {
  int id;
  std::string name;
  std::function<Verdict()> run;
};

std::set<int> parse_only(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--only") {
      std::stringstream s(argv[i + 1]);
      for (std::string tok; std::getline(s, tok, ',');) only.insert(std::stoi(tok));
    }
  return only;
}

}  // namespace

int main(int argc, char** argv) {
  const std::set<int> only = parse_only(argc, argv);
  // Cheap criteria first; training is shared by 1-4 and 10.
  const std::vector<Criterion> criteria{
      {5, "gradient suite", criterion_5},
      {6, "metric oracles", criterion_6},
      {7, "bootstrap determinism and formula", criterion_7},
      {8, "neighborhood-by-vote calibration", criterion_8},
      {9, "orthogonality loss", criterion_9},
      {11, "pipeline reproducibility", criterion_11},
      {1, "end-to-end training", criterion_1},
      {3, "fidelity", criterion_3},
      {4, "projection groundedness", criterion_4},
      {2, "prototype vs baseline neighborhood", criterion_2},
      {10, "continuum paths", criterion_10},
  };
  std::map<int, std::string> lines;
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::ostringstream line;
    line << "CRITERION " << c.id << " " << (v.pass ? "PASS" : "FAIL") << " " << c.name << ": " << v.detail << " ["
         << num(seconds_since(t0), 4) << " s]";
    std::cout << line.str() << std::endl;
    lines[c.id] = line.str();
  }
  std::cout << "\nSummary\n";
  for (const auto& [id, line] : lines) std::cout << line << "\n";
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
