#include "protoeeg/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "protoeeg/model.hpp"

namespace protoeeg {

using nlohmann::json;

std::vector<ScoredSample> score_samples(const PrototypeModel& model, const Dataset& ds,
                                        std::span<const std::size_t> indices) {
  const FeatureExtractor fx(model.extractor);
  std::vector<ScoredSample> out;
  for (auto i : indices) {
    const EegSample& s = ds.samples[i];
    const FeatureVector f = fx.extract(s);
    out.push_back({s.id, s.patient_id, s.votes, s.majority(), predict_from_feature(f, model).probabilities, f});
  }
  return out;
}

std::vector<ScoredSample> score_samples(const BaselineModel& model, const Dataset& ds,
                                        std::span<const std::size_t> indices) {
  const FeatureExtractor fx(model.extractor);
  std::vector<ScoredSample> out;
  for (auto i : indices) {
    const EegSample& s = ds.samples[i];
    const FeatureVector f = fx.extract(s);
    out.push_back({s.id, s.patient_id, s.votes, s.majority(), softmax(model.logits(f)), f});
  }
  return out;
}

std::vector<ScoredSample> score_split(const Checkpoint& ck, const Dataset& ds, Split split) {
  const auto idx = ds.indices(split);
  return ck.is_baseline() ? score_samples(ck.baseline_model(), ds, idx) : score_samples(ck.prototype_model(), ds, idx);
}

json EvalConfig::to_json() const {
  json u = json::array();
  for (auto unit : units) u.push_back(bootstrap_unit_name(unit));
  return {{"n_boot", n_boot}, {"seed", seed}, {"k", k}, {"permutation_rounds", permutation_rounds}, {"units", u}};
}

namespace {

constexpr int kAll = kNumClasses;

std::string class_key(int c) { return c == kAll ? "All" : std::string(kClassNames[c]); }

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream o;
  o << std::setprecision(10) << v;
  return o.str();
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Evaluates any report metric on a multiset of sample indices.
class MetricEvaluator {
 public:
  MetricEvaluator(std::span<const ScoredSample> s, int k)
      : s_(s), nb_max_(neighborhood_by_max(s, k)), nb_vote_(neighborhood_by_vote(s, k)) {}

  const NeighborhoodResult& neighborhood(const std::string& metric) const {
    return metric == "neighborhood_max" ? nb_max_ : nb_vote_;
  }

  double operator()(const std::string& metric, int c, std::span<const std::size_t> idx) const {
    if (metric == "auroc" || metric == "auprc") {
      if (c < kAll) return ranking(metric, c, idx);
      std::array<int, kNumClasses> counts{};
      for (auto i : idx) ++counts[index_of(s_[i].majority)];
      double sum = 0.0;
      int total = 0;
      for (int k = 0; k < kNumClasses; ++k)
        if (counts[k] > 0) {
          sum += counts[k] * ranking(metric, k, idx);
          total += counts[k];
        }
      return sum / total;
    }
    const auto& values = neighborhood(metric).per_sample;
    double sum = 0.0;
    int n = 0;
    for (auto i : idx)
      if (c == kAll || index_of(s_[i].majority) == c) {
        sum += values[i];
        ++n;
      }
    if (n == 0) throw MetricUndefined("no samples of class " + class_key(c));
    return sum / n;
  }

 private:
  double ranking(const std::string& metric, int c, std::span<const std::size_t> idx) const {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(idx.size());
    labels.reserve(idx.size());
    for (auto i : idx) {
      scores.push_back(s_[i].scores[c]);
      labels.push_back(index_of(s_[i].majority) == c);
    }
    return metric == "auroc" ? auroc(scores, labels) : auprc(scores, labels);
  }

  std::span<const ScoredSample> s_;
  NeighborhoodResult nb_max_, nb_vote_;
};

struct ModelResults {
  // [metric][class] -> full-set value; [metric][class][unit] -> bootstrap
  std::map<std::string, std::array<double, kAll + 1>> value;
  std::map<std::string, std::array<std::vector<BootstrapResult>, kAll + 1>> boot;
};

json bootstrap_json(const BootstrapResult& b) {
  return {{"median", b.median}, {"mean", b.mean}, {"sd", b.sd}, {"lo", b.lo}, {"hi", b.hi},
          {"redraws", b.redraws}, {"index_log_sha256", b.index_log_sha256}};
}

}  // namespace

MetricsReport build_report(const std::vector<NamedScores>& models, const EvalConfig& cfg) {
  if (models.empty() || models.size() > 2) throw std::invalid_argument("build_report: expects one or two models");
  if (models.size() == 2) {
    const auto& a = models[0].samples;
    const auto& b = models[1].samples;
    if (a.size() != b.size()) throw std::invalid_argument("build_report: models scored on different samples");
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].sample_id != b[i].sample_id) throw std::invalid_argument("build_report: samples not aligned by id");
  }

  MetricsReport report;
  json& j = report.json;
  j["config"] = cfg.to_json();
  j["classes"] = json::array();
  for (auto n : kClassNames) j["classes"].push_back(n);
  j["note"] = "point = bootstrap mean; interval = mean +/- 1.96 sd / sqrt(n_boot)";

  std::ostringstream table;
  table << "model,metric,class,value,unit,median,mean,lo,hi\n";

  std::vector<ModelResults> results(models.size());
  std::vector<MetricEvaluator> evaluators;
  for (const auto& m : models) evaluators.emplace_back(m.samples, cfg.k);

  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const auto& samples = models[mi].samples;
    const MetricEvaluator& eval = evaluators[mi];
    std::vector<std::size_t> all(samples.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    json mj;
    mj["name"] = models[mi].name;
    mj["samples"] = samples.size();
    std::array<int, kNumClasses> counts{};
    for (const auto& s : samples) ++counts[index_of(s.majority)];
    for (int c = 0; c < kNumClasses; ++c) mj["class_counts"][class_key(c)] = counts[c];

    for (const auto& metric : report_metric_names()) {
      for (int c = 0; c <= kAll; ++c) {
        double value = std::numeric_limits<double>::quiet_NaN();
        try {
          value = eval(metric, c, all);
        } catch (const MetricUndefined&) {
        }
        results[mi].value[metric][c] = value;
        json ej;
        ej["value"] = number(value);
        if (std::isfinite(value)) {
          for (auto unit : cfg.units) {
            auto fn = [&](std::span<const std::size_t> idx) { return eval(metric, c, idx); };
            BootstrapResult b = bootstrap_ci(fn, samples, cfg.n_boot, unit, cfg.seed);
            ej[std::string(bootstrap_unit_name(unit))] = bootstrap_json(b);
            table << models[mi].name << ',' << metric << ',' << class_key(c) << ',' << fmt(value) << ','
                  << bootstrap_unit_name(unit) << ',' << fmt(b.median) << ',' << fmt(b.mean) << ',' << fmt(b.lo)
                  << ',' << fmt(b.hi) << '\n';
            results[mi].boot[metric][c].push_back(std::move(b));
          }
        }
        mj["metrics"][metric][class_key(c)] = ej;
      }
    }
    j["models"].push_back(mj);
  }
  report.csv_tables["metrics_table.csv"] = table.str();

  if (models.size() == 2) {
    const auto& sa = models[0].samples;
    const auto& sb = models[1].samples;
    json cj;
    cj["first"] = models[0].name;
    cj["second"] = models[1].name;
    cj["percent_better"] = "share of paired draws where the first model is better (lower is better for neighborhood_vote)";
    std::ostringstream ct;
    ct << "metric,class,unit,percent_better,delong_z,delong_p,delong_degenerate,significance_p\n";
    for (const auto& metric : report_metric_names()) {
      std::ostringstream slope;
      slope << "class," << models[0].name << ',' << models[1].name << '\n';
      for (int c = 0; c <= kAll; ++c) {
        const double va = results[0].value[metric][c];
        const double vb = results[1].value[metric][c];
        slope << class_key(c) << ',' << fmt(va) << ',' << fmt(vb) << '\n';
        json entry;
        std::string delong_cols = ",,", sig_col;
        if (metric == "auroc" && c < kAll) {
          std::vector<double> a, b;
          std::vector<int> y;
          for (std::size_t i = 0; i < sa.size(); ++i) {
            a.push_back(sa[i].scores[c]);
            b.push_back(sb[i].scores[c]);
            y.push_back(index_of(sa[i].majority) == c);
          }
          try {
            const DeLongResult d = delong_test(a, b, y);
            entry["delong"] = {{"z", d.z}, {"p", d.p}, {"degenerate", d.degenerate}};
            delong_cols = fmt(d.z) + ',' + fmt(d.p) + ',' + (d.degenerate ? "true" : "false");
          } catch (const MetricUndefined&) {
            entry["delong"] = nullptr;
          }
        }
        if (metric == "neighborhood_max" || metric == "neighborhood_vote") {
          const auto& pa = evaluators[0].neighborhood(metric).per_sample;
          const auto& pb = evaluators[1].neighborhood(metric).per_sample;
          std::vector<double> a, b;
          for (std::size_t i = 0; i < sa.size(); ++i)
            if (c == kAll || index_of(sa[i].majority) == c) {
              a.push_back(pa[i]);
              b.push_back(pb[i]);
            }
          const double p = neighborhood_significance(a, b, cfg.permutation_rounds, cfg.seed);
          entry["significance_p"] = p;
          sig_col = fmt(p);
        }
        const auto& ba = results[0].boot[metric][c];
        const auto& bb = results[1].boot[metric][c];
        for (std::size_t u = 0; u < cfg.units.size() && u < ba.size() && u < bb.size(); ++u) {
          const double pb = metric == "neighborhood_vote" ? percent_better(bb[u], ba[u]) : percent_better(ba[u], bb[u]);
          entry[std::string(bootstrap_unit_name(cfg.units[u]))] = {{"percent_better", pb}};
          ct << metric << ',' << class_key(c) << ',' << bootstrap_unit_name(cfg.units[u]) << ',' << fmt(pb) << ','
             << delong_cols << ',' << sig_col << '\n';
        }
        cj["metrics"][metric][class_key(c)] = entry;
      }
      report.csv_tables["slope_" + metric + ".csv"] = slope.str();
    }
    report.csv_tables["comparison_table.csv"] = ct.str();
    j["comparison"] = cj;
  }
  return report;
}

void MetricsReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "metrics_report.json") << json.dump(2) << '\n';
  for (const auto& [name, contents] : csv_tables) std::ofstream(dir / name) << contents;
}

}  // namespace protoeeg
