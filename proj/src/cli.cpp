#include "protoeeg/cli.hpp"

#include <pthread.h>

#include <csignal>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "protoeeg/atlas.hpp"
#include "protoeeg/checkpoint.hpp"
#include "protoeeg/evaluation.hpp"
#include "protoeeg/service.hpp"
#include "protoeeg/signal_data.hpp"
#include "protoeeg/snapshot.hpp"
#include "protoeeg/trainer.hpp"

namespace protoeeg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// One bound option: its config key and a reader for its effective value.
struct Field {
  std::string key;
  CLI::Option* option = nullptr;
  std::function<json()> value;
};

struct Registry {
  std::vector<Field> global;
  std::map<std::string, std::vector<Field>> commands;
};

std::string flag_name(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

template <typename T>
CLI::Option* bind_option(CLI::App& app, std::vector<Field>& fields, const std::string& key, T& var, const std::string& help) {
  CLI::Option* o = app.add_option(flag_name(key), var, help);
  fields.push_back({key, o, [&var] { return json(var); }});
  return o;
}

CLI::Option* bind_flag(CLI::App& app, std::vector<Field>& fields, const std::string& key, bool& var,
                       const std::string& help) {
  CLI::Option* o = app.add_flag(flag_name(key), var, help);
  fields.push_back({key, o, [&var] { return json(var); }});
  return o;
}

// Config file values as command-line tokens.
std::vector<std::string> tokens_for(const std::string& key, const json& v) {
  auto scalar = [](const json& x) -> std::string {
    if (x.is_string()) return x.get<std::string>();
    if (x.is_boolean()) return x.get<bool>() ? "true" : "false";
    if (x.is_number()) return x.dump();
    throw ConfigError("config value must be a string, number or boolean");
  };
  std::vector<std::string> out;
  try {
    if (v.is_array()) {
      for (const auto& x : v) out.push_back(flag_name(key) + "=" + scalar(x));
    } else {
      out.push_back(flag_name(key) + "=" + scalar(v));
    }
  } catch (const ConfigError& e) {
    throw ConfigError("config key " + key + ": " + e.what());
  }
  return out;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config-file: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("--config-file: " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("--config-file: top level must be an object");
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void require_dir(const std::string& flag, const std::string& path) {
  if (path.empty()) throw ConfigError(flag + " is required");
  if (!fs::is_directory(path)) throw ConfigError(flag + ": no dataset directory at " + path);
}

void require_file(const std::string& flag, const std::string& path) {
  if (path.empty()) throw ConfigError(flag + " is required");
  if (!fs::is_regular_file(path)) throw ConfigError(flag + ": no file at " + path);
}

Dataset load_dataset_checked(const std::string& dir) {
  try {
    return load_dataset(dir);
  } catch (const DatasetError& e) {
    throw ConfigError(std::string("--dataset: ") + e.what());
  }
}

Checkpoint load_checkpoint_checked(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const ArchiveError& e) {
    throw ConfigError("--checkpoint: " + path + ": " + e.what());
  }
}

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string config_file;
};

struct GenOptions {
  int per_class = 200;
  std::vector<int> class_counts;
  GeneratorConfig g;
};

struct TrainOptions {
  std::string dataset;
  bool baseline = false;
  TrainConfig t;
  std::string aggregation = "max";
  std::string precision = "f32";
};

struct EvalOptions {
  std::string dataset;
  std::vector<std::string> checkpoints;
  std::vector<std::string> names;
  std::string split = "test";
  EvalConfig e;
  std::vector<std::string> units{"sample", "patient"};
};

struct AtlasOptions {
  std::string dataset;
  std::string checkpoint;
  std::string space = "scores";
  SnapshotConfig s;
  double path_epsilon = 0.0;
};

struct ServeOptions {
  std::string snapshot;
  std::string dataset;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int cmd_gen(const GlobalOptions& go, GenOptions& o, std::ostream& out) {
  GeneratorConfig g = o.g;
  if (!o.class_counts.empty()) {
    if (o.class_counts.size() != std::size_t(kNumClasses))
      throw ConfigError("--class-counts needs exactly 6 values (Other, Seizure, LPD, GPD, LRDA, GRDA)");
    std::copy(o.class_counts.begin(), o.class_counts.end(), g.per_class.begin());
  } else {
    if (o.per_class <= 0) throw ConfigError("--per-class must be positive");
    g.per_class.fill(o.per_class);
  }
  const Dataset ds = generate_dataset(g, go.seed);
  save_dataset(ds, go.out_dir);
  out << "samples " << ds.samples.size() << "\n";
  out << "dataset_hash " << dataset_hash(go.out_dir) << "\n";
  return kExitOk;
}

int cmd_train(const GlobalOptions& go, TrainOptions& o, std::ostream& out, std::ostream& err) {
  require_dir("--dataset", o.dataset);
  TrainConfig cfg = o.t;
  cfg.seed = go.seed;
  if (o.aggregation == "max")
    cfg.aggregation = Aggregation::Max;
  else if (o.aggregation == "min")
    cfg.aggregation = Aggregation::Min;
  else
    throw ConfigError("--aggregation must be max or min");
  if (o.precision == "f32")
    cfg.precision = Precision::F32;
  else if (o.precision == "f64")
    cfg.precision = Precision::F64;
  else
    throw ConfigError("--precision must be f32 or f64");
  cfg.validate();
  const Dataset ds = load_dataset_checked(o.dataset);
  const fs::path dir(go.out_dir);
  fs::create_directories(dir);

  Checkpoint ck;
  ck.train_config = cfg.to_json();
  if (o.baseline) {
    err << "training baseline for " << cfg.epochs_total << " epochs\n";
    BaselineResult r = train_baseline(ds, cfg);
    ck.model = std::move(r.model);
    ck.history = std::move(r.history);
  } else {
    auto on_epoch = [&](const PrototypeModel& m, const TrainingHistory& h, bool projected) {
      const EpochRecord& e = h.epochs.back();
      err << "epoch " << e.epoch << " " << stage_name(e.stage) << " loss " << e.loss.total << " acc "
          << e.train_accuracy << (projected ? " projected" : "") << "\n";
      if (projected) {
        Checkpoint c{m, cfg.to_json(), h};
        std::ostringstream name;
        name << "epoch_" << std::setw(4) << std::setfill('0') << e.epoch << ".ckpt";
        save_checkpoint(c, dir / "checkpoints" / name.str());
      }
    };
    TrainResult r = train(ds, cfg, on_epoch);
    ck.model = std::move(r.model);
    ck.history = std::move(r.history);
  }
  save_checkpoint(ck, dir / "checkpoint.ckpt");
  write_text(dir / "training_log.csv", ck.history.csv());
  write_text(dir / "history.json", ck.history.to_json().dump(2) + "\n");
  out << "checkpoint " << (dir / "checkpoint.ckpt").string() << "\n";
  out << "config_hash " << cfg.hash() << "\n";
  out << "prototypes " << ck.prototype_count() << "\n";
  out << "epochs " << ck.history.epochs.size() << "\n";
  return kExitOk;
}

int cmd_eval(const GlobalOptions& go, EvalOptions& o, std::ostream& out) {
  require_dir("--dataset", o.dataset);
  if (o.checkpoints.empty() || o.checkpoints.size() > 2) throw ConfigError("--checkpoint must be given once or twice");
  for (const auto& c : o.checkpoints) require_file("--checkpoint", c);
  if (!o.names.empty() && o.names.size() != o.checkpoints.size())
    throw ConfigError("--name must be given once per --checkpoint");
  Split split;
  if (o.split == "test")
    split = Split::Test;
  else if (o.split == "train")
    split = Split::Train;
  else
    throw ConfigError("--split must be test or train");
  EvalConfig cfg = o.e;
  cfg.seed = go.seed;
  cfg.units.clear();
  for (const auto& u : o.units) {
    if (u == "sample")
      cfg.units.push_back(BootstrapUnit::Sample);
    else if (u == "patient")
      cfg.units.push_back(BootstrapUnit::Patient);
    else
      throw ConfigError("--units entries must be sample or patient");
  }
  if (cfg.units.empty()) throw ConfigError("--units needs at least one unit");
  if (cfg.n_boot < 1) throw ConfigError("--n-boot must be positive");
  if (cfg.k < 1) throw ConfigError("--k must be positive");
  if (cfg.permutation_rounds < 1) throw ConfigError("--permutation-rounds must be positive");

  const Dataset ds = load_dataset_checked(o.dataset);
  std::vector<NamedScores> models;
  for (std::size_t i = 0; i < o.checkpoints.size(); ++i) {
    const Checkpoint ck = load_checkpoint_checked(o.checkpoints[i]);
    std::string name = o.names.empty() ? (ck.is_baseline() ? "baseline" : "prototype") : o.names[i];
    if (!models.empty() && models.front().name == name) name += "_2";
    models.push_back({name, score_split(ck, ds, split)});
  }
  const MetricsReport report = build_report(models, cfg);
  report.write(go.out_dir);
  for (const auto& m : report.json.at("models")) {
    out << m.at("name").get<std::string>() << " auroc";
    for (const auto& [cls, v] : m.at("metrics").at("auroc").items()) out << " " << cls << "=" << v.at("value");
    out << "\n";
  }
  out << "report " << (fs::path(go.out_dir) / "metrics_report.json").string() << "\n";
  return kExitOk;
}

int cmd_atlas(const GlobalOptions& go, AtlasOptions& o, std::ostream& out) {
  require_dir("--dataset", o.dataset);
  require_file("--checkpoint", o.checkpoint);
  SnapshotConfig cfg = o.s;
  cfg.seed = go.seed;
  try {
    cfg.embedding.space = parse_embedding_space(o.space);
  } catch (const std::invalid_argument&) {
    throw ConfigError("--space must be scores or latent");
  }
  if (cfg.waveform_columns < 1 || cfg.waveform_columns > 2000)
    throw ConfigError("--waveform-columns must lie in [1, 2000]");
  if (cfg.embedding.neighbors < 1) throw ConfigError("--neighbors must be positive");
  if (cfg.embedding.iterations < 1) throw ConfigError("--iterations must be positive");
  const Checkpoint ck = load_checkpoint_checked(o.checkpoint);
  if (ck.is_baseline()) throw ConfigError("--checkpoint: baseline checkpoints have no prototypes to map");
  const PrototypeModel& model = ck.prototype_model();
  if (!model.grounded()) throw ConfigError("--checkpoint: prototypes were never projected; train past a joint phase");
  const Dataset ds = load_dataset_checked(o.dataset);

  const AtlasSnapshot snap = build_snapshot(model, ds, cfg);
  const fs::path dir(go.out_dir);
  snap.save(dir / "snapshot.atlas");

  std::ostringstream csv;
  csv << std::setprecision(17) << "id,x,y\n";
  for (const auto& s : snap.samples)
    if (s.on_map) csv << s.id << "," << s.x << "," << s.y << "\n";
  write_text(dir / "embedding.csv", csv.str());

  const Eigen::MatrixXd y = snap.map_coordinates();
  const std::vector<ScoredSample> ms = snap.map_samples();
  const double eps = o.path_epsilon > 0.0 ? o.path_epsilon : default_path_epsilon(y);
  json paths = json::array();
  for (int a = 0; a < kNumClasses; ++a)
    for (int b = a + 1; b < kNumClasses; ++b) {
      try {
        paths.push_back(continuum_path(y, ms, label_at(a), label_at(b), eps).to_json());
      } catch (const NoPathError& e) {
        paths.push_back({{"class_a", class_name(label_at(a))},
                         {"class_b", class_name(label_at(b))},
                         {"epsilon", e.epsilon},
                         {"minimal_epsilon", e.minimal_epsilon},
                         {"sample_ids", json::array()}});
      } catch (const std::invalid_argument& e) {
        paths.push_back({{"class_a", class_name(label_at(a))},
                         {"class_b", class_name(label_at(b))},
                         {"epsilon", eps},
                         {"error", e.what()},
                         {"sample_ids", json::array()}});
      }
    }
  write_text(dir / "paths.json", json{{"epsilon", eps}, {"paths", paths}}.dump(2) + "\n");
  out << "snapshot " << (dir / "snapshot.atlas").string() << "\n";
  out << "snapshot_hash " << snap.hash << "\n";
  out << "samples " << snap.map_size() << "\n";
  return kExitOk;
}

int cmd_serve(ServeOptions& o, std::ostream& out, std::ostream& err) {
  require_file("--snapshot", o.snapshot);
  if (o.port < 0 || o.port > 65535) throw ConfigError("--port must lie in [0, 65535]");
  std::shared_ptr<const AtlasSnapshot> snap;
  try {
    snap = std::make_shared<const AtlasSnapshot>(AtlasSnapshot::load(o.snapshot));
  } catch (const std::exception& e) {
    throw ConfigError("--snapshot: " + std::string(e.what()));
  }
  std::shared_ptr<const Dataset> ds;
  if (!o.dataset.empty()) {
    require_dir("--dataset", o.dataset);
    ds = std::make_shared<const Dataset>(load_dataset_checked(o.dataset));
  }

  // Route SIGTERM/SIGINT to a waiting thread; every server thread inherits the blocked mask.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGINT);
  sigset_t old;
  pthread_sigmask(SIG_BLOCK, &set, &old);

  auto api = std::make_shared<const SnapshotApi>(snap, ds);
  SnapshotServer server(api);
  int port;
  try {
    port = server.bind(o.host, o.port);
  } catch (const BindError& e) {
    pthread_sigmask(SIG_SETMASK, &old, nullptr);
    throw std::runtime_error(e.what());
  }
  out << "listening " << o.host << " " << port << "\n" << std::flush;
  err << "snapshot " << snap->hash << "\n";
  std::thread waiter([&server, set] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.run();
  // run() can also end without a signal; wake the waiter so it can be joined.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  pthread_sigmask(SIG_SETMASK, &old, nullptr);
  err << "stopped\n";
  return kExitOk;
}

struct Cli {
  CLI::App app{"Prototype-based EEG pattern classifier: data, training, evaluation and atlas service", "protoeeg"};
  Registry reg;
  GlobalOptions go;
  GenOptions gen;
  TrainOptions train;
  EvalOptions eval;
  AtlasOptions atlas;
  ServeOptions serve;
  std::map<std::string, CLI::App*> subs;

  Cli() {
    app.set_help_all_flag("--help-all", "Help for every subcommand");
    bind_option(app, reg.global, "seed", go.seed, "Seed for every random draw");
    bind_option(app, reg.global, "out_dir", go.out_dir, "Output directory");
    app.add_option("--config-file", go.config_file,
                   "JSON object of option values (keys are flag names with underscores); flags override it");

    auto* g = add_sub("gen", "Generate a synthetic labeled EEG corpus into --out-dir");
    auto& gf = reg.commands["gen"];
    bind_option(*g, gf, "per_class", gen.per_class, "Samples per class (all six classes)");
    bind_option(*g, gf, "class_counts", gen.class_counts, "Six per-class counts; overrides --per-class");
    bind_option(*g, gf, "patients", gen.g.patients, "Number of synthetic patients");
    bind_option(*g, gf, "blend_fraction", gen.g.blend_fraction, "Share of samples that mix two patterns");
    bind_option(*g, gf, "bridges_per_pair", gen.g.bridges_per_pair, "Extra evenly spaced blends per class pair");
    bind_option(*g, gf, "channels", gen.g.channels, "EEG channels");
    bind_option(*g, gf, "sample_rate", gen.g.sample_rate, "Samples per second");
    bind_option(*g, gf, "rater_concentration", gen.g.rater_concentration, "Rater Dirichlet concentration");
    bind_option(*g, gf, "rater_floor", gen.g.rater_floor, "Uniform share of the rater vote mean");
    bind_option(*g, gf, "min_votes", gen.g.min_votes, "Fewest votes per sample");
    bind_option(*g, gf, "max_votes", gen.g.max_votes, "Most votes per sample");
    bind_option(*g, gf, "test_patient_fraction", gen.g.test_patient_fraction, "Share of patients in the test split");

    auto* t = add_sub("train", "Train a prototype model (or --baseline) and write checkpoints into --out-dir");
    auto& tf = reg.commands["train"];
    TrainConfig& c = train.t;
    bind_option(*t, tf, "dataset", train.dataset, "Dataset directory");
    bind_flag(*t, tf, "baseline", train.baseline, "Train the extractor plus softmax head instead");
    bind_option(*t, tf, "epochs", c.epochs_total, "Total epochs after pretraining");
    bind_option(*t, tf, "warm_epochs", c.warm_epochs, "Warm-up epochs");
    bind_option(*t, tf, "joint_epochs", c.joint_epochs_per_cycle, "Joint epochs per cycle");
    bind_option(*t, tf, "last_layer_epochs", c.last_layer_epochs_per_cycle, "Last-layer epochs per cycle");
    bind_option(*t, tf, "lr_warm_prototypes", c.lr_warm_prototypes, "Warm-up prototype learning rate");
    bind_option(*t, tf, "lr_joint_extractor", c.lr_joint_extractor, "Joint extractor learning rate");
    bind_option(*t, tf, "lr_joint_prototypes", c.lr_joint_prototypes, "Joint prototype learning rate");
    bind_option(*t, tf, "lr_joint_last_layer", c.lr_joint_last_layer, "Joint class-connection learning rate");
    bind_option(*t, tf, "lr_last_layer", c.lr_last_layer, "Last-layer stage learning rate");
    bind_option(*t, tf, "batch_size", c.batch_size, "Minibatch size");
    bind_option(*t, tf, "lambda_cluster", c.weights.cluster, "Cluster term weight");
    bind_option(*t, tf, "lambda_separation", c.weights.separation, "Separation term weight");
    bind_option(*t, tf, "lambda_orthogonality", c.weights.orthogonality, "Orthogonality term weight");
    bind_option(*t, tf, "lambda_l1", c.weights.last_layer_l1, "L1 weight on class connections");
    bind_option(*t, tf, "aggregation", train.aggregation, "Cluster/separation aggregation: max or min");
    bind_flag(*t, tf, "soft_labels", c.soft_labels, "Cross-entropy against vote distributions");
    bind_option(*t, tf, "margin", c.margin, "Additive cosine margin (0 disables)");
    bind_option(*t, tf, "scale", c.scale, "Similarity scale");
    bind_option(*t, tf, "pretrain_epochs", c.pretrain_epochs, "Extractor pretraining epochs");
    bind_option(*t, tf, "lr_pretrain", c.lr_pretrain, "Pretraining learning rate");
    bind_option(*t, tf, "validation_fraction", c.validation_fraction, "Share of train patients held out");
    bind_option(*t, tf, "base_width", c.base_width, "Channels of the first convolution block");
    bind_option(*t, tf, "window_features", c.window_features, "Features per 10 s window");
    bind_option(*t, tf, "precision", train.precision, "Extractor arithmetic: f32 or f64");

    auto* e = add_sub("eval", "Score one or two checkpoints and write the metrics report into --out-dir");
    auto& ef = reg.commands["eval"];
    bind_option(*e, ef, "dataset", eval.dataset, "Dataset directory");
    bind_option(*e, ef, "checkpoint", eval.checkpoints, "Checkpoint file; give twice to compare (first vs second)");
    bind_option(*e, ef, "name", eval.names, "Report name per checkpoint");
    bind_option(*e, ef, "split", eval.split, "Split to score: test or train");
    bind_option(*e, ef, "n_boot", eval.e.n_boot, "Bootstrap replicates");
    bind_option(*e, ef, "k", eval.e.k, "Neighbors for the neighborhood analyses");
    bind_option(*e, ef, "permutation_rounds", eval.e.permutation_rounds, "Rounds of the sign-flip test");
    bind_option(*e, ef, "units", eval.units, "Bootstrap units: sample, patient");

    auto* a = add_sub("atlas", "Embed the test split and write snapshot, embedding CSV and paths into --out-dir");
    auto& af = reg.commands["atlas"];
    bind_option(*a, af, "dataset", atlas.dataset, "Dataset directory");
    bind_option(*a, af, "checkpoint", atlas.checkpoint, "Prototype model checkpoint");
    bind_option(*a, af, "space", atlas.space, "Embedding input: scores or latent");
    bind_option(*a, af, "neighbors", atlas.s.embedding.neighbors, "Near pairs per point");
    bind_option(*a, af, "iterations", atlas.s.embedding.iterations, "Optimizer iterations");
    bind_option(*a, af, "waveform_columns", atlas.s.waveform_columns, "Min/max columns per channel (at most 2000)");
    bind_option(*a, af, "path_epsilon", atlas.path_epsilon, "Continuum path radius (0: twice the median NN distance)");

    auto* s = add_sub("serve", "Serve a snapshot over HTTP until SIGTERM");
    auto& sf = reg.commands["serve"];
    bind_option(*s, sf, "snapshot", serve.snapshot, "Snapshot file");
    bind_option(*s, sf, "dataset", serve.dataset, "Dataset directory for full-resolution waveforms");
    bind_option(*s, sf, "host", serve.host, "Bind address");
    bind_option(*s, sf, "port", serve.port, "Port (0 picks a free one)");

    app.require_subcommand(0, 1);
  }

  CLI::App* add_sub(const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->fallthrough();
    subs[name] = s;
    return s;
  }

  CLI::App* selected() const {
    for (const auto& [name, s] : subs)
      if (s->parsed()) return s;
    return nullptr;
  }

  json resolved(const std::string& command) const {
    json j = json::object();
    j["command"] = command;
    for (const auto& f : reg.global) j[f.key] = f.value();
    for (const auto& f : reg.commands.at(command)) j[f.key] = f.value();
    return j;
  }
};

void parse(CLI::App& app, const std::vector<std::string>& args) {
  std::vector<std::string> rev(args.rbegin(), args.rend());
  app.parse(rev);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto cli = std::make_unique<Cli>();
  try {
    parse(cli->app, args);
    std::string command = cli->selected() ? cli->selected()->get_name() : "";
    if (!cli->go.config_file.empty()) {
      const json cfg = load_config_file(cli->go.config_file);
      if (cfg.contains("command")) {
        const std::string c = cfg["command"].is_string() ? cfg["command"].get<std::string>() : "";
        if (!cli->subs.count(c)) throw ConfigError("--config-file: unknown command " + cfg["command"].dump());
        if (command.empty()) command = c;
        if (c != command) throw ConfigError("--config-file is for command " + c + ", not " + command);
      }
      if (command.empty()) throw ConfigError("a subcommand is required");
      std::set<std::string> known;
      for (const auto& f : cli->reg.global) known.insert(f.key);
      for (const auto& f : cli->reg.commands.at(command)) known.insert(f.key);
      // Re-parse with config entries appended for every option the command line left unset.
      std::vector<std::string> extra;
      for (const auto& [key, value] : cfg.items()) {
        if (key == "command") continue;
        if (!known.count(key)) throw ConfigError("--config-file: unknown option " + key + " for " + command);
        bool given = false;
        for (const auto* fields : {&cli->reg.global, &cli->reg.commands.at(command)})
          for (const auto& f : *fields)
            if (f.key == key && f.option->count() > 0) given = true;
        if (given) continue;
        for (auto& tok : tokens_for(key, value)) extra.push_back(std::move(tok));
      }
      std::vector<std::string> full = args;
      if (!cli->selected()) full.push_back(command);
      full.insert(full.end(), extra.begin(), extra.end());
      const std::string config_file = cli->go.config_file;
      cli = std::make_unique<Cli>();
      parse(cli->app, full);
      cli->go.config_file = config_file;
    }
    if (command.empty()) throw ConfigError("a subcommand is required: gen, train, eval, atlas or serve\n" +
                                           cli->app.help());

    const fs::path out_dir(cli->go.out_dir);
    fs::create_directories(out_dir);
    write_text(out_dir / "resolved_config.json", cli->resolved(command).dump(2) + "\n");
    if (command == "gen") return cmd_gen(cli->go, cli->gen, out);
    if (command == "train") return cmd_train(cli->go, cli->train, out, err);
    if (command == "eval") return cmd_eval(cli->go, cli->eval, out);
    if (command == "atlas") return cmd_atlas(cli->go, cli->atlas, out);
    return cmd_serve(cli->serve, out, err);
  } catch (const CLI::ParseError& e) {
    const int code = cli->app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace protoeeg
