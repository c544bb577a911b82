#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "protoeeg/signal_data.hpp"
#include "protoeeg/snapshot.hpp"
#include "protoeeg/trainer.hpp"

namespace testing {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "protoeeg-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

// Every train sample gets 20 votes, so every train sample is a projection candidate.
inline protoeeg::GeneratorConfig tiny_generator(int per_class = 6, int patients = 6) {
  protoeeg::GeneratorConfig g;
  g.per_class.fill(per_class);
  g.patients = patients;
  g.min_votes = 20;
  g.max_votes = 20;
  return g;
}

// Warm 1, joint 2 (projection after epoch 3), last 1.
inline protoeeg::TrainConfig tiny_train_config(std::uint64_t seed = 0) {
  protoeeg::TrainConfig c;
  c.epochs_total = 4;
  c.warm_epochs = 1;
  c.joint_epochs_per_cycle = 2;
  c.last_layer_epochs_per_cycle = 1;
  c.pretrain_epochs = 1;
  c.batch_size = 8;
  c.base_width = 8;
  c.seed = seed;
  return c;
}

inline const protoeeg::Dataset& tiny_dataset() {
  static const protoeeg::Dataset ds = protoeeg::generate_dataset(tiny_generator(8, 6), 3);
  return ds;
}

inline const protoeeg::TrainResult& tiny_trained() {
  static const protoeeg::TrainResult r = protoeeg::train(tiny_dataset(), tiny_train_config());
  return r;
}

inline protoeeg::SnapshotConfig tiny_snapshot_config() {
  protoeeg::SnapshotConfig c;
  c.waveform_columns = 40;
  c.embedding.iterations = 150;
  c.embedding.phase1_iterations = 50;
  c.embedding.phase2_iterations = 50;
  c.embedding.neighbors = 5;
  return c;
}

inline const protoeeg::AtlasSnapshot& tiny_snapshot() {
  static const protoeeg::AtlasSnapshot s =
      protoeeg::build_snapshot(tiny_trained().model, tiny_dataset(), tiny_snapshot_config());
  return s;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace testing
