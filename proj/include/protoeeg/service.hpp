#pragma once

#include <map>
#include <memory>
#include <string>

#include "json.hpp"
#include "protoeeg/signal_data.hpp"
#include "protoeeg/snapshot.hpp"

namespace httplib {
class Server;
}

namespace protoeeg {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// Read-only view of one snapshot. Every method is const and the snapshot never changes, so
// any number of request threads may share one instance.
class SnapshotApi {
 public:
  // `dataset` is optional; without it `?full=1` waveform requests are rejected.
  explicit SnapshotApi(std::shared_ptr<const AtlasSnapshot> snapshot,
                       std::shared_ptr<const Dataset> dataset = nullptr);

  ApiResponse get(const std::string& path, const std::map<std::string, std::string>& query = {}) const;
  const AtlasSnapshot& snapshot() const { return *snapshot_; }
  const std::string& hash() const { return snapshot_->hash; }

 private:
  ApiResponse meta() const;
  ApiResponse samples() const;
  ApiResponse sample(const std::string& id, const std::map<std::string, std::string>& query) const;
  ApiResponse prototypes_of(const std::string& id, const std::map<std::string, std::string>& query) const;
  ApiResponse prototypes() const;
  ApiResponse path_(const std::map<std::string, std::string>& query) const;

  std::shared_ptr<const AtlasSnapshot> snapshot_;
  std::shared_ptr<const Dataset> dataset_;
  std::vector<ScoredSample> map_samples_;
  Eigen::MatrixXd map_coords_;
  double default_epsilon_ = 0.0;
};

// Value of a color scheme for one sample: a class name or a number.
nlohmann::json scheme_value(const SnapshotSample& sample, const std::string& scheme_id);

struct BindError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class SnapshotServer {
 public:
  explicit SnapshotServer(std::shared_ptr<const SnapshotApi> api);
  ~SnapshotServer();

  // Port 0 picks a free port. Returns the bound port; throws BindError.
  int bind(const std::string& host, int port);
  // Blocks until stop() is called.
  void run();
  void stop();

 private:
  std::shared_ptr<const SnapshotApi> api_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace protoeeg
