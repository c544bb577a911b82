#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace protoeeg {

// Versioned container of named float32 tensors behind a JSON text header.
//
// Layout:
//   line 1  "PROTOEEG-ARCHIVE <version>"
//   line 2  decimal byte length of the header
//   header  JSON: {"kind", "meta", "tensors": [{"name", "shape", "offset"}]}, then '\n'
//   payload tensors back to back, row-major, little-endian float32
class TensorArchive {
 public:
  static constexpr int kVersion = 1;

  std::string kind;
  nlohmann::json meta = nlohmann::json::object();

  void put(const std::string& name, const Eigen::MatrixXd& value);
  void put(const std::string& name, const Eigen::VectorXd& value);
  void put_raw(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> data);
  bool contains(const std::string& name) const;
  Eigen::MatrixXd matrix(const std::string& name) const;
  Eigen::VectorXd vector(const std::string& name) const;
  const std::vector<float>& raw(const std::string& name) const;
  const std::vector<std::int64_t>& shape(const std::string& name) const;
  std::vector<std::string> names() const;

  std::string serialize() const;
  static TensorArchive deserialize(const std::string& bytes);
  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  struct Entry {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<float> data;
  };
  const Entry& entry(const std::string& name) const;
  std::vector<Entry> entries_;
};

struct ArchiveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace protoeeg
