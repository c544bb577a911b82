#include "protoeeg/archive.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include "protoeeg/binary_io.hpp"

namespace protoeeg {

using nlohmann::json;

namespace {
constexpr std::string_view kMagic = "PROTOEEG-ARCHIVE";
}

void TensorArchive::put_raw(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> data) {
  const auto count = std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
  if (count != static_cast<std::int64_t>(data.size())) throw ArchiveError("tensor " + name + ": shape/data mismatch");
  for (auto& e : entries_)
    if (e.name == name) {
      e.shape = std::move(shape);
      e.data = std::move(data);
      return;
    }
  entries_.push_back({name, std::move(shape), std::move(data)});
}

void TensorArchive::put(const std::string& name, const Eigen::MatrixXd& value) {
  std::vector<float> data(static_cast<std::size_t>(value.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < value.rows(); ++r)
    for (Eigen::Index c = 0; c < value.cols(); ++c) data[k++] = static_cast<float>(value(r, c));
  put_raw(name, {value.rows(), value.cols()}, std::move(data));
}

void TensorArchive::put(const std::string& name, const Eigen::VectorXd& value) {
  std::vector<float> data(value.data(), value.data() + value.size());
  put_raw(name, {value.size()}, std::move(data));
}

bool TensorArchive::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const TensorArchive::Entry& TensorArchive::entry(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw ArchiveError("archive has no tensor named " + name);
}

Eigen::MatrixXd TensorArchive::matrix(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.shape.size() != 2) throw ArchiveError("tensor " + name + " is not a matrix");
  Eigen::MatrixXd m(e.shape[0], e.shape[1]);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = e.data[k++];
  return m;
}

Eigen::VectorXd TensorArchive::vector(const std::string& name) const {
  const Entry& e = entry(name);
  Eigen::VectorXd v(static_cast<Eigen::Index>(e.data.size()));
  for (std::size_t i = 0; i < e.data.size(); ++i) v[static_cast<Eigen::Index>(i)] = e.data[i];
  return v;
}

const std::vector<float>& TensorArchive::raw(const std::string& name) const { return entry(name).data; }
const std::vector<std::int64_t>& TensorArchive::shape(const std::string& name) const { return entry(name).shape; }

std::vector<std::string> TensorArchive::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::string TensorArchive::serialize() const {
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& e : entries_) {
    tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}});
    offset += e.data.size() * sizeof(float);
  }
  const std::string header = json{{"kind", kind}, {"meta", meta}, {"tensors", tensors}}.dump();
  std::ostringstream out(std::ios::binary);
  out << kMagic << ' ' << kVersion << '\n' << header.size() << '\n' << header << '\n';
  for (const auto& e : entries_) write_f32_le(out, e.data);
  return out.str();
}

TensorArchive TensorArchive::deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic) throw ArchiveError("not a tensor archive");
  if (version != kVersion) throw ArchiveError("unsupported archive version " + std::to_string(version));
  std::size_t header_len = 0;
  in >> header_len;
  in.get();
  if (!in || header_len > bytes.size()) throw ArchiveError("truncated archive header");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in || in.get() != '\n') throw ArchiveError("truncated archive header");
  TensorArchive a;
  try {
    const json h = json::parse(header);
    a.kind = h.at("kind");
    a.meta = h.at("meta");
    const std::streamoff payload = in.tellg();
    const auto payload_bytes = static_cast<std::int64_t>(bytes.size()) - payload;
    for (const auto& t : h.at("tensors")) {
      std::vector<std::int64_t> shape = t.at("shape");
      const auto count = std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
      const auto offset = t.at("offset").get<std::int64_t>();
      if (count < 0 || offset < 0 || offset + 4 * count > payload_bytes)
        throw ArchiveError("truncated tensor " + t.at("name").get<std::string>());
      std::vector<float> data(static_cast<std::size_t>(count));
      in.seekg(payload + static_cast<std::streamoff>(offset));
      read_f32_le(in, data);
      a.put_raw(t.at("name"), std::move(shape), std::move(data));
    }
  } catch (const json::exception& e) {
    throw ArchiveError(std::string("malformed archive header: ") + e.what());
  }
  return a;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError("cannot write " + path.string());
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace protoeeg
