#include "ace/nn/checkpoint.hpp"

#include "ace/core/errors.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace ace::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'C', 'E', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); }

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

nlohmann::json read_header(std::istream& in, const std::filesystem::path& path) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw RuntimeFailure("not an ace checkpoint: " + path.string());
  const std::uint64_t length = read_u64(in);
  if (!in || length > (1ULL << 30)) throw RuntimeFailure("corrupt checkpoint header: " + path.string());
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw RuntimeFailure("truncated checkpoint header: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  if (header.value("format", std::string{}) != kCheckpointFormat)
    throw RuntimeFailure("unsupported checkpoint format in " + path.string());
  return header;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json header = checkpoint.header;
  header["format"] = kCheckpointFormat;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, m] : checkpoint.tensors) table.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  header["tensors"] = table;
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot open " + tmp.string() + " for writing");
    out.write(kMagic.data(), kMagic.size());
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : checkpoint.tensors)
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!out) throw RuntimeFailure("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open checkpoint " + path.string());
  Checkpoint checkpoint;
  checkpoint.header = read_header(in, path);
  for (const auto& entry : checkpoint.header.at("tensors")) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    Matrix<double> m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw RuntimeFailure("truncated checkpoint payload: " + path.string());
    checkpoint.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(m));
  }
  return checkpoint;
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open checkpoint " + path.string());
  return read_header(in, path);
}

nlohmann::json geometry_to_json(const Geometry& g) {
  return {{"channels", g.channels}, {"height", g.height}, {"width", g.width}};
}

Geometry geometry_from_json(const nlohmann::json& j) {
  return {j.at("channels").get<int>(), j.at("height").get<int>(), j.at("width").get<int>()};
}

void check_tensor(const Checkpoint& checkpoint, const std::string& name, Eigen::Index rows, Eigen::Index cols,
                  const Matrix<double>** out) {
  for (const auto& [n, m] : checkpoint.tensors) {
    if (n != name) continue;
    if (m.rows() != rows || m.cols() != cols)
      throw RuntimeFailure("checkpoint tensor " + name + " has shape " + std::to_string(m.rows()) + "x" +
                           std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    *out = &m;
    return;
  }
  throw RuntimeFailure("checkpoint is missing tensor " + name);
}

}  // namespace ace::nn
