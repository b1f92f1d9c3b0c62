#pragma once

#include "ace/core/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace ace::nn {

inline constexpr const char* kCheckpointFormat = "ace-checkpoint/1";

/// Single-file model archive:
///
///   8 bytes   magic "ACECKPT\0"
///   u64 LE    header length N
///   N bytes   JSON header (format tag, kind, geometry, architecture,
///             optional schedule, tensor table, metadata)
///   ...       tensor payloads, float64 little-endian, in table order
struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix<double>>> tensors;

  std::string kind() const { return header.value("kind", std::string{}); }
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws RuntimeFailure on IO errors or a malformed archive.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Reads only the JSON header.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

nlohmann::json geometry_to_json(const Geometry& g);
Geometry geometry_from_json(const nlohmann::json& j);

/// Copies every parameter of `model` into the archive tensor table.
template <typename Scalar, typename Model>
void store_parameters(Model& model, Checkpoint& checkpoint) {
  model.for_each_parameter([&](const std::string& name, Matrix<Scalar>& m) {
    checkpoint.tensors.emplace_back(name, m.template cast<double>());
  });
}

/// Loads parameters by name; throws RuntimeFailure on missing names or shape mismatch.
void check_tensor(const Checkpoint& checkpoint, const std::string& name, Eigen::Index rows, Eigen::Index cols,
                  const Matrix<double>** out);

template <typename Scalar, typename Model>
void load_parameters(Model& model, const Checkpoint& checkpoint) {
  model.for_each_parameter([&](const std::string& name, Matrix<Scalar>& m) {
    const Matrix<double>* stored = nullptr;
    check_tensor(checkpoint, name, m.rows(), m.cols(), &stored);
    m = stored->template cast<Scalar>();
  });
}

}  // namespace ace::nn
