#pragma once

// Versioned JSON checkpoints for encoder parameters.
//
// A checkpoint stores the encoder configuration plus every parameter matrix
// as a named flat array with its shape. Loading validates the version, the
// configuration, and every shape; round-tripping is exact for the textual
// decimal representation produced by the JSON writer (doubles are serialized
// with enough digits to reconstruct the value bit-for-bit).

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "kgdeq/common.hpp"
#include "kgdeq/encoder.hpp"

namespace kgdeq {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json encoder_config_to_json(const EncoderConfig& c) {
  return nlohmann::json{{"num_layers", c.num_layers},
                        {"hidden_dim", c.hidden_dim},
                        {"aggregation", aggregation_name(c.aggregation)},
                        {"use_distance", c.use_distance},
                        {"distance_cap", c.distance_cap},
                        {"mlp_hidden_dims", c.mlp_hidden_dims},
                        {"head_hidden_dims", c.head_hidden_dims},
                        {"seed", c.seed}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
  c.use_distance = j.at("use_distance").get<bool>();
  c.distance_cap = j.at("distance_cap").get<std::size_t>();
  c.mlp_hidden_dims = j.at("mlp_hidden_dims").get<std::vector<std::size_t>>();
  c.head_hidden_dims = j.at("head_hidden_dims").get<std::vector<std::size_t>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

template <class Real>
inline nlohmann::json checkpoint_to_json(const EncoderParams<Real>& params,
                                         std::size_t epoch = 0) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["kind"] = "encoder";
  j["config"] = encoder_config_to_json(params.config);
  j["epoch"] = epoch;
  nlohmann::json tensors = nlohmann::json::object();
  for_each_param(params, [&](const std::string& name, const Matrix<Real>& m, bool) {
    std::vector<double> flat(m.data().begin(), m.data().end());
    tensors[name] = {{"shape", {m.rows(), m.cols()}}, {"data", flat}};
  });
  j["params"] = tensors;
  return j;
}

template <class Real = double>
inline EncoderParams<Real> checkpoint_from_json(const nlohmann::json& j) {
  require(j.contains("version"), "checkpoint: missing version field");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw ValidationError("checkpoint: unsupported version " + j.at("version").dump());
  require(j.contains("kind") && j.at("kind") == "encoder", "checkpoint: kind must be 'encoder'");
  const EncoderConfig cfg = encoder_config_from_json(j.at("config"));
  EncoderParams<Real> params = init_encoder<Real>(cfg);
  const nlohmann::json& tensors = j.at("params");
  std::size_t seen = 0;
  for_each_param(params, [&](const std::string& name, Matrix<Real>& m, bool) {
    if (!tensors.contains(name))
      throw ValidationError("checkpoint: missing parameter '" + name + "'");
    const nlohmann::json& t = tensors.at(name);
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols())
      throw ValidationError("checkpoint: shape mismatch for parameter '" + name + "'");
    const auto flat = t.at("data").get<std::vector<double>>();
    if (flat.size() != m.size())
      throw ValidationError("checkpoint: data length mismatch for parameter '" + name + "'");
    for (std::size_t i = 0; i < flat.size(); ++i) m.data()[i] = static_cast<Real>(flat[i]);
    seen += 1;
  });
  if (tensors.size() != seen)
    throw ValidationError("checkpoint: unexpected extra parameters present");
  return params;
}

template <class Real>
inline void save_checkpoint(const EncoderParams<Real>& params, const std::string& path,
                            std::size_t epoch = 0) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("save_checkpoint: cannot open '" + path + "' for writing");
  out << checkpoint_to_json(params, epoch).dump(2) << "\n";
  if (!out) throw RuntimeFailure("save_checkpoint: write to '" + path + "' failed");
}

template <class Real = double>
inline EncoderParams<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("load_checkpoint: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("load_checkpoint: '" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json<Real>(j);
}

}  // namespace kgdeq
