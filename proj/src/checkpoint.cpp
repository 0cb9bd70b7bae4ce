#include <fstream>
#include <nlohmann/json.hpp>

#include "feddkc/error.hpp"
#include "feddkc/neural.hpp"

namespace feddkc {

namespace {

constexpr const char* kFormat = "feddkc-checkpoint";
constexpr int kVersion = 1;

nlohmann::json module_to_json(const std::string& name, const Mlp& mlp) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : mlp.layers()) {
    std::vector<double> weight;
    weight.reserve(static_cast<std::size_t>(layer.weight.size()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) weight.push_back(layer.weight(r, c));
    }
    std::vector<double> bias(layer.bias.data(), layer.bias.data() + layer.bias.size());
    layers.push_back({{"weight", weight}, {"bias", bias}});
  }
  return {{"name", name}, {"layer_dims", mlp.dims()}, {"relu_output", mlp.relu_output()}, {"layers", layers}};
}

Mlp module_from_json(const nlohmann::json& j) {
  const auto dims = j.at("layer_dims").get<std::vector<std::size_t>>();
  Mlp mlp(dims, j.at("relu_output").get<bool>());
  const auto& layers = j.at("layers");
  if (layers.size() != mlp.layers().size()) throw Error(ErrorCode::DimensionMismatch, "checkpoint layer count");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& layer = mlp.layers()[i];
    const auto weight = layers[i].at("weight").get<std::vector<double>>();
    const auto bias = layers[i].at("bias").get<std::vector<double>>();
    if (weight.size() != static_cast<std::size_t>(layer.weight.size()) ||
        bias.size() != static_cast<std::size_t>(layer.bias.size())) {
      throw Error(ErrorCode::DimensionMismatch, "checkpoint layer " + std::to_string(i) + " has the wrong size");
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = weight[k++];
    }
    for (std::size_t c = 0; c < bias.size(); ++c) layer.bias(static_cast<Eigen::Index>(c)) = bias[c];
  }
  return mlp;
}

const Mlp& find_module(const Checkpoint& checkpoint, const std::string& name) {
  for (const auto& [module_name, mlp] : checkpoint.modules) {
    if (module_name == name) return mlp;
  }
  throw Error(ErrorCode::ParseError, "checkpoint has no module '" + name + "'");
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  nlohmann::json modules = nlohmann::json::array();
  for (const auto& [name, mlp] : checkpoint.modules) modules.push_back(module_to_json(name, mlp));
  const nlohmann::json j = {{"format", kFormat},
                            {"version", kVersion},
                            {"seed", checkpoint.seed},
                            {"round", checkpoint.round},
                            {"modules", modules}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write checkpoint " + path);
  out << j.dump() << '\n';
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read checkpoint " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != kFormat || j.at("version").get<int>() != kVersion) {
      throw ParseError(path, 1, "not a version-1 feddkc checkpoint");
    }
    Checkpoint checkpoint;
    checkpoint.seed = j.at("seed").get<std::uint64_t>();
    checkpoint.round = j.at("round").get<int>();
    for (const auto& m : j.at("modules")) {
      checkpoint.modules.emplace_back(m.at("name").get<std::string>(), module_from_json(m));
    }
    return checkpoint;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 1, e.what());
  }
}

Checkpoint make_checkpoint(const SplitModel& model, std::uint64_t seed, int round) {
  return Checkpoint{seed, round, {{"extractor", model.extractor}, {"predictor", model.predictor}}};
}

Checkpoint make_checkpoint(const ServerModel& model, std::uint64_t seed, int round) {
  return Checkpoint{seed, round, {{"server_predictor", model.predictor}}};
}

SplitModel split_model_from(const Checkpoint& checkpoint) {
  return SplitModel{find_module(checkpoint, "extractor"), find_module(checkpoint, "predictor")};
}

ServerModel server_model_from(const Checkpoint& checkpoint) {
  return ServerModel{find_module(checkpoint, "server_predictor")};
}

}  // namespace feddkc
