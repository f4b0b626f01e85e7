#include "mfgpi/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "mfgpi/errors.hpp"

namespace mfgpi {

namespace {

constexpr const char* kMagic = "mfgpi-checkpoint";
constexpr int kVersion = 1;

struct Array {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<double> values;
};

void write_array(std::ostream& out, const std::string& key, Eigen::Index rows, Eigen::Index cols,
                 const auto& values) {
  out << "array " << key << ' ' << rows << ' ' << cols << '\n';
  char buffer[64];
  for (Eigen::Index k = 0; k < rows * cols; ++k) {
    std::snprintf(buffer, sizeof buffer, "%a", static_cast<double>(values[k]));
    out << buffer << (k + 1 == rows * cols ? '\n' : ' ');
  }
  if (rows * cols == 0) out << '\n';
}

void write_tensors(std::ostream& out, const std::string& prefix, const ParamTensors<float>& tensors) {
  for (std::size_t k = 0; k < tensors.num_layers(); ++k) {
    const auto& w = tensors.weights[k];
    const auto& b = tensors.biases[k];
    write_array(out, prefix + ".W" + std::to_string(k), w.rows(), w.cols(), w.data());
    write_array(out, prefix + ".b" + std::to_string(k), b.size(), 1, b.data());
  }
}

const Array& require(const std::map<std::string, Array>& arrays, const std::string& key, Eigen::Index rows,
                     Eigen::Index cols) {
  const auto it = arrays.find(key);
  if (it == arrays.end()) throw CompatibilityError("checkpoint lacks array '" + key + "'");
  if (it->second.rows != rows || it->second.cols != cols)
    throw CompatibilityError("checkpoint array '" + key + "' is " + std::to_string(it->second.rows) + "x" +
                             std::to_string(it->second.cols) + ", expected " + std::to_string(rows) + "x" +
                             std::to_string(cols));
  return it->second;
}

void read_tensors(const std::map<std::string, Array>& arrays, const std::string& prefix,
                  ParamTensors<float>& tensors) {
  for (std::size_t k = 0; k < tensors.num_layers(); ++k) {
    auto& w = tensors.weights[k];
    auto& b = tensors.biases[k];
    const auto& wa = require(arrays, prefix + ".W" + std::to_string(k), w.rows(), w.cols());
    const auto& ba = require(arrays, prefix + ".b" + std::to_string(k), b.size(), 1);
    for (Eigen::Index j = 0; j < w.size(); ++j) w.data()[j] = static_cast<float>(wa.values[j]);
    for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = static_cast<float>(ba.values[j]);
  }
  if (arrays.count(prefix + ".W" + std::to_string(tensors.num_layers())))
    throw CompatibilityError("checkpoint network '" + prefix + "' has more layers than configured");
}

}  // namespace

void write_checkpoint(std::ostream& out, const TrainerState& state) {
  out << kMagic << ' ' << kVersion << '\n';
  out << "iteration " << state.ensemble.iteration << '\n';
  out << "seed " << state.ensemble.seed << '\n';
  write_tensors(out, "control", state.nets.control.inner);
  write_tensors(out, "value", state.nets.value.inner);
  write_tensors(out, "test", state.nets.test.eta);
  write_tensors(out, "opt.control", state.control_opt.mean_square);
  write_tensors(out, "opt.value", state.value_opt.mean_square);
  write_tensors(out, "opt.test", state.test_opt.mean_square);
  const auto& ensemble = state.ensemble;
  write_array(out, "ensemble.n", 1, ensemble.size(), ensemble.time_index.data());
  write_array(out, "ensemble.z", ensemble.z.rows(), ensemble.z.cols(), ensemble.z.data());
}

void save_checkpoint(const std::string& path, const TrainerState& state) {
  const std::filesystem::path target(path);
  const std::filesystem::path partial = target.string() + ".partial";
  {
    std::ofstream out(partial);
    if (!out) throw Error("cannot write checkpoint '" + partial.string() + "'");
    write_checkpoint(out, state);
    if (!out) throw Error("failed writing checkpoint '" + partial.string() + "'");
  }
  std::filesystem::rename(partial, target);
}

TrainerState read_checkpoint(std::istream& in, const MfgProblem& problem, const TrainerConfig& config) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) throw CompatibilityError("not a checkpoint file");
  if (version != kVersion) throw CompatibilityError("unsupported checkpoint version " + std::to_string(version));

  std::int64_t iteration = 0;
  std::uint64_t seed = 0;
  std::map<std::string, Array> arrays;
  std::string tag;
  while (in >> tag) {
    if (tag == "iteration") {
      in >> iteration;
    } else if (tag == "seed") {
      in >> seed;
    } else if (tag == "array") {
      std::string key;
      Array array;
      if (!(in >> key >> array.rows >> array.cols) || array.rows < 0 || array.cols < 0)
        throw CompatibilityError("malformed checkpoint array header");
      array.values.resize(static_cast<std::size_t>(array.rows * array.cols));
      std::string token;
      for (auto& value : array.values) {
        if (!(in >> token)) throw CompatibilityError("truncated checkpoint array '" + key + "'");
        char* end = nullptr;
        value = std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size()) throw CompatibilityError("bad value in checkpoint array '" + key + "'");
      }
      arrays.emplace(std::move(key), std::move(array));
    } else {
      throw CompatibilityError("unexpected checkpoint entry '" + tag + "'");
    }
    if (!in) throw CompatibilityError("malformed checkpoint");
  }

  TrainerState state = initial_trainer_state(problem, config);
  read_tensors(arrays, "control", state.nets.control.inner);
  read_tensors(arrays, "value", state.nets.value.inner);
  read_tensors(arrays, "test", state.nets.test.eta);
  read_tensors(arrays, "opt.control", state.control_opt.mean_square);
  read_tensors(arrays, "opt.value", state.value_opt.mean_square);
  read_tensors(arrays, "opt.test", state.test_opt.mean_square);

  auto& ensemble = state.ensemble;
  const auto& n = require(arrays, "ensemble.n", 1, ensemble.size());
  const auto& z = require(arrays, "ensemble.z", problem.d, ensemble.size());
  for (int m = 0; m < ensemble.size(); ++m) {
    const double index = n.values[m];
    if (index < 0 || index > problem.N || index != static_cast<int>(index))
      throw CompatibilityError("checkpoint time index outside the configured grid");
    ensemble.time_index[m] = static_cast<int>(index);
  }
  for (Eigen::Index j = 0; j < ensemble.z.size(); ++j) ensemble.z.data()[j] = z.values[j];
  ensemble.iteration = iteration;
  ensemble.seed = seed;
  return state;
}

TrainerState load_checkpoint(const std::string& path, const MfgProblem& problem, const TrainerConfig& config) {
  std::ifstream in(path);
  if (!in) throw CompatibilityError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in, problem, config);
}

}  // namespace mfgpi
