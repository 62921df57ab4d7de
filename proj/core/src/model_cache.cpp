// SPDX-License-Identifier: Apache-2.0
#include "plot/model_cache.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "plot/numerics.hpp"

namespace plot {

std::uint64_t derived_train_seed(std::uint64_t seed, int attempt) {
  if (attempt < 0)
    throw std::invalid_argument("derived_train_seed: negative attempt");
  if (attempt == 0)
    return seed;
  return splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(attempt)));
}

namespace {

template <typename Train> auto with_retries(std::uint64_t seed, const RetryPolicy &policy, Train &&train) {
  if (policy.max_attempts < 1)
    throw std::invalid_argument("retry policy: max_attempts must be positive");
  for (int attempt = 0;; ++attempt) {
    const std::uint64_t train_seed = derived_train_seed(seed, attempt);
    try {
      auto model = train(train_seed);
      model.metadata["experiment_seed"] = seed;
      model.metadata["train_seed"] = train_seed;
      model.metadata["attempts"] = attempt + 1;
      return model;
    } catch (const TrainingFailure &) {
      if (attempt + 1 >= policy.max_attempts)
        throw;
    }
  }
}

std::string hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

template <typename Model> Model load_model(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot read " + path.string());
  return Model::from_json(nlohmann::json::parse(in));
}

void store_model(const std::filesystem::path &path, const NeuralModel &model) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out)
      throw std::runtime_error("cannot write " + tmp.string());
    out << model.to_json().dump();
  }
  std::filesystem::rename(tmp, path);
}

} // namespace

HeqMlp train_heq_with_retries(std::uint64_t seed, const HeqTrainConfig &config, const RetryPolicy &policy) {
  return with_retries(seed, policy, [&](std::uint64_t s) { return train_heq_mlp(s, config).model; });
}

GruAdder train_adder_with_retries(int hidden, std::uint64_t seed, const GruTrainConfig &config,
                                  const RetryPolicy &policy) {
  return with_retries(seed, policy, [&](std::uint64_t s) { return train_gru_adder(hidden, s, config).model; });
}

std::string config_hash(const HeqTrainConfig &c) {
  const nlohmann::json j = {{"examples", c.examples}, {"epochs", c.epochs},         {"batch", c.batch},
                            {"lr", c.lr},             {"validation", c.validation}, {"version", 1}};
  return hex(fnv1a(j.dump()));
}

std::string config_hash(int hidden, const GruTrainConfig &c) {
  const nlohmann::json j = {
      {"hidden", hidden}, {"epochs", c.epochs}, {"batch", c.batch}, {"lr", c.lr}, {"version", 1}};
  return hex(fnv1a(j.dump()));
}

std::filesystem::path default_cache_dir() {
  if (const char *env = std::getenv("PLOT_CACHE_DIR"); env && *env)
    return env;
  return "plot_cache";
}

ModelCache::ModelCache(std::filesystem::path dir, bool train_if_missing)
    : dir_(std::move(dir)), train_if_missing_(train_if_missing) {}

std::filesystem::path ModelCache::heq_path(std::uint64_t seed, const HeqTrainConfig &config) const {
  return dir_ / ("heq_s" + std::to_string(seed) + "_" + config_hash(config) + ".json");
}

std::filesystem::path ModelCache::adder_path(int hidden, std::uint64_t seed, const GruTrainConfig &config) const {
  return dir_ / ("adder_d" + std::to_string(hidden) + "_s" + std::to_string(seed) + "_" +
                 config_hash(hidden, config) + ".json");
}

HeqMlp ModelCache::heq(std::uint64_t seed, const HeqTrainConfig &config, const RetryPolicy &policy) const {
  const std::filesystem::path path = heq_path(seed, config);
  if (std::filesystem::exists(path))
    return load_model<HeqMlp>(path);
  if (!train_if_missing_)
    throw std::runtime_error("no cached HEQ model at " + path.string());
  HeqMlp model = train_heq_with_retries(seed, config, policy);
  store_model(path, model);
  return model;
}

GruAdder ModelCache::adder(int hidden, std::uint64_t seed, const GruTrainConfig &config,
                           const RetryPolicy &policy) const {
  const std::filesystem::path path = adder_path(hidden, seed, config);
  if (std::filesystem::exists(path))
    return load_model<GruAdder>(path);
  if (!train_if_missing_)
    throw std::runtime_error("no cached adder model at " + path.string());
  GruAdder model = train_adder_with_retries(hidden, seed, config, policy);
  store_model(path, model);
  return model;
}

} // namespace plot
