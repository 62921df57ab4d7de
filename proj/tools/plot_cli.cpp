// SPDX-License-Identifier: Apache-2.0
// plot: train backbones, dump pair banks, run experiments and epsilon sweeps.
#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "plot/model_cache.hpp"
#include "plot/pipeline.hpp"

namespace fs = std::filesystem;
using namespace plot;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string &text) {
  std::vector<std::uint64_t> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const std::uint64_t lo = std::stoull(text.substr(0, dots));
    const std::uint64_t hi = std::stoull(text.substr(dots + 2));
    if (hi < lo)
      throw std::invalid_argument("seed range is empty: " + text);
    for (std::uint64_t s = lo; s <= hi; ++s)
      out.push_back(s);
    return out;
  }
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty())
      out.push_back(std::stoull(item));
  if (out.empty())
    throw std::invalid_argument("no seeds given");
  return out;
}

std::vector<double> parse_doubles(const std::string &text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty())
      out.push_back(std::stod(item));
  return out;
}

std::vector<std::string> parse_list(const std::string &text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty())
      out.push_back(item);
  return out;
}

std::string hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_file(const fs::path &path, const std::string &text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string csv_header(const std::string &hash, const std::string &extra = {}) {
  return "# plot " + std::string(kVersion) + " config " + hash + extra + "\n";
}

/// Runs @p job for every seed on up to @p threads workers. Returns failures.
template <typename Job>
std::vector<std::string> for_each_seed(const std::vector<std::uint64_t> &seeds, unsigned threads, Job &&job) {
  std::vector<std::string> failures;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        job(seeds[i]);
      } catch (const std::exception &e) {
        std::lock_guard<std::mutex> lock(mu);
        failures.push_back("seed " + std::to_string(seeds[i]) + ": " + e.what());
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(seeds.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t)
      pool.emplace_back(worker);
    for (std::thread &t : pool)
      t.join();
  }
  return failures;
}

int report(const std::vector<std::string> &failures) {
  for (const std::string &f : failures)
    std::cerr << "error: " << f << "\n";
  return failures.empty() ? 0 : 1;
}

struct Common {
  std::string experiment;
  std::string seeds = "0";
  int d = 16;
  std::string out = "plot_out";
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  bool train_if_missing = false;
  std::string cache;

  ModelCache cache_handle(bool train) const {
    return ModelCache(cache.empty() ? default_cache_dir() : fs::path(cache), train);
  }
};

void check_experiment(const std::string &e) {
  if (e != "heq" && e != "addition")
    throw CLI::ValidationError("experiment", "must be heq or addition");
}

// ---------------------------------------------------------------------------

int cmd_train(const Common &c) {
  check_experiment(c.experiment);
  const ModelCache cache = c.cache_handle(true);
  std::mutex io;
  return report(for_each_seed(parse_seeds(c.seeds), c.threads, [&](std::uint64_t seed) {
    if (c.experiment == "heq") {
      const HeqMlp m = cache.heq(seed);
      std::lock_guard<std::mutex> lock(io);
      std::cout << "seed=" << seed << " val_acc=" << m.metadata.value("validation_accuracy", 0.0)
                << " train_seed=" << m.metadata.value("train_seed", seed) << " checkpoint=" << cache.heq_path(seed)
                << "\n";
    } else {
      const GruAdder m = cache.adder(c.d, seed);
      std::lock_guard<std::mutex> lock(io);
      std::cout << "seed=" << seed << " d=" << c.d << " table_acc=" << adder_table_accuracy(m)
                << " checkpoint=" << cache.adder_path(c.d, seed) << "\n";
    }
  }));
}

int cmd_banks(const Common &c, const std::string &load) {
  check_experiment(c.experiment);
  if (!load.empty()) {
    std::ifstream in(load);
    if (!in)
      throw std::runtime_error("cannot read " + load);
    const nlohmann::json j = nlohmann::json::parse(in);
    const BankReport r = c.experiment == "heq" ? verify_bank(heq_banks_from_json(j))
                                               : verify_bank(adder_banks_from_json(j));
    for (const std::string &v : r.violations)
      std::cerr << "violation: " << v << "\n";
    std::cout << load << ": " << (r.ok ? "ok" : "FAILED") << "\n";
    return r.ok ? 0 : 1;
  }
  std::mutex io;
  return report(for_each_seed(parse_seeds(c.seeds), c.threads, [&](std::uint64_t seed) {
    nlohmann::json j;
    BankReport r;
    std::string sizes;
    if (c.experiment == "heq") {
      const HeqBanks b = gen_heq_banks(seed);
      r = verify_bank(b);
      j = to_json(b);
      sizes = std::to_string(b.fit.size()) + "/" + std::to_string(b.cal.size()) + "/" + std::to_string(b.test.size());
    } else {
      const AdderBanks b = gen_adder_banks(seed);
      r = verify_bank(b);
      j = to_json(b);
      sizes = std::to_string(b.fit.size()) + "/" + std::to_string(b.cal.size()) + "/" + std::to_string(b.test.size());
    }
    j["version"] = kVersion;
    const fs::path path = fs::path(c.out) / (c.experiment + "_banks_s" + std::to_string(seed) + ".json");
    write_file(path, j.dump());
    std::lock_guard<std::mutex> lock(io);
    for (const std::string &v : r.violations)
      std::cerr << "seed " << seed << " violation: " << v << "\n";
    std::cout << "seed=" << seed << " sizes=" << sizes << " verify=" << (r.ok ? "ok" : "FAILED") << " -> " << path
              << "\n";
    if (!r.ok)
      throw std::runtime_error("bank verification failed");
  }));
}

// ---------------------------------------------------------------------------

struct RunOptions {
  std::string methods;
  double eps = -1.0;
  std::string eps_sweep;
  bool normalize = false;
  bool normalize_set = false;
};

nlohmann::json run_config_json(const Common &c, const RunOptions &o, const std::vector<std::string> &methods,
                               double eps, bool normalize) {
  nlohmann::json j = {{"experiment", c.experiment}, {"methods", methods}, {"eps", eps}, {"normalize", normalize}};
  if (c.experiment == "addition")
    j["d"] = c.d;
  if (!o.eps_sweep.empty())
    j["eps_sweep"] = parse_doubles(o.eps_sweep);
  const DasTrainConfig das;
  j["das"] = {{"lr", das.lr}, {"max_epochs", das.max_epochs}, {"patience", das.patience}, {"batch", das.batch}};
  return j;
}

std::string file_safe(std::string name) {
  std::replace(name.begin(), name.end(), '=', '-');
  return name;
}

void emit_result(const fs::path &dir, const ExperimentResult &r, const std::string &hash) {
  nlohmann::json j = to_json(r);
  j["config_hash"] = hash;
  const std::string stem = r.experiment + "_" + r.method + "_s" + std::to_string(r.seed);
  write_file(dir / (stem + ".json"), j.dump(2));
  for (const auto &[name, m] : r.matrices)
    write_file(dir / "matrices" / (stem + "_" + file_safe(name) + ".csv"),
               csv_header(hash, " seed " + std::to_string(r.seed)) + matrix_to_csv(m));
}

int run_sweep(const Common &c, const std::vector<double> &grid, bool normalize, const std::string &hash) {
  if (c.experiment != "heq")
    throw CLI::ValidationError("eps-sweep", "only the heq experiment supports an epsilon sweep");
  const ModelCache cache = c.cache_handle(c.train_if_missing);
  const std::vector<std::uint64_t> seeds = parse_seeds(c.seeds);
  std::vector<std::vector<double>> table(seeds.size(), std::vector<double>(grid.size(), 0.0));
  const fs::path dir(c.out);
  const auto failures = for_each_seed(seeds, c.threads, [&](std::uint64_t seed) {
    const std::size_t row = static_cast<std::size_t>(std::find(seeds.begin(), seeds.end(), seed) - seeds.begin());
    const HeqMlp model = cache.heq(seed);
    const HeqBanks banks = gen_heq_banks(seed);
    for (std::size_t e = 0; e < grid.size(); ++e) {
      HeqPlotConfig cfg;
      cfg.eps = grid[e];
      cfg.normalize = normalize;
      ExperimentResult r = run_heq_plot(model, banks, cfg);
      r.method = "plot-eps" + std::to_string(grid[e]);
      table[row][e] = r.average();
    }
  });
  std::ostringstream os;
  os << csv_header(hash) << "eps,seeds,mean_average,std_average\n" << std::setprecision(10);
  for (std::size_t e = 0; e < grid.size(); ++e) {
    double mean = 0.0;
    for (const auto &r : table)
      mean += r[e];
    mean /= static_cast<double>(seeds.size());
    double var = 0.0;
    for (const auto &r : table)
      var += (r[e] - mean) * (r[e] - mean);
    const double sd = seeds.size() > 1 ? std::sqrt(var / static_cast<double>(seeds.size() - 1)) : 0.0;
    os << grid[e] << "," << seeds.size() << "," << mean << "," << sd << "\n";
  }
  write_file(dir / "heq_eps_sweep.csv", os.str());
  std::cout << os.str();
  return report(failures);
}

int cmd_run(const Common &c, const RunOptions &o) {
  check_experiment(c.experiment);
  const bool heq = c.experiment == "heq";
  const double eps = o.eps > 0.0 ? o.eps : (heq ? HeqPlotConfig{}.eps : AdditionConfig{}.eps);
  const bool normalize = o.normalize_set ? o.normalize : (heq ? HeqPlotConfig{}.normalize : AdditionConfig{}.normalize);
  std::vector<std::string> methods =
      parse_list(o.methods.empty() ? (heq ? "plot,das" : "plot,nat,pca,plot-das,full-das") : o.methods);
  for (std::string &m : methods) {
    if (heq) {
      if (m != "plot" && m != "das")
        throw CLI::ValidationError("methods", "heq methods are plot and das");
    } else {
      m = to_string(addition_method_from_string(m));
    }
  }
  const std::string hash = hex(fnv1a(run_config_json(c, o, methods, eps, normalize).dump()));
  if (!o.eps_sweep.empty())
    return run_sweep(c, parse_doubles(o.eps_sweep), normalize, hash);

  const ModelCache cache = c.cache_handle(c.train_if_missing);
  const fs::path dir(c.out);
  std::vector<ExperimentResult> results;
  std::mutex mu;
  const auto failures = for_each_seed(parse_seeds(c.seeds), c.threads, [&](std::uint64_t seed) {
    std::vector<ExperimentResult> local;
    if (heq) {
      const HeqMlp model = cache.heq(seed);
      const HeqBanks banks = gen_heq_banks(seed);
      for (const std::string &m : methods) {
        if (m == "plot") {
          HeqPlotConfig cfg;
          cfg.eps = eps;
          cfg.normalize = normalize;
          local.push_back(run_heq_plot(model, banks, cfg));
        } else {
          local.push_back(run_heq_das(model, banks));
        }
      }
    } else {
      const GruAdder model = cache.adder(c.d, seed);
      const AdderBanks banks = gen_adder_banks(seed);
      AdditionConfig cfg;
      cfg.eps = eps;
      cfg.normalize = normalize;
      for (const std::string &m : methods)
        local.push_back(run_addition_variant(model, banks, addition_method_from_string(m), cfg));
    }
    for (ExperimentResult &r : local) {
      r.details["d"] = heq ? 16 : c.d;
      emit_result(dir, r, hash);
    }
    std::lock_guard<std::mutex> lock(mu);
    for (ExperimentResult &r : local) {
      std::cout << r.experiment << " " << r.method << " seed=" << r.seed << " average=" << r.average()
                << " runtime_s=" << r.runtime_seconds << "\n";
      results.push_back(std::move(r));
    }
  });
  std::sort(results.begin(), results.end(), [&](const ExperimentResult &a, const ExperimentResult &b) {
    const auto ia = std::find(methods.begin(), methods.end(), a.method) - methods.begin();
    const auto ib = std::find(methods.begin(), methods.end(), b.method) - methods.begin();
    return ia != ib ? ia < ib : a.seed < b.seed;
  });
  if (!results.empty()) {
    const std::string tag = c.experiment + (heq ? "" : "_d" + std::to_string(c.d));
    write_file(dir / (tag + "_results.csv"), csv_header(hash) + results_to_csv(results));
    const std::string summary = summary_to_csv(results);
    write_file(dir / (tag + "_summary.csv"), csv_header(hash) + summary);
    std::cout << summary;
  }
  return report(failures);
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Progressive localization of causal variables with optimal transport"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Common common;
  RunOptions run;
  std::string load;

  auto add_common = [&](CLI::App *sub, bool with_experiment = true) {
    if (with_experiment)
      sub->add_option("experiment", common.experiment, "heq or addition")->required();
    sub->add_option("--seeds,--seed", common.seeds, "seed list: 3, 0,1,2 or 0..9");
    sub->add_option("--d", common.d, "GRU hidden size for addition")->check(CLI::IsMember({8, 16}));
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--threads", common.threads, "seeds processed in parallel")->check(CLI::PositiveNumber);
    sub->add_option("--cache", common.cache, "model cache directory (default $PLOT_CACHE_DIR or ./plot_cache)");
  };

  CLI::App *train = app.add_subcommand("train", "train (or load) backbones into the model cache");
  add_common(train);

  CLI::App *banks = app.add_subcommand("banks", "generate, verify and dump pair banks");
  add_common(banks);
  banks->add_option("--load", load, "verify an existing bank JSON instead of generating");

  auto add_run = [&](CLI::App *sub) {
    add_common(sub);
    sub->add_option("--eps", run.eps, "entropic regularisation")->check(CLI::PositiveNumber);
    sub->add_flag("--train-if-missing", common.train_if_missing, "train backbones that are not cached");
    sub->add_option_function<bool>(
        "--normalize", [&](bool v) { run.normalize = v; run.normalize_set = true; },
        "unit-normalise effect signatures (true/false)");
  };
  CLI::App *runc = app.add_subcommand("run", "run experiments and write JSON/CSV results");
  add_run(runc);
  runc->add_option("--methods", run.methods, "comma list (heq: plot,das; addition: plot,nat,pca,plot-das,full-das)");
  runc->add_option("--eps-sweep", run.eps_sweep, "comma list of eps values; writes an accuracy-vs-eps table");

  CLI::App *sweep = app.add_subcommand("eps-sweep", "HEQ PLOT accuracy across eps values");
  add_run(sweep);
  sweep->add_option("--grid", run.eps_sweep, "comma list of eps values")->default_str("1,2,4,8,16");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return cmd_train(common);
    if (banks->parsed())
      return cmd_banks(common, load);
    if (runc->parsed())
      return cmd_run(common, run);
    if (sweep->parsed()) {
      if (run.eps_sweep.empty())
        run.eps_sweep = "1,2,4,8,16";
      return cmd_run(common, run);
    }
  } catch (const CLI::Error &e) {
    return app.exit(e);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
