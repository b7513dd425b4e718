#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nmdr/em.hpp"
#include "nmdr/metrics.hpp"
#include "nmdr/mixture.hpp"
#include "nmdr/optim.hpp"
#include "nmdr/simgen.hpp"

namespace nmdr {

// Data source: exactly one of a CSV path or a seeded generator.
struct DataSpec {
  std::string csv_path;
  std::string truth_path;  // optional truth.json next to an external CSV

  std::string generator;  // linear_mixture | sparse_mixture | additive_mixture
  int n = 0;
  int components = 2;
  int p = 2;
  FamilyKind family = FamilyKind::Normal;
  PiCase pi_case = PiCase::Equal;
  int p_noise = 3;
  double scale = 2.0;
  std::uint64_t seed = 1;
};

struct EvalSpec {
  int replications = 1;
  double test_fraction = 0.0;
  bool em_baseline = false;
  int em_restarts = 20;
  int em_max_iter = 500;
  double em_tol = 1e-8;
};

struct SweepSpec {
  std::vector<std::string> optimizers{"sgd", "rmsprop", "adam", "adadelta"};
  std::vector<double> lrs{0.01, 0.1};
  bool clr = true;
};

struct ExperimentConfig {
  std::string name;
  DataSpec data;
  ModelSpec model_template;   // penalties/xi/gating kind; components built later
  std::string raw_model;      // model JSON; feature lists resolve against the data width
  TrainConfig train;
  EvalSpec eval;
  std::vector<double> xi_grid;
  SweepSpec sweep;
  std::string warm_start_path;
};

ExperimentConfig load_config(const std::string& path);

// Resolved dataset (either read or generated) with optional ground truth.
struct Dataset {
  Matrix x;
  Vector y;
  std::optional<SimTruth> truth;
};

Dataset load_dataset(const DataSpec& spec);

// Seeded train/test split; test_fraction 0 keeps everything in train.
struct Split {
  Matrix x_train, x_test;
  Vector y_train, y_test;
  IndexVec train_rows, test_rows;
};

Split split_dataset(const Matrix& x, const Vector& y, double test_fraction, std::uint64_t seed);

// Model spec against a concrete feature count ("all"-feature terms resolved).
ModelSpec build_model_spec(const ExperimentConfig& config, int p);

// Component summaries for alignment-based metrics on linear designs.
std::vector<ComponentSummary> summarize_fitted_components(const CompiledModel& model,
                                                          const ParamField& field);
std::vector<ComponentSummary> summarize_truth_components(const SimTruth& truth);

// Subcommand implementations; all files below `out_dir` are deterministic
// given the config (and --jobs 1 where concurrency applies).
void cmd_simulate(const ExperimentConfig& config, const std::string& out_dir);
void cmd_fit(const ExperimentConfig& config, const std::string& out_dir);
void cmd_evaluate(const ExperimentConfig& config, const std::string& out_dir,
                  const std::string& fit_path);
void cmd_path(const ExperimentConfig& config, const std::string& out_dir);
void cmd_sweep(const ExperimentConfig& config, const std::string& out_dir);

int run_cli(int argc, char** argv);

}  // namespace nmdr
