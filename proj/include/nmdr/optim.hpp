#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nmdr/mixture.hpp"

namespace nmdr {

enum class OptimizerKind { Sgd, RmsProp, Adam, Adadelta };

OptimizerKind optimizer_from_name(const std::string& name);
const char* optimizer_name(OptimizerKind kind);

// Triangular cyclical learning rate: base -> max over cycle_epochs, back to
// base over the next cycle_epochs.
struct ClrConfig {
  double max_lr = 0.5;
  int cycle_epochs = 100;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::RmsProp;
  double base_lr = 0.1;
  std::optional<ClrConfig> clr;
  int epochs = 1500;
  int batch_size = 50;
  int restarts = 1;
  std::uint64_t seed = 1;
  bool shuffle = true;
  int jobs = 1;  // worker bound for independent restarts

  void validate() const;
};

// Per-weight accumulators; shapes mirror the flat weight vector.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Sgd;
  Vector v;  // rmsprop/adam/adadelta squared-gradient EMA (adam: 2nd moment)
  Vector m;  // adam 1st moment; adadelta squared-update EMA
  long step = 0;
};

OptimizerState make_optimizer_state(OptimizerKind kind, Eigen::Index n);

// One update with the published equations (rmsprop decay 0.9, adam
// beta=(0.9,0.999), adadelta decay 0.95, all eps=1e-7). Throws numeric_error
// on a non-finite gradient.
void optimizer_step(OptimizerState& state, Vector& weights, const Vector& grad, double lr);

// Learning rate at a 0-based iteration; period 2 * cycle_epochs converted to
// iterations, lr(0) = base, peak at half-period.
double clr_lr(long iteration, double base_lr, const ClrConfig& clr, long steps_per_epoch);

struct RestartSummary {
  std::uint64_t seed = 0;
  double final_risk = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
  std::vector<double> trajectory;
};

struct FitResult {
  Vector weights;
  std::vector<double> risk_trajectory;  // full-data penalized risk, one entry per epoch
  std::vector<double> lr_trajectory;    // lr at the first step of each epoch
  double final_risk = 0.0;
  ParamField train_field;
  std::uint64_t seed = 0;
  std::vector<RestartSummary> restarts;
};

// Mini-batch training of the penalized per-observation risk. Batches are
// drawn from a seeded full permutation per epoch (short final batch kept);
// the recorded trajectory is the full-data penalized risk after each epoch.
// Throws divergence_error (with the trajectory so far) when that risk or a
// batch gradient becomes non-finite. Deterministic given config.seed.
FitResult train(CompiledModel& model, const BoundData& data, const TrainConfig& config);

// Independent seeded restarts (seed, seed+1, ...); returns the fit with the
// lowest final full-data penalized risk and keeps every restart's trajectory.
// The factory must produce a freshly initialized model for a given seed.
using ModelFactory = std::function<CompiledModel(std::uint64_t seed)>;

FitResult multi_restart(const ModelFactory& factory, const BoundData& data,
                        const TrainConfig& config);

}  // namespace nmdr
