#include "nmdr/optim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "nmdr/errors.hpp"
#include "nmdr/rng.hpp"

namespace nmdr {

namespace {
constexpr double kEps = 1e-7;
}

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "rmsprop") return OptimizerKind::RmsProp;
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "adadelta") return OptimizerKind::Adadelta;
  throw config_error("unknown optimizer: '" + name + "'");
}

const char* optimizer_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::RmsProp: return "rmsprop";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::Adadelta: return "adadelta";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs < 0) throw config_error("epochs must be >= 0");
  if (batch_size < 1) throw config_error("batch_size must be >= 1");
  if (restarts < 1) throw config_error("restarts must be >= 1");
  if (!(base_lr > 0.0)) throw config_error("base_lr must be positive");
  if (clr && clr->max_lr < base_lr) throw config_error("clr.max_lr must be >= base_lr");
  if (clr && clr->cycle_epochs < 1) throw config_error("clr.cycle_epochs must be >= 1");
  if (jobs < 1) throw config_error("jobs must be >= 1");
}

OptimizerState make_optimizer_state(OptimizerKind kind, Eigen::Index n) {
  OptimizerState s;
  s.kind = kind;
  switch (kind) {
    case OptimizerKind::Sgd:
      break;
    case OptimizerKind::RmsProp:
      s.v = Vector::Zero(n);
      break;
    case OptimizerKind::Adam:
      s.m = Vector::Zero(n);
      s.v = Vector::Zero(n);
      break;
    case OptimizerKind::Adadelta:
      s.v = Vector::Zero(n);
      s.m = Vector::Zero(n);
      break;
  }
  return s;
}

void optimizer_step(OptimizerState& state, Vector& weights, const Vector& grad, double lr) {
  if (!grad.allFinite()) throw numeric_error("non-finite gradient");
  switch (state.kind) {
    case OptimizerKind::Sgd:
      weights -= lr * grad;
      break;
    case OptimizerKind::RmsProp:
      state.v = 0.9 * state.v + 0.1 * grad.cwiseProduct(grad);
      weights.array() -= lr * grad.array() / (state.v.array().sqrt() + kEps);
      break;
    case OptimizerKind::Adam: {
      ++state.step;
      state.m = 0.9 * state.m + 0.1 * grad;
      state.v = 0.999 * state.v + 0.001 * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(0.9, static_cast<double>(state.step));
      const double c2 = 1.0 - std::pow(0.999, static_cast<double>(state.step));
      weights.array() -=
          lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + kEps);
      break;
    }
    case OptimizerKind::Adadelta: {
      state.v = 0.95 * state.v + 0.05 * grad.cwiseProduct(grad);
      const Vector delta =
          ((state.m.array() + kEps) / (state.v.array() + kEps)).sqrt() * grad.array();
      weights -= lr * delta;
      state.m = 0.95 * state.m + 0.05 * delta.cwiseProduct(delta);
      break;
    }
  }
}

double clr_lr(long iteration, double base_lr, const ClrConfig& clr, long steps_per_epoch) {
  const long half = std::max<long>(1, clr.cycle_epochs * steps_per_epoch);
  const long period = 2 * half;
  const long pos = iteration % period;
  const double frac = pos <= half ? static_cast<double>(pos) / static_cast<double>(half)
                                  : 2.0 - static_cast<double>(pos) / static_cast<double>(half);
  return base_lr + (clr.max_lr - base_lr) * frac;
}

FitResult train(CompiledModel& model, const BoundData& data, const TrainConfig& config) {
  config.validate();
  const Eigen::Index n = data.x.rows();
  if (n == 0) throw config_error("training data is empty");

  const long steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  OptimizerState state = make_optimizer_state(config.optimizer, model.num_weights());
  auto shuffle_rng = make_rng(config.seed, Stream::Shuffle);

  std::vector<Eigen::Index> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);

  FitResult result;
  result.seed = config.seed;
  const double xi = model.spec().entropy_xi;

  Vector grad(model.num_weights());
  long iteration = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(perm.begin(), perm.end(), shuffle_rng);
    const double lr_start = config.clr ? clr_lr(iteration, config.base_lr, *config.clr, steps_per_epoch)
                                       : config.base_lr;
    for (long step = 0; step < steps_per_epoch; ++step) {
      const Eigen::Index lo = static_cast<Eigen::Index>(step) * config.batch_size;
      const Eigen::Index hi = std::min<Eigen::Index>(n, lo + config.batch_size);
      IndexVec rows(perm.begin() + lo, perm.begin() + hi);
      const double bsz = static_cast<double>(rows.size());

      grad.setZero();
      try {
        // Per-observation scale: mean batch nll + penalty/n + xi * H(batch mean pi)/n,
        // the batch estimate of (sum nll + penalty + xi * H(mean pi)) / n.
        model.objective(data, rows,
                        EvalScales{1.0 / bsz, 1.0 / static_cast<double>(n),
                                   xi / static_cast<double>(n)},
                        &grad);
        const double lr = config.clr ? clr_lr(iteration, config.base_lr, *config.clr, steps_per_epoch)
                                     : config.base_lr;
        optimizer_step(state, model.weights(), grad, lr);
      } catch (const numeric_error& e) {
        throw divergence_error(std::string("training diverged: ") + e.what(),
                               result.risk_trajectory, epoch, static_cast<int>(step));
      } catch (const domain_error& e) {
        throw divergence_error(std::string("training diverged: ") + e.what(),
                               result.risk_trajectory, epoch, static_cast<int>(step));
      }
      ++iteration;
    }

    const double risk = model.penalized_risk(data);
    result.risk_trajectory.push_back(risk);
    result.lr_trajectory.push_back(lr_start);
    if (!std::isfinite(risk)) {
      throw divergence_error("training diverged: non-finite full-data risk",
                             result.risk_trajectory, epoch, -1);
    }
  }

  result.weights = model.weights();
  result.final_risk = result.risk_trajectory.empty() ? model.penalized_risk(data)
                                                     : result.risk_trajectory.back();
  result.train_field = model.forward(data);
  result.restarts.push_back(
      RestartSummary{config.seed, result.final_risk, false, result.risk_trajectory});
  return result;
}

FitResult multi_restart(const ModelFactory& factory, const BoundData& data,
                        const TrainConfig& config) {
  config.validate();
  const int r = config.restarts;
  std::vector<std::optional<FitResult>> fits(static_cast<size_t>(r));
  std::vector<RestartSummary> summaries(static_cast<size_t>(r));

  auto run_one = [&](int idx) {
    const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(idx);
    TrainConfig local = config;
    local.seed = seed;
    local.restarts = 1;
    CompiledModel model = factory(seed);
    try {
      FitResult fit = train(model, data, local);
      summaries[static_cast<size_t>(idx)] =
          RestartSummary{seed, fit.final_risk, false, fit.risk_trajectory};
      fits[static_cast<size_t>(idx)] = std::move(fit);
    } catch (const divergence_error& e) {
      summaries[static_cast<size_t>(idx)] = RestartSummary{seed, std::numeric_limits<double>::quiet_NaN(),
                                                           true, e.trajectory};
    }
  };

  const int jobs = std::min(config.jobs, r);
  if (jobs <= 1) {
    for (int i = 0; i < r; ++i) run_one(i);
  } else {
    std::vector<std::thread> workers;
    std::atomic<int> next{0};
    for (int t = 0; t < jobs; ++t) {
      workers.emplace_back([&]() {
        for (int i = next.fetch_add(1); i < r; i = next.fetch_add(1)) run_one(i);
      });
    }
    for (auto& w : workers) w.join();
  }

  int best = -1;
  for (int i = 0; i < r; ++i) {
    if (!fits[static_cast<size_t>(i)]) continue;
    if (best < 0 || fits[static_cast<size_t>(i)]->final_risk < fits[static_cast<size_t>(best)]->final_risk) {
      best = i;
    }
  }
  if (best < 0) {
    std::ostringstream os;
    os << "all " << r << " restarts diverged";
    throw divergence_error(os.str(), summaries.front().trajectory, -1, -1);
  }

  FitResult result = std::move(*fits[static_cast<size_t>(best)]);
  result.restarts = std::move(summaries);
  return result;
}

}  // namespace nmdr
