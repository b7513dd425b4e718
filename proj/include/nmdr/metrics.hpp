#pragma once

#include <string>
#include <vector>

#include "nmdr/mixture.hpp"
#include "nmdr/optim.hpp"

namespace nmdr {

// Train log-score (LS) and held-out predicted log-score (PLS) are the mixture
// nll on the respective split; this is deliberately the same code path.
double log_score(const CompiledModel& model, const BoundData& data);
double log_score(const std::vector<Family>& families, const Matrix& pi,
                 const std::vector<Matrix>& theta, const Vector& y);

// Per-component summary used for alignment and coefficient error: the mean
// mixture probability plus a flat coefficient vector (location coefficients,
// then scale values, by convention).
struct ComponentSummary {
  double pi = 0.0;
  Vector coefs;
};

// Minimal-cost assignment on a square cost matrix (Kuhn-Munkres with
// potentials); returns the column assigned to each row.
std::vector<int> min_cost_assignment(const Matrix& cost);

// Optimal matching of estimated to true components under squared distance on
// (pi, coefs). Sides of unequal size are padded with zero-probability,
// zero-coefficient dummies. Returns perm with perm[t] = estimated index
// matched to true component t (padded size).
std::vector<int> align_components(std::vector<ComponentSummary> est,
                                  std::vector<ComponentSummary> truth);

// Root mean squared error over all coefficient entries (resp. probability
// entries) after applying the alignment; padded slots count as zeros.
double coef_rmse(const std::vector<ComponentSummary>& est,
                 const std::vector<ComponentSummary>& truth, const std::vector<int>& perm);
double pi_rmse(const std::vector<ComponentSummary>& est,
               const std::vector<ComponentSummary>& truth, const std::vector<int>& perm);

struct EntropyPathRow {
  double xi = 0.0;
  Vector mean_pi;  // sorted descending
  bool diverged = false;
};

// Fits the model across an ascending xi grid, warm-starting each fit from the
// previous one (the first point gets the configured restarts). Diverged rows
// are flagged and the path continues from the last good weights.
std::vector<EntropyPathRow> entropy_path(const ModelSpec& base_spec, const Matrix& x,
                                         const Vector& y, const std::vector<double>& xi_grid,
                                         const TrainConfig& config);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

MeanSd mean_sd(const std::vector<double>& values);

}  // namespace nmdr
