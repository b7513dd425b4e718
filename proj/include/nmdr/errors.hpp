#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nmdr {

// Invalid model/experiment configuration (bad term sizes, unattainable df, ...).
class config_error : public std::runtime_error {
public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A distribution parameter left its domain.
class domain_error : public std::runtime_error {
public:
  explicit domain_error(const std::string& msg) : std::runtime_error(msg) {}
};

// An observation outside the support of the family.
class support_error : public std::runtime_error {
public:
  explicit support_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required.
class numeric_error : public std::runtime_error {
public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data (CSV parsing, missing columns, ...).
class data_error : public std::runtime_error {
public:
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite risk. Carries the trajectory up to the
// epoch where the divergence was detected.
class divergence_error : public std::runtime_error {
public:
  divergence_error(const std::string& msg, std::vector<double> trajectory,
                   int epoch, int batch)
      : std::runtime_error(msg),
        trajectory(std::move(trajectory)),
        epoch(epoch),
        batch(batch) {}

  std::vector<double> trajectory;
  int epoch = -1;
  int batch = -1;
};

}  // namespace nmdr
