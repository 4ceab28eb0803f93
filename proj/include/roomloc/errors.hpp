#pragma once

#include <stdexcept>
#include <string>

namespace roomloc {

// Invalid numeric argument (non-positive volume, point outside the room, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Caller broke an interface contract (mismatched sample rates, empty input).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Unsupported configuration value; the message lists the valid options.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A calibration target cannot be met with physical parameters.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientDecayError : public std::runtime_error {
 public:
  InsufficientDecayError(const std::string& what, double achieved_floor_db)
      : std::runtime_error(what), achieved_floor_db_(achieved_floor_db) {}

  double achieved_floor_db() const noexcept { return achieved_floor_db_; }

 private:
  double achieved_floor_db_;
};

class NoDetectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnderdeterminedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace roomloc
