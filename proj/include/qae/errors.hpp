#pragma once

#include <stdexcept>
#include <string>

namespace qae {

// Validation and runtime failures carry a dedicated type each so callers
// can catch precisely the condition they care about.

struct NonBinaryReward : std::invalid_argument {
  explicit NonBinaryReward(const std::string& what) : std::invalid_argument(what) {}
};

struct GroupTooSmall : std::invalid_argument {
  explicit GroupTooSmall(const std::string& what) : std::invalid_argument(what) {}
};

struct InvalidQuantile : std::invalid_argument {
  explicit InvalidQuantile(const std::string& what) : std::invalid_argument(what) {}
};

struct DivisionByZero : std::domain_error {
  explicit DivisionByZero(const std::string& what) : std::domain_error(what) {}
};

struct NonPositiveRatio : std::domain_error {
  explicit NonPositiveRatio(const std::string& what) : std::domain_error(what) {}
};

struct EmptyGroup : std::invalid_argument {
  explicit EmptyGroup(const std::string& what) : std::invalid_argument(what) {}
};

struct DegenerateP : std::domain_error {
  explicit DegenerateP(const std::string& what) : std::domain_error(what) {}
};

struct ModeUnsupported : std::invalid_argument {
  explicit ModeUnsupported(const std::string& what) : std::invalid_argument(what) {}
};

struct UniformPolicy : std::domain_error {
  explicit UniformPolicy(const std::string& what) : std::domain_error(what) {}
};

struct EmptyBatch : std::runtime_error {
  explicit EmptyBatch(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidCounts : std::invalid_argument {
  explicit InvalidCounts(const std::string& what) : std::invalid_argument(what) {}
};

struct SinkError : std::runtime_error {
  explicit SinkError(const std::string& what) : std::runtime_error(what) {}
};

// Raised while mapping a JSON config onto TrainConfig. `field` names the
// offending entry so the CLI can point at it.
struct ConfigError : std::invalid_argument {
  ConfigError(std::string field_, const std::string& what)
      : std::invalid_argument(what), field(std::move(field_)) {}
  std::string field;
};

}  // namespace qae
