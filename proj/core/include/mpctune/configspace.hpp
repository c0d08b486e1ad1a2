// Hierarchical hyperparameter search space: a flat, ordered list of typed
// hyperparameters where a child can be gated on the value of an earlier
// categorical parent. Configurations carry exactly the active parameters.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mpctune/util.hpp"

namespace mpctune {

using ParamValue = std::variant<double, std::int64_t, std::string>;

enum class ParamKind { Continuous, Integer, Categorical };

std::string to_string(const ParamValue& v);
std::string param_kind_name(ParamKind k);

// Child is active iff the parent's value is in `values`. Single parent only.
struct Condition {
  std::string parent;
  std::vector<std::string> values;
};

struct HyperparameterSpec {
  std::string name;
  ParamKind kind = ParamKind::Continuous;
  double lo = 0.0;  // numeric kinds; integer bounds are integral-valued
  double hi = 0.0;
  bool log_scale = false;
  std::vector<std::string> choices;  // categorical only
  ParamValue default_value;
  std::optional<Condition> condition;
};

struct Configuration {
  std::map<std::string, ParamValue> values;
  std::string space_name;

  bool operator==(const Configuration& other) const {
    return space_name == other.space_name && values == other.values;
  }
};

struct Violation {
  std::string param;
  std::string rule;
  std::string detail;
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(std::vector<Violation> v);
  std::vector<Violation> violations;
};

// Validated at construction: unique names, legal bounds/choices/defaults, and
// every condition referring to an earlier categorical parameter (so the list
// order is already a topological order of the condition DAG).
class ConfigurationSpace {
 public:
  ConfigurationSpace(std::string name, std::vector<HyperparameterSpec> specs);

  const std::string& name() const { return name_; }
  const std::vector<HyperparameterSpec>& specs() const { return specs_; }
  int index_of(const std::string& param) const;  // -1 when absent
  const HyperparameterSpec& spec(const std::string& param) const;

  // Encoded feature-vector layout: one slot per numeric parameter, one-hot
  // block per categorical, in declaration order; constant across configs.
  std::size_t encoding_dim() const { return encoding_dim_; }
  std::size_t slot_offset(std::size_t spec_index) const { return offsets_[spec_index]; }
  std::size_t slot_width(std::size_t spec_index) const;

  // Activity of specs_[i] given the parent values present in `values`.
  bool is_active(std::size_t spec_index,
                 const std::map<std::string, ParamValue>& values) const;

 private:
  std::string name_;
  std::vector<HyperparameterSpec> specs_;
  std::map<std::string, int> index_;
  std::vector<std::size_t> offsets_;
  std::size_t encoding_dim_ = 0;
};

// Deterministic in the seed. Inactive children are omitted; log-scale numeric
// parameters are drawn uniformly in log space.
Configuration sample(const ConfigurationSpace& space, std::uint64_t seed);
Configuration sample(const ConfigurationSpace& space, Rng& rng);

std::vector<Violation> validate(const ConfigurationSpace& space, const Configuration& config);

// Numeric slots scaled to [0,1] (after log transform when log_scale),
// categorical one-hot, inactive slots filled with the sentinel -1.
inline constexpr double kInactiveSlot = -1.0;
Eigen::VectorXd encode(const ConfigurationSpace& space, const Configuration& config);
// Inverse on the image of encode: values clamped into bounds, integers rounded
// half-up, sentinel slots dropped via the decoded parents' activity.
Configuration decode(const ConfigurationSpace& space, const Eigen::VectorXd& vec);

// Space definition document (JSON), lossless round-trip.
ConfigurationSpace load_space(const std::filesystem::path& path);
ConfigurationSpace space_from_json_text(const std::string& text);
std::string space_to_json_text(const ConfigurationSpace& space);
void save_space(const ConfigurationSpace& space, const std::filesystem::path& path);

// Flat "k=v;k=v" form used in trace files. Keys sorted (std::map order);
// doubles printed with 17 significant digits.
std::string to_flat_string(const Configuration& config);
Configuration from_flat_string(const ConfigurationSpace& space, const std::string& flat);

std::string config_to_json_text(const Configuration& config);
Configuration config_from_json_text(const std::string& text);

}  // namespace mpctune
