#include "mpctune/configspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mpctune {

namespace {

using nlohmann::json;

bool is_identifier_safe(const std::string& s) {
  return s.find_first_of(";=\n\r,") == std::string::npos && !s.empty();
}

double round_half_up(double x) { return std::floor(x + 0.5); }

json value_to_json(const ParamValue& v) {
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  if (std::holds_alternative<std::int64_t>(v)) return std::get<std::int64_t>(v);
  return std::get<std::string>(v);
}

ParamValue value_from_json(const json& j) {
  if (j.is_number_float()) return j.get<double>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_string()) return j.get<std::string>();
  throw std::invalid_argument("unsupported value type in document");
}

}  // namespace

std::string to_string(const ParamValue& v) {
  if (std::holds_alternative<double>(v)) return fmt17(std::get<double>(v));
  if (std::holds_alternative<std::int64_t>(v))
    return std::to_string(std::get<std::int64_t>(v));
  return std::get<std::string>(v);
}

std::string param_kind_name(ParamKind k) {
  switch (k) {
    case ParamKind::Continuous: return "continuous";
    case ParamKind::Integer: return "integer";
    case ParamKind::Categorical: return "categorical";
  }
  return "?";
}

ConfigError::ConfigError(std::vector<Violation> v)
    : std::runtime_error([&v] {
        std::ostringstream os;
        os << "invalid configuration:";
        for (const auto& x : v) os << " [" << x.param << ": " << x.rule << "]";
        return os.str();
      }()),
      violations(std::move(v)) {}

ConfigurationSpace::ConfigurationSpace(std::string name,
                                       std::vector<HyperparameterSpec> specs)
    : name_(std::move(name)), specs_(std::move(specs)) {
  if (specs_.empty()) throw std::invalid_argument("space has no hyperparameters");
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    if (!is_identifier_safe(s.name))
      throw std::invalid_argument("bad hyperparameter name: '" + s.name + "'");
    if (index_.count(s.name))
      throw std::invalid_argument("duplicate hyperparameter name: " + s.name);
    if (s.kind == ParamKind::Categorical) {
      if (s.choices.size() < 2)
        throw std::invalid_argument(s.name + ": categorical needs >= 2 choices");
      std::vector<std::string> sorted = s.choices;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument(s.name + ": duplicate choices");
      for (const auto& c : s.choices)
        if (!is_identifier_safe(c))
          throw std::invalid_argument(s.name + ": bad choice label '" + c + "'");
      if (!std::holds_alternative<std::string>(s.default_value) ||
          std::find(s.choices.begin(), s.choices.end(),
                    std::get<std::string>(s.default_value)) == s.choices.end())
        throw std::invalid_argument(s.name + ": default is not one of the choices");
    } else {
      if (!(s.lo < s.hi))
        throw std::invalid_argument(s.name + ": requires lo < hi");
      if (s.log_scale && !(s.lo > 0.0))
        throw std::invalid_argument(s.name + ": log scale requires lo > 0");
      if (s.kind == ParamKind::Integer &&
          (s.lo != std::floor(s.lo) || s.hi != std::floor(s.hi)))
        throw std::invalid_argument(s.name + ": integer bounds must be integral");
      const bool ok_default =
          s.kind == ParamKind::Integer
              ? std::holds_alternative<std::int64_t>(s.default_value) &&
                    static_cast<double>(std::get<std::int64_t>(s.default_value)) >= s.lo &&
                    static_cast<double>(std::get<std::int64_t>(s.default_value)) <= s.hi
              : std::holds_alternative<double>(s.default_value) &&
                    std::get<double>(s.default_value) >= s.lo &&
                    std::get<double>(s.default_value) <= s.hi;
      if (!ok_default)
        throw std::invalid_argument(s.name + ": default out of bounds or wrong type");
    }
    if (s.condition) {
      const auto it = index_.find(s.condition->parent);
      if (it == index_.end())
        throw std::invalid_argument(s.name + ": condition parent '" +
                                    s.condition->parent +
                                    "' not declared earlier in the space");
      const auto& parent = specs_[static_cast<std::size_t>(it->second)];
      if (parent.kind != ParamKind::Categorical)
        throw std::invalid_argument(s.name + ": condition parent must be categorical");
      if (s.condition->values.empty())
        throw std::invalid_argument(s.name + ": empty activation set");
      for (const auto& v : s.condition->values)
        if (std::find(parent.choices.begin(), parent.choices.end(), v) ==
            parent.choices.end())
          throw std::invalid_argument(s.name + ": activation value '" + v +
                                      "' is not a parent choice");
    }
    index_[s.name] = static_cast<int>(i);
  }
  offsets_.resize(specs_.size());
  std::size_t off = 0;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    offsets_[i] = off;
    off += slot_width(i);
  }
  encoding_dim_ = off;
}

int ConfigurationSpace::index_of(const std::string& param) const {
  const auto it = index_.find(param);
  return it == index_.end() ? -1 : it->second;
}

const HyperparameterSpec& ConfigurationSpace::spec(const std::string& param) const {
  const int i = index_of(param);
  if (i < 0) throw std::invalid_argument("unknown hyperparameter: " + param);
  return specs_[static_cast<std::size_t>(i)];
}

std::size_t ConfigurationSpace::slot_width(std::size_t spec_index) const {
  const auto& s = specs_[spec_index];
  return s.kind == ParamKind::Categorical ? s.choices.size() : 1;
}

bool ConfigurationSpace::is_active(
    std::size_t spec_index, const std::map<std::string, ParamValue>& values) const {
  const auto& s = specs_[spec_index];
  if (!s.condition) return true;
  const auto it = values.find(s.condition->parent);
  if (it == values.end()) return false;
  if (!std::holds_alternative<std::string>(it->second)) return false;
  const auto& v = std::get<std::string>(it->second);
  return std::find(s.condition->values.begin(), s.condition->values.end(), v) !=
         s.condition->values.end();
}

Configuration sample(const ConfigurationSpace& space, std::uint64_t seed) {
  Rng rng(seed);
  return sample(space, rng);
}

Configuration sample(const ConfigurationSpace& space, Rng& rng) {
  Configuration c;
  c.space_name = space.name();
  const auto& specs = space.specs();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!space.is_active(i, c.values)) continue;
    const auto& s = specs[i];
    switch (s.kind) {
      case ParamKind::Continuous:
        c.values[s.name] = s.log_scale ? rng.log_uniform(s.lo, s.hi)
                                       : rng.uniform(s.lo, s.hi);
        break;
      case ParamKind::Integer: {
        double v;
        if (s.log_scale) {
          v = round_half_up(rng.log_uniform(s.lo, s.hi));
          v = std::clamp(v, s.lo, s.hi);
        } else {
          v = static_cast<double>(rng.uniform_int(static_cast<std::int64_t>(s.lo),
                                                  static_cast<std::int64_t>(s.hi)));
        }
        c.values[s.name] = static_cast<std::int64_t>(v);
        break;
      }
      case ParamKind::Categorical: {
        const auto k = static_cast<std::int64_t>(s.choices.size());
        c.values[s.name] = s.choices[static_cast<std::size_t>(rng.uniform_int(0, k - 1))];
        break;
      }
    }
  }
  return c;
}

std::vector<Violation> validate(const ConfigurationSpace& space,
                                const Configuration& config) {
  std::vector<Violation> out;
  if (config.space_name != space.name())
    out.push_back({"(space)", "space-mismatch",
                   config.space_name + " != " + space.name()});
  for (const auto& [name, value] : config.values) {
    const int idx = space.index_of(name);
    if (idx < 0) {
      out.push_back({name, "unknown-parameter", ""});
      continue;
    }
    const auto& s = space.specs()[static_cast<std::size_t>(idx)];
    switch (s.kind) {
      case ParamKind::Continuous: {
        if (!std::holds_alternative<double>(value)) {
          out.push_back({name, "wrong-type", "expected continuous"});
          break;
        }
        const double v = std::get<double>(value);
        if (!std::isfinite(v) || v < s.lo || v > s.hi)
          out.push_back({name, "out-of-bounds",
                         to_string(value) + " not in [" + fmt17(s.lo) + ", " +
                             fmt17(s.hi) + "]"});
        break;
      }
      case ParamKind::Integer: {
        if (!std::holds_alternative<std::int64_t>(value)) {
          out.push_back({name, "wrong-type", "expected integer"});
          break;
        }
        const auto v = static_cast<double>(std::get<std::int64_t>(value));
        if (v < s.lo || v > s.hi)
          out.push_back({name, "out-of-bounds",
                         to_string(value) + " not in [" + fmt17(s.lo) + ", " +
                             fmt17(s.hi) + "]"});
        break;
      }
      case ParamKind::Categorical: {
        if (!std::holds_alternative<std::string>(value)) {
          out.push_back({name, "wrong-type", "expected categorical"});
          break;
        }
        const auto& v = std::get<std::string>(value);
        if (std::find(s.choices.begin(), s.choices.end(), v) == s.choices.end())
          out.push_back({name, "not-a-choice", v});
        break;
      }
    }
  }
  const auto& specs = space.specs();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const bool active = space.is_active(i, config.values);
    const bool present = config.values.count(specs[i].name) > 0;
    if (active && !present) out.push_back({specs[i].name, "missing-active", ""});
    if (!active && present) out.push_back({specs[i].name, "inactive-present", ""});
  }
  return out;
}

Eigen::VectorXd encode(const ConfigurationSpace& space, const Configuration& config) {
  auto violations = validate(space, config);
  if (!violations.empty()) throw ConfigError(std::move(violations));

  Eigen::VectorXd out = Eigen::VectorXd::Constant(
      static_cast<Eigen::Index>(space.encoding_dim()), kInactiveSlot);
  const auto& specs = space.specs();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!space.is_active(i, config.values)) continue;
    const auto& s = specs[i];
    const auto off = static_cast<Eigen::Index>(space.slot_offset(i));
    const ParamValue& value = config.values.at(s.name);
    switch (s.kind) {
      case ParamKind::Continuous:
      case ParamKind::Categorical: {
        if (s.kind == ParamKind::Categorical) {
          const auto& v = std::get<std::string>(value);
          for (std::size_t c = 0; c < s.choices.size(); ++c)
            out[off + static_cast<Eigen::Index>(c)] = (s.choices[c] == v) ? 1.0 : 0.0;
        } else {
          const double v = std::get<double>(value);
          out[off] = s.log_scale
                         ? (std::log(v) - std::log(s.lo)) / (std::log(s.hi) - std::log(s.lo))
                         : (v - s.lo) / (s.hi - s.lo);
        }
        break;
      }
      case ParamKind::Integer: {
        const auto v = static_cast<double>(std::get<std::int64_t>(value));
        out[off] = s.log_scale
                       ? (std::log(v) - std::log(s.lo)) / (std::log(s.hi) - std::log(s.lo))
                       : (v - s.lo) / (s.hi - s.lo);
        break;
      }
    }
  }
  return out;
}

Configuration decode(const ConfigurationSpace& space, const Eigen::VectorXd& vec) {
  if (static_cast<std::size_t>(vec.size()) != space.encoding_dim())
    throw std::invalid_argument("encoding dimensionality mismatch: got " +
                                std::to_string(vec.size()) + ", expected " +
                                std::to_string(space.encoding_dim()));
  Configuration c;
  c.space_name = space.name();
  const auto& specs = space.specs();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!space.is_active(i, c.values)) continue;
    const auto& s = specs[i];
    const auto off = static_cast<Eigen::Index>(space.slot_offset(i));
    switch (s.kind) {
      case ParamKind::Categorical: {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < static_cast<Eigen::Index>(s.choices.size()); ++k)
          if (vec[off + k] > vec[off + best]) best = k;
        c.values[s.name] = s.choices[static_cast<std::size_t>(best)];
        break;
      }
      case ParamKind::Continuous: {
        const double t = std::clamp(vec[off], 0.0, 1.0);
        double v = s.log_scale
                       ? std::exp(std::log(s.lo) + t * (std::log(s.hi) - std::log(s.lo)))
                       : s.lo + t * (s.hi - s.lo);
        c.values[s.name] = std::clamp(v, s.lo, s.hi);
        break;
      }
      case ParamKind::Integer: {
        const double t = std::clamp(vec[off], 0.0, 1.0);
        double v = s.log_scale
                       ? std::exp(std::log(s.lo) + t * (std::log(s.hi) - std::log(s.lo)))
                       : s.lo + t * (s.hi - s.lo);
        v = std::clamp(round_half_up(v), s.lo, s.hi);
        c.values[s.name] = static_cast<std::int64_t>(v);
        break;
      }
    }
  }
  return c;
}

namespace {

json space_to_json(const ConfigurationSpace& space) {
  json j;
  j["name"] = space.name();
  j["specs"] = json::array();
  for (const auto& s : space.specs()) {
    json js;
    js["name"] = s.name;
    js["kind"] = param_kind_name(s.kind);
    if (s.kind == ParamKind::Categorical) {
      js["choices"] = s.choices;
    } else {
      js["bounds"] = {s.lo, s.hi};
      js["log_scale"] = s.log_scale;
    }
    js["default"] = value_to_json(s.default_value);
    if (s.condition) {
      js["condition"] = {{"parent", s.condition->parent},
                         {"values", s.condition->values}};
    }
    j["specs"].push_back(std::move(js));
  }
  return j;
}

ConfigurationSpace space_from_json(const json& j) {
  std::vector<HyperparameterSpec> specs;
  for (const auto& js : j.at("specs")) {
    HyperparameterSpec s;
    s.name = js.at("name").get<std::string>();
    const auto kind = js.at("kind").get<std::string>();
    if (kind == "continuous") s.kind = ParamKind::Continuous;
    else if (kind == "integer") s.kind = ParamKind::Integer;
    else if (kind == "categorical") s.kind = ParamKind::Categorical;
    else throw std::invalid_argument("unknown kind: " + kind);
    if (s.kind == ParamKind::Categorical) {
      s.choices = js.at("choices").get<std::vector<std::string>>();
    } else {
      s.lo = js.at("bounds").at(0).get<double>();
      s.hi = js.at("bounds").at(1).get<double>();
      s.log_scale = js.value("log_scale", false);
    }
    s.default_value = value_from_json(js.at("default"));
    if (js.contains("condition")) {
      Condition c;
      c.parent = js.at("condition").at("parent").get<std::string>();
      c.values = js.at("condition").at("values").get<std::vector<std::string>>();
      s.condition = std::move(c);
    }
    specs.push_back(std::move(s));
  }
  return ConfigurationSpace(j.at("name").get<std::string>(), std::move(specs));
}

}  // namespace

std::string space_to_json_text(const ConfigurationSpace& space) {
  return space_to_json(space).dump(2) + "\n";
}

ConfigurationSpace space_from_json_text(const std::string& text) {
  return space_from_json(json::parse(text));
}

ConfigurationSpace load_space(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open space file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return space_from_json_text(ss.str());
}

void save_space(const ConfigurationSpace& space, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write space file: " + path.string());
  out << space_to_json_text(space);
}

std::string to_flat_string(const Configuration& config) {
  std::string out;
  for (const auto& [name, value] : config.values) {
    if (!out.empty()) out += ';';
    out += name;
    out += '=';
    out += to_string(value);
  }
  return out;
}

Configuration from_flat_string(const ConfigurationSpace& space, const std::string& flat) {
  Configuration c;
  c.space_name = space.name();
  std::size_t pos = 0;
  while (pos < flat.size()) {
    auto end = flat.find(';', pos);
    if (end == std::string::npos) end = flat.size();
    const std::string item = flat.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("malformed flat configuration item: " + item);
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    const auto& s = space.spec(key);
    switch (s.kind) {
      case ParamKind::Continuous: c.values[key] = std::stod(val); break;
      case ParamKind::Integer: c.values[key] = static_cast<std::int64_t>(std::stoll(val)); break;
      case ParamKind::Categorical: c.values[key] = val; break;
    }
  }
  return c;
}

std::string config_to_json_text(const Configuration& config) {
  json j;
  j["space"] = config.space_name;
  j["values"] = json::object();
  for (const auto& [name, value] : config.values)
    j["values"][name] = value_to_json(value);
  return j.dump(2) + "\n";
}

Configuration config_from_json_text(const std::string& text) {
  const json j = json::parse(text);
  Configuration c;
  c.space_name = j.at("space").get<std::string>();
  for (const auto& [key, value] : j.at("values").items())
    c.values[key] = value_from_json(value);
  return c;
}

}  // namespace mpctune
