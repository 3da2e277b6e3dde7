#pragma once

// Experiment orchestration: JSON configuration with materialized defaults,
// deterministic CSV output and a manifest recording seeds and file digests.

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "meanfield/chaos.hpp"
#include "meanfield/core.hpp"
#include "meanfield/dynamics.hpp"
#include "meanfield/hierarchy.hpp"
#include "meanfield/kernels.hpp"
#include "meanfield/quantum.hpp"
#include "meanfield/rng.hpp"
#include "meanfield/transport.hpp"

namespace meanfield::harness {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "meanfield 0.1.0";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row_strings(header); }

  CsvWriter& cell(double v) { return push(format_double(v)); }
  CsvWriter& cell(std::size_t v) { return push(std::to_string(v)); }
  CsvWriter& cell(int v) { return push(std::to_string(v)); }
  CsvWriter& cell(bool v) { return push(v ? "1" : "0"); }
  CsvWriter& cell(const std::string& v) { return push(v); }
  CsvWriter& cell(const char* v) { return push(v); }

  void end_row() {
    if (pending_.size() != columns_) throw std::logic_error("CSV row has the wrong number of cells");
    row_strings(pending_);
    pending_.clear();
  }
  const std::string& str() const { return out_; }

 private:
  CsvWriter& push(std::string s) {
    pending_.push_back(std::move(s));
    return *this;
  }
  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out_ += ',';
      out_ += cells[c];
    }
    out_ += '\n';
  }
  std::size_t columns_;
  std::vector<std::string> pending_;
  std::string out_;
};

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_atomic(const fs::path& p, const std::string& bytes) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << bytes;
  }
  fs::rename(tmp, p);
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

enum class ParamType { integer, number, boolean, string, integer_list, number_list, object };

inline const char* type_name(ParamType t) {
  switch (t) {
    case ParamType::integer: return "integer";
    case ParamType::number: return "number";
    case ParamType::boolean: return "boolean";
    case ParamType::string: return "string";
    case ParamType::integer_list: return "list of integers";
    case ParamType::number_list: return "list of numbers";
    case ParamType::object: return "object";
  }
  return "?";
}

struct ParamSpec {
  std::string key;
  ParamType type;
  json fallback;  // null: required; the string "auto" means derived from other parameters
};

inline bool matches(const json& v, ParamType t) {
  switch (t) {
    case ParamType::integer: return v.is_number_integer();
    case ParamType::number: return v.is_number();
    case ParamType::boolean: return v.is_boolean();
    case ParamType::string: return v.is_string();
    case ParamType::integer_list:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number_integer(); });
    case ParamType::number_list:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); });
    case ParamType::object: return v.is_object();
  }
  return false;
}

inline const std::map<std::string, std::vector<ParamSpec>>& schemas() {
  static const std::map<std::string, std::vector<ParamSpec>> s = {
      {"simulate",
       {{"kernel", ParamType::object, nullptr},
        {"N", ParamType::integer, nullptr},
        {"density", ParamType::object, "auto"},
        {"t_final", ParamType::number, 1.0},
        {"dt", ParamType::number, 0.01},
        {"record_every", ParamType::integer, 10},
        {"normalize", ParamType::boolean, true}}},
      {"wasserstein",
       {{"N", ParamType::integer, nullptr},
        {"d", ParamType::integer, 2},
        {"r", ParamType::integer, 1},
        {"n_instances", ParamType::integer, 10},
        {"density", ParamType::object, "auto"},
        {"density2", ParamType::object, "auto"}}},
      {"dobrushin",
       {{"N", ParamType::integer, nullptr},
        {"kernel", ParamType::object, json{{"kind", "gaussian_odd"}, {"dim", 2}}},
        {"density1", ParamType::object, "auto"},
        {"density2", ParamType::object, "auto"},
        {"t_final", ParamType::number, 1.0},
        {"n_pairs", ParamType::integer, 100},
        {"dt", ParamType::number, 0.01},
        {"relative_slack", ParamType::number, 1e-4},
        {"additive_slack", ParamType::number, 1e-6}}},
      {"rate",
       {{"kernel", ParamType::object, json{{"kind", "gaussian_odd"}, {"dim", 1}}},
        {"density", ParamType::object, "auto"},
        {"N_list", ParamType::integer_list, json::array({32, 64, 128, 256})},
        {"t_final", ParamType::number, 1.0},
        {"n_reps", ParamType::integer, 50},
        {"reference_N", ParamType::integer, "auto"},
        {"dt", ParamType::number, 0.05}}},
      {"hk",
       {{"density", ParamType::object, json{{"kind", "gaussian"}, {"mean", {0.0}}, {"variance", {1.0}}}},
        {"N_list", ParamType::integer_list, json::array({64, 128, 256, 512})},
        {"n_reps", ParamType::integer, 200},
        {"control_factor", ParamType::integer, 16}}},
      {"chaos",
       {{"density", ParamType::object, json{{"kind", "gaussian"}, {"mean", {0.0}}, {"variance", {1.0}}}},
        {"phi", ParamType::object, json{{"kind", "coordinate"}, {"axis", 0}}},
        {"N", ParamType::integer, 100},
        {"n_runs", ParamType::integer, 1000},
        {"eps", ParamType::number, 0.5},
        {"j", ParamType::integer, 2},
        {"tensor_N", ParamType::integer, 8},
        {"tensor_runs", ParamType::integer, 200}}},
      {"vortex",
       {{"kind", ParamType::string, "blob"},
        {"eps", ParamType::number, 0.1},
        {"preset", ParamType::string, "random"},
        {"N", ParamType::integer, 20},
        {"positions", ParamType::number_list, json::array()},
        {"intensities", ParamType::number_list, json::array()},
        {"t_final", ParamType::number, 10.0},
        {"dt", ParamType::number, 1e-3},
        {"record_every", ParamType::integer, 100}}},
      {"hierarchy",
       {{"x_in", ParamType::number, 0.5},
        {"K", ParamType::integer, 10},
        {"closure", ParamType::string, "factorized"},
        {"t_final", ParamType::number, 1.0},
        {"dt", ParamType::number, 1e-3},
        {"record_every", ParamType::integer, 10}}},
      {"quantum",
       {{"M", ParamType::integer, 32},
        {"length", ParamType::number, 2.0 * std::numbers::pi},
        {"potential", ParamType::object, json{{"kind", "cosine"}, {"strength", 0.5}}},
        {"initial", ParamType::object, json{{"kind", "cosine_bump"}, {"amplitude", 0.5}}},
        {"N_list", ParamType::integer_list, json::array({2, 3})},
        {"t_final", ParamType::number, 1.0},
        {"dt", ParamType::number, 1e-3},
        {"record_every", ParamType::integer, 50},
        {"r", ParamType::number, 8.0}}},
  };
  return s;
}

// ---------------------------------------------------------------------------
// Object parameters -> library specs
// ---------------------------------------------------------------------------

namespace detail {

inline void only_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; }))
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

inline const json& need(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("missing key '" + std::string(key) + "' in " + where);
  return obj.at(key);
}

inline double need_number(const json& obj, const char* key, const std::string& where) {
  const auto& v = need(obj, key, where);
  if (!v.is_number()) throw ConfigError("key '" + std::string(key) + "' in " + where + " must be a number");
  return v.get<double>();
}

inline std::vector<double> need_vector(const json& obj, const char* key, const std::string& where) {
  const auto& v = need(obj, key, where);
  if (!matches(v, ParamType::number_list))
    throw ConfigError("key '" + std::string(key) + "' in " + where + " must be a list of numbers");
  return v.get<std::vector<double>>();
}

template <class Fn>
auto wrap(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace detail

inline KernelSpec parse_kernel(const json& j) {
  const std::string where = "kernel";
  detail::only_keys(j, {"kind", "dim", "eps", "coupling"}, where);
  const auto& kind = detail::need(j, "kind", where);
  if (!kind.is_string()) throw ConfigError("kernel kind must be a string");
  const std::string k = kind.get<std::string>();
  return detail::wrap(where, [&] {
    auto dim = [&](std::size_t fallback) {
      if (!j.contains("dim")) return fallback;
      if (!j["dim"].is_number_integer() || j["dim"].get<long long>() < 1)
        throw ConfigError("kernel dim must be a positive integer");
      return j["dim"].get<std::size_t>();
    };
    if (k == "gaussian_odd") return KernelSpec::gaussian_odd(dim(2));
    if (k == "linear_rotation") return KernelSpec::linear_rotation();
    if (k == "vortex_point") return KernelSpec::vortex_point();
    if (k == "vortex_blob") return KernelSpec::vortex_blob(detail::need_number(j, "eps", where));
    if (k == "vlasov_mollified")
      return KernelSpec::vlasov_mollified(dim(2), detail::need_number(j, "eps", where),
                                          detail::need_number(j, "coupling", where));
    throw ConfigError("unknown kernel kind '" + k + "'");
  });
}

inline json kernel_to_json(const KernelSpec& k) {
  json j{{"kind", to_string(k.kind)}, {"dim", k.dim}};
  if (k.kind == KernelKind::vortex_blob || k.kind == KernelKind::vlasov_mollified) j["eps"] = k.eps;
  if (k.kind == KernelKind::vlasov_mollified) j["coupling"] = k.coupling;
  return j;
}

inline DensitySpec parse_density(const json& j) {
  const std::string where = "density";
  const auto& kind = detail::need(j, "kind", where);
  if (!kind.is_string()) throw ConfigError("density kind must be a string");
  const std::string k = kind.get<std::string>();
  return detail::wrap(where, [&] {
    if (k == "gaussian") {
      detail::only_keys(j, {"kind", "mean", "variance"}, where);
      return DensitySpec::gaussian(detail::need_vector(j, "mean", where), detail::need_vector(j, "variance", where));
    }
    if (k == "uniform_box") {
      detail::only_keys(j, {"kind", "lo", "hi"}, where);
      return DensitySpec::uniform_box(detail::need_vector(j, "lo", where), detail::need_vector(j, "hi", where));
    }
    if (k == "gaussian_mixture") {
      detail::only_keys(j, {"kind", "components", "weights"}, where);
      const auto& comps = detail::need(j, "components", where);
      if (!comps.is_array()) throw ConfigError("mixture components must be a list");
      std::vector<GaussianComponent> cs;
      for (const auto& c : comps) {
        detail::only_keys(c, {"mean", "variance"}, "mixture component");
        cs.push_back({detail::need_vector(c, "mean", "mixture component"),
                      detail::need_vector(c, "variance", "mixture component")});
      }
      return DensitySpec::mixture(std::move(cs), detail::need_vector(j, "weights", where));
    }
    throw ConfigError("unknown density kind '" + k + "'");
  });
}

inline json gaussian_json(std::size_t d, double shift) {
  std::vector<double> mean(d, 0.0);
  if (d) mean[0] = shift;
  return json{{"kind", "gaussian"}, {"mean", mean}, {"variance", std::vector<double>(d, 1.0)}};
}

inline TestFunction parse_test_function(const json& j) {
  const std::string where = "phi";
  detail::only_keys(j, {"kind", "axis", "value", "frequency"}, where);
  const auto& kind = detail::need(j, "kind", where);
  if (!kind.is_string()) throw ConfigError("phi kind must be a string");
  const std::string k = kind.get<std::string>();
  const std::size_t axis = j.contains("axis") ? j["axis"].get<std::size_t>() : 0;
  if (k == "constant") return TestFunction::constant(detail::need_number(j, "value", where));
  if (k == "coordinate") return TestFunction::coordinate(axis);
  if (k == "coordinate_square") return TestFunction::coordinate_square(axis);
  if (k == "cosine") return TestFunction::cosine(axis, detail::need_number(j, "frequency", where));
  throw ConfigError("unknown phi kind '" + k + "'");
}

inline quantum::PotentialSpec parse_potential(const json& j) {
  const std::string where = "potential";
  detail::only_keys(j, {"kind", "strength", "width"}, where);
  const auto& kind = detail::need(j, "kind", where);
  if (!kind.is_string()) throw ConfigError("potential kind must be a string");
  const std::string k = kind.get<std::string>();
  return detail::wrap(where, [&] {
    if (k == "zero") return quantum::PotentialSpec::zero();
    if (k == "cosine") return quantum::PotentialSpec::cosine(detail::need_number(j, "strength", where));
    if (k == "gaussian_well")
      return quantum::PotentialSpec::gaussian_well(detail::need_number(j, "strength", where),
                                                   detail::need_number(j, "width", where));
    if (k == "soft_coulomb")
      return quantum::PotentialSpec::soft_coulomb(detail::need_number(j, "strength", where),
                                                  detail::need_number(j, "width", where));
    throw ConfigError("unknown potential kind '" + k + "'");
  });
}

// cosine_bump: psi ~ 1 + a cos(2 pi x / L); plane_wave: psi ~ exp(2 pi i m x / L)
inline quantum::WaveFunction parse_initial_state(const json& j, const quantum::Grid1D& g) {
  const std::string where = "initial";
  detail::only_keys(j, {"kind", "amplitude", "mode"}, where);
  const auto& kind = detail::need(j, "kind", where);
  if (!kind.is_string()) throw ConfigError("initial kind must be a string");
  const std::string k = kind.get<std::string>();
  const double two_pi_over_l = 2.0 * std::numbers::pi / g.length;
  if (k == "cosine_bump") {
    const double a = detail::need_number(j, "amplitude", where);
    return quantum::WaveFunction::from(g, [=](double x) { return quantum::cplx(1.0 + a * std::cos(two_pi_over_l * x)); });
  }
  if (k == "plane_wave") {
    const double m = detail::need_number(j, "mode", where);
    return quantum::WaveFunction::from(g, [=](double x) { return std::polar(1.0, two_pi_over_l * m * x); });
  }
  throw ConfigError("unknown initial state kind '" + k + "'");
}

// ---------------------------------------------------------------------------
// Config resolution
// ---------------------------------------------------------------------------

// Validates a raw config document and returns it with every default filled in.
// Never draws random numbers.
inline json resolve_config(const json& raw) {
  if (!raw.is_object()) throw ConfigError("config must be a JSON object");
  detail::only_keys(raw, {"experiment", "master_seed", "output_dir", "parameters"}, "config");
  const auto& exp = detail::need(raw, "experiment", "config");
  if (!exp.is_string()) throw ConfigError("'experiment' must be a string");
  const std::string name = exp.get<std::string>();
  const auto sit = schemas().find(name);
  if (sit == schemas().end()) throw ConfigError("unknown experiment '" + name + "'");

  json out;
  out["experiment"] = name;
  if (raw.contains("master_seed")) {
    if (!raw["master_seed"].is_number_unsigned() && !(raw["master_seed"].is_number_integer() && raw["master_seed"].get<long long>() >= 0))
      throw ConfigError("'master_seed' must be a non-negative integer");
    out["master_seed"] = raw["master_seed"].get<std::uint64_t>();
  } else {
    out["master_seed"] = std::uint64_t{0};
  }
  if (raw.contains("output_dir") && !raw["output_dir"].is_string()) throw ConfigError("'output_dir' must be a string");
  out["output_dir"] = raw.value("output_dir", std::string("out/") + name);

  const json params = raw.value("parameters", json::object());
  if (!params.is_object()) throw ConfigError("'parameters' must be an object");
  json p = json::object();
  for (auto it = params.begin(); it != params.end(); ++it) {
    const auto& spec = sit->second;
    if (std::none_of(spec.begin(), spec.end(), [&](const ParamSpec& s) { return s.key == it.key(); }))
      throw ConfigError("unknown parameter '" + it.key() + "' for experiment '" + name + "'");
  }
  for (const auto& s : sit->second) {
    if (params.contains(s.key)) {
      if (!matches(params[s.key], s.type))
        throw ConfigError("parameter '" + s.key + "' must be a " + type_name(s.type));
      p[s.key] = params[s.key];
    } else if (s.fallback.is_null()) {
      throw ConfigError("missing required parameter '" + s.key + "' for experiment '" + name + "'");
    } else {
      p[s.key] = s.fallback;
    }
  }

  auto positive = [&](const char* key) {
    if (p[key].get<long long>() < 1) throw ConfigError(std::string("parameter '") + key + "' must be >= 1");
  };

  // dependent defaults and cross-field checks
  if (name == "simulate") {
    const auto k = parse_kernel(p["kernel"]);
    p["kernel"] = kernel_to_json(k);
    if (p["density"] == "auto") p["density"] = gaussian_json(k.dim, 0.0);
    if (parse_density(p["density"]).dim != k.dim) throw ConfigError("density dimension does not match kernel");
    positive("N");
    positive("record_every");
  } else if (name == "wasserstein") {
    positive("N");
    positive("d");
    positive("n_instances");
    const auto d = p["d"].get<std::size_t>();
    if (p["r"] != 1 && p["r"] != 2) throw ConfigError("parameter 'r' must be 1 or 2");
    if (p["density"] == "auto") p["density"] = gaussian_json(d, 0.0);
    if (p["density2"] == "auto") p["density2"] = p["density"];
    if (parse_density(p["density"]).dim != d || parse_density(p["density2"]).dim != d)
      throw ConfigError("density dimension does not match 'd'");
  } else if (name == "dobrushin") {
    const auto k = parse_kernel(p["kernel"]);
    if (!k.lipschitz()) throw ConfigError("dobrushin needs a Lipschitz kernel");
    p["kernel"] = kernel_to_json(k);
    if (p["density1"] == "auto") p["density1"] = gaussian_json(k.dim, 0.0);
    if (p["density2"] == "auto") p["density2"] = gaussian_json(k.dim, 0.5);
    if (parse_density(p["density1"]).dim != k.dim || parse_density(p["density2"]).dim != k.dim)
      throw ConfigError("density dimension does not match kernel");
    positive("N");
    positive("n_pairs");
  } else if (name == "rate") {
    const auto k = parse_kernel(p["kernel"]);
    if (!k.lipschitz()) throw ConfigError("rate needs a Lipschitz kernel");
    p["kernel"] = kernel_to_json(k);
    if (p["density"] == "auto") p["density"] = gaussian_json(k.dim, 0.0);
    if (parse_density(p["density"]).dim != k.dim) throw ConfigError("density dimension does not match kernel");
    const auto ns = p["N_list"].get<std::vector<long long>>();
    if (ns.size() < 3) throw ConfigError("parameter 'N_list' needs at least 3 entries");
    const long long nmax = *std::max_element(ns.begin(), ns.end());
    if (p["reference_N"] == "auto") p["reference_N"] = 8 * nmax;
    if (p["reference_N"].get<long long>() <= nmax) throw ConfigError("'reference_N' must exceed max(N_list)");
    positive("n_reps");
  } else if (name == "hk") {
    parse_density(p["density"]);
    if (p["N_list"].size() < 3) throw ConfigError("parameter 'N_list' needs at least 3 entries");
    if (p["control_factor"].get<long long>() < 16) throw ConfigError("'control_factor' must be >= 16");
    positive("n_reps");
  } else if (name == "chaos") {
    const auto d = parse_density(p["density"]);
    const auto f = parse_test_function(p["phi"]);
    if (f.kind != TestFunctionKind::constant && f.axis >= d.dim) throw ConfigError("phi axis outside density dimension");
    if (p["N"].get<long long>() < 2) throw ConfigError("parameter 'N' must be >= 2");
    const auto tn = p["tensor_N"].get<long long>(), j = p["j"].get<long long>();
    if (tn < 1 || tn > 12 || j < 1 || j > 4 || j > tn)
      throw ConfigError("tensor check needs 1 <= j <= 4, j <= tensor_N <= 12");
    positive("n_runs");
    positive("tensor_runs");
    if (!(p["eps"].get<double>() > 0.0)) throw ConfigError("parameter 'eps' must be > 0");
  } else if (name == "vortex") {
    const auto kind = p["kind"].get<std::string>();
    if (kind != "blob" && kind != "point") throw ConfigError("vortex 'kind' must be 'blob' or 'point'");
    const auto preset = p["preset"].get<std::string>();
    if (preset != "random" && preset != "two_vortex" && preset != "explicit")
      throw ConfigError("vortex 'preset' must be 'random', 'two_vortex' or 'explicit'");
    if (preset == "explicit") {
      const auto n = p["positions"].size();
      if (n == 0 || n % 2 != 0) throw ConfigError("explicit 'positions' must be a nonempty list of x,y pairs");
      if (!p["intensities"].empty() && p["intensities"].size() != n / 2)
        throw ConfigError("'intensities' must have one entry per vortex");
    }
    positive("N");
    positive("record_every");
  } else if (name == "hierarchy") {
    const auto c = p["closure"].get<std::string>();
    if (c != "zero" && c != "factorized") throw ConfigError("'closure' must be 'zero' or 'factorized'");
    positive("K");
    positive("record_every");
  } else if (name == "quantum") {
    const quantum::Grid1D g = detail::wrap("grid", [&] {
      return quantum::Grid1D(p["M"].get<std::size_t>(), p["length"].get<double>());
    });
    parse_potential(p["potential"]);
    parse_initial_state(p["initial"], g);
    for (const auto& n : p["N_list"])
      if (n.get<long long>() < 2) throw ConfigError("entries of 'N_list' must be >= 2");
    if (p["r"].get<double>() < 1.0) throw ConfigError("parameter 'r' must be >= 1");
    positive("record_every");
  }
  out["parameters"] = p;
  return out;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct OutputFile {
  std::string name;
  std::string contents;
};

struct ExperimentOutput {
  std::vector<OutputFile> files;
  json results = json::object();
  json seeds = json::object();
};

namespace detail {

inline std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::vector<std::size_t> sizes_of(const json& j) { return j.get<std::vector<std::size_t>>(); }

inline json seed_rule() {
  return "derive_seed(master, i) = mix64(master ^ mix64(i + 0x9E3779B97F4A7C15)), "
         "mix64 = SplitMix64 finalizer";
}

inline ExperimentOutput run_simulate(const json& p, std::uint64_t seed, unsigned threads) {
  const auto kernel = parse_kernel(p["kernel"]);
  const auto density = parse_density(p["density"]);
  const auto cloud = sample_iid(density, p["N"].get<std::size_t>(), rng::derive_seed(seed, 0));
  IntegratorSettings s;
  s.dt = p["dt"].get<double>();
  s.record_every = p["record_every"].get<std::size_t>();
  s.normalize = p["normalize"].get<bool>();
  s.threads = threads;
  const auto tr = simulate_nbody(kernel, cloud, p["t_final"].get<double>(), s);

  std::vector<std::string> header{"t", "particle"};
  for (std::size_t k = 0; k < tr.dim; ++k) header.push_back("z" + std::to_string(k));
  CsvWriter csv(header);
  for (std::size_t r = 0; r < tr.times.size(); ++r)
    for (std::size_t i = 0; i < tr.particles(); ++i) {
      csv.cell(tr.times[r]).cell(i);
      for (std::size_t k = 0; k < tr.dim; ++k) csv.cell(tr.states[r][i * tr.dim + k]);
      csv.end_row();
    }
  ExperimentOutput out;
  out.files.push_back({"trajectory.csv", csv.str()});
  json q0 = json::object(), q1 = json::object();
  for (const auto& v : conserved_quantities(kernel, tr.configuration(0))) q0[v.name] = v.value;
  for (const auto& v : conserved_quantities(kernel, tr.configuration(tr.states.size() - 1))) q1[v.name] = v.value;
  out.results = {{"initial_invariants", q0}, {"final_invariants", q1}, {"step", tr.step}};
  out.seeds = {{"initial_cloud", rng::derive_seed(seed, 0)}};
  return out;
}

inline ExperimentOutput run_wasserstein(const json& p, std::uint64_t seed, unsigned threads) {
  const auto n = p["N"].get<std::size_t>();
  const int r = p["r"].get<int>();
  const auto da = parse_density(p["density"]), db = parse_density(p["density2"]);
  const auto count = p["n_instances"].get<std::size_t>();
  struct Row {
    double dist, brute, dual, marg;
  };
  const auto rows = parallel_map(count, threads, [&](std::size_t i) {
    const EmpiricalMeasure mu(sample_iid(da, n, rng::derive_seed(seed, 2 * i)));
    const EmpiricalMeasure nu(sample_iid(db, n, rng::derive_seed(seed, 2 * i + 1)));
    const auto res = mk_distance(mu, nu, r);
    Row row{res.distance, std::nan(""), std::nan(""), res.plan.marginal_error(mu.weights(), nu.weights())};
    if (r == 1 && n <= 7) row.brute = brute_force_w1(mu, nu);
    if (r == 1) row.dual = kr_dual_bound(mu, nu, {kantorovich_potential(mu, nu)});
    return row;
  });
  CsvWriter csv({"instance", "n", "d", "r", "distance", "brute_force", "dual_bound", "marginal_error"});
  for (std::size_t i = 0; i < rows.size(); ++i)
    csv.cell(i).cell(n).cell(da.dim).cell(r).cell(rows[i].dist).cell(rows[i].brute).cell(rows[i].dual)
        .cell(rows[i].marg).end_row();
  ExperimentOutput out;
  out.files.push_back({"wasserstein.csv", csv.str()});
  out.seeds = {{"rule", seed_rule()}, {"layout", "instance i: mu uses index 2i, nu uses index 2i+1"}};
  return out;
}

inline ExperimentOutput run_dobrushin(const json& p, std::uint64_t seed, unsigned threads) {
  const auto kernel = parse_kernel(p["kernel"]);
  IntegratorSettings s;
  s.dt = p["dt"].get<double>();
  s.record_every = 1u << 30;
  DobrushinOptions opt{p["relative_slack"].get<double>(), p["additive_slack"].get<double>(), threads};
  const double t = p["t_final"].get<double>();
  const auto rows = dobrushin_experiment(kernel, parse_density(p["density1"]), parse_density(p["density2"]),
                                         p["N"].get<std::size_t>(), t, p["n_pairs"].get<std::size_t>(), seed, s, opt);
  CsvWriter csv({"pair", "w1_in", "w1_t", "bound", "pass"});
  std::size_t passed = 0;
  for (const auto& r : rows) {
    csv.cell(r.pair).cell(r.w1_in).cell(r.w1_t).cell(r.bound).cell(r.pass).end_row();
    passed += r.pass;
  }
  ExperimentOutput out;
  out.files.push_back({"dobrushin.csv", csv.str()});
  out.results = {{"pass_rate", rows.empty() ? 1.0 : double(passed) / double(rows.size())},
                 {"lipschitz_bound", kernel.lipschitz_bound},
                 {"growth_factor", std::exp(2.0 * kernel.lipschitz_bound * std::abs(t))}};
  out.seeds = {{"rule", seed_rule()}, {"layout", "pair p: density1 cloud index 2p, density2 cloud index 2p+1"}};
  return out;
}

inline json fit_json(const RateFit& f) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"slope_half_width", f.half_width}};
}

inline ExperimentOutput run_rate(const json& p, std::uint64_t seed, unsigned threads) {
  const auto kernel = parse_kernel(p["kernel"]);
  IntegratorSettings s;
  s.dt = p["dt"].get<double>();
  s.record_every = 1u << 30;
  const auto sizes = sizes_of(p["N_list"]);
  const auto res = meanfield_rate_experiment(kernel, parse_density(p["density"]), sizes, p["t_final"].get<double>(),
                                             p["n_reps"].get<std::size_t>(), p["reference_N"].get<std::size_t>(),
                                             seed, s, threads);
  CsvWriter csv({"N", "mean_w1", "std_error", "n_reps"});
  for (std::size_t a = 0; a < sizes.size(); ++a)
    csv.cell(sizes[a]).cell(res.summaries[a].mean).cell(res.summaries[a].std_error).cell(res.samples[a].size()).end_row();
  ExperimentOutput out;
  out.files.push_back({"rate.csv", csv.str()});
  out.results = fit_json(res.fit);
  out.seeds = {{"rule", seed_rule()}, {"layout", "reference cloud index 0; size a, rep r: index 1 + a*n_reps + r"}};
  return out;
}

inline ExperimentOutput run_hk(const json& p, std::uint64_t seed, unsigned threads) {
  const auto density = parse_density(p["density"]);
  const auto sizes = sizes_of(p["N_list"]);
  const auto res = hk_rate_experiment(density, sizes, p["n_reps"].get<std::size_t>(), seed,
                                      p["control_factor"].get<std::size_t>(), threads);
  CsvWriter csv({"N", "mean_w2sq", "std_error", "n_reps"});
  for (std::size_t a = 0; a < sizes.size(); ++a)
    csv.cell(sizes[a]).cell(res.summaries[a].mean).cell(res.summaries[a].std_error).cell(res.samples[a].size()).end_row();
  ExperimentOutput out;
  out.files.push_back({"hk.csv", csv.str()});
  out.results = fit_json(res.fit);
  out.results["reference_exponent"] = -2.0 / (double(density.dim) + 4.0);
  out.seeds = {{"rule", seed_rule()}, {"layout", "control cloud index 0; size a, rep r: index 1 + a*n_reps + r"}};
  return out;
}

inline ExperimentOutput run_chaos(const json& p, std::uint64_t seed, unsigned threads) {
  const auto density = parse_density(p["density"]);
  const auto phi_spec = parse_test_function(p["phi"]);
  const ScalarField phi = phi_spec;
  const auto n = p["N"].get<std::size_t>(), runs = p["n_runs"].get<std::size_t>();
  const double eps = p["eps"].get<double>();
  const auto ens = make_ensemble(density, n, runs, rng::derive_seed(seed, 0), threads);
  const auto mom = analytic_moments(density, phi_spec);
  const auto conc = chaos_concentration(ens, mom.mean, phi, eps);
  const double ceiling = chebyshev_ceiling(mom.variance, n, eps, runs);
  const auto sm = second_moment_identity(ens, phi);
  const auto tn = p["tensor_N"].get<std::size_t>(), j = p["j"].get<std::size_t>();
  const auto small = make_ensemble(density, tn, p["tensor_runs"].get<std::size_t>(), rng::derive_seed(seed, 1), threads);
  const auto tm = empirical_tensor_vs_marginal(small, phi, j);

  CsvWriter csv({"quantity", "value"});
  auto put = [&](const char* name, double v) { csv.cell(name).cell(v).end_row(); };
  put("reference_mean", mom.mean);
  put("reference_variance", mom.variance);
  put("concentration_fraction", conc.fraction);
  put("chebyshev_ceiling", ceiling);
  put("second_moment_lhs", sm.lhs);
  put("second_moment_rhs", sm.rhs);
  put("second_moment_max_run_defect", sm.max_run_defect);
  put("tensor_moment", tm.tensor);
  put("injective_coefficient", tm.coefficient);
  put("marginal_moment", tm.marginal);
  put("remainder_bound", tm.remainder_bound);
  put("max_decomposition_gap", tm.max_decomposition_gap);
  put("remainder_mass_limit", double(j) * double(j - 1) / (2.0 * double(tn)));
  ExperimentOutput out;
  out.files.push_back({"chaos.csv", csv.str()});
  out.results = {{"chebyshev_ok", conc.fraction <= ceiling},
                 {"remainder_mass_ok", remainder_mass_bound_holds(tn, j)},
                 {"decomposition_ok", tm.max_decomposition_gap <= tm.remainder_bound + 1e-12}};
  out.seeds = {{"rule", seed_rule()},
               {"concentration_ensemble_master", rng::derive_seed(seed, 0)},
               {"tensor_ensemble_master", rng::derive_seed(seed, 1)}};
  return out;
}

// N equal vortices of total intensity 1, uniform on [-0.5, 1.5]^2. The patch is
// off-center so that relative drift of the center of vorticity is meaningful.
inline Configuration random_vortex_patch(std::size_t n, std::uint64_t seed) {
  auto c = sample_iid(DensitySpec::uniform_box({-0.5, -0.5}, {1.5, 1.5}), n, seed);
  std::fill(c.weights.begin(), c.weights.end(), 1.0 / double(n));
  return c;
}

inline ExperimentOutput run_vortex(const json& p, std::uint64_t seed, unsigned threads) {
  const bool blob = p["kind"] == "blob";
  const auto kernel = blob ? KernelSpec::vortex_blob(p["eps"].get<double>()) : KernelSpec::vortex_point();
  const auto preset = p["preset"].get<std::string>();
  Configuration cfg;
  if (preset == "two_vortex") {
    cfg = Configuration(2, {1.0, 0.0, -1.0, 0.0}, {1.0, 1.0});
  } else if (preset == "explicit") {
    auto xs = p["positions"].get<std::vector<double>>();
    auto ws = p["intensities"].get<std::vector<double>>();
    if (ws.empty()) ws.assign(xs.size() / 2, 1.0);
    cfg = Configuration(2, std::move(xs), std::move(ws));
  } else {
    cfg = random_vortex_patch(p["N"].get<std::size_t>(), rng::derive_seed(seed, 0));
  }
  IntegratorSettings s;
  s.dt = p["dt"].get<double>();
  s.record_every = p["record_every"].get<std::size_t>();
  s.normalize = false;
  s.threads = threads;
  const auto tr = simulate_nbody(kernel, cfg, p["t_final"].get<double>(), s);

  CsvWriter csv({"t", "hamiltonian", "center_x", "center_y", "moment", "min_distance"});
  for (std::size_t r = 0; r < tr.times.size(); ++r) {
    const auto q = conserved_quantities(kernel, tr.configuration(r));
    csv.cell(tr.times[r]).cell(lookup(q, "hamiltonian")).cell(lookup(q, "center_x")).cell(lookup(q, "center_y"))
        .cell(lookup(q, "moment")).cell(meanfield::detail::min_pair_distance(2, tr.states[r])).end_row();
  }
  ExperimentOutput out;
  out.files.push_back({"vortex.csv", csv.str()});
  out.seeds = {{"initial_cloud", rng::derive_seed(seed, 0)}};
  return out;
}

inline ExperimentOutput run_hierarchy(const json& p, std::uint64_t, unsigned) {
  const auto closure = p["closure"] == "zero" ? hierarchy::Closure::zero : hierarchy::Closure::factorized;
  const double x_in = p["x_in"].get<double>(), t = p["t_final"].get<double>();
  const auto tr = hierarchy::solve_truncated(x_in, p["K"].get<std::size_t>(), closure, t, p["dt"].get<double>(),
                                             p["record_every"].get<std::size_t>());
  CsvWriter csv({"t", "k", "y_k"});
  for (std::size_t r = 0; r < tr.times.size(); ++r)
    for (std::size_t k = 0; k < tr.levels; ++k) csv.cell(tr.times[r]).cell(k + 1).cell(tr.states[r][k]).end_row();
  const auto g = hierarchy::growth_profile(tr);
  ExperimentOutput out;
  out.files.push_back({"hierarchy.csv", csv.str()});
  out.results = {{"growth_radius", g.radius}, {"y1_final", tr.states.back()[0]}};
  if (t * x_in < 1.0) out.results["y1_reference"] = hierarchy::riccati_reference(x_in, t, 1)[0];
  return out;
}

inline ExperimentOutput run_quantum(const json& p, std::uint64_t, unsigned) {
  const quantum::Grid1D g(p["M"].get<std::size_t>(), p["length"].get<double>());
  const auto v = parse_potential(p["potential"]);
  const auto psi = parse_initial_state(p["initial"], g);
  const auto res = quantum::hartree_limit_experiment(psi, v, sizes_of(p["N_list"]), p["t_final"].get<double>(),
                                                     p["dt"].get<double>(), p["record_every"].get<std::size_t>(),
                                                     p["r"].get<double>());
  CsvWriter csv({"t", "N", "E_N", "bound", "trace_distance"});
  for (const auto& r : res.rows) csv.cell(r.t).cell(r.particles).cell(r.e_n).cell(r.bound).cell(r.trace_distance).end_row();
  ExperimentOutput out;
  out.files.push_back({"quantum.csv", csv.str()});
  out.results = {{"envelope_holds", res.envelope_holds},
                 {"trace_distance_dominates", res.trace_distance_dominates},
                 {"scaling_spread", res.scaling_spread},
                 {"max_norm_defect", res.max_norm_defect},
                 {"holder_r", p["r"].get<double>()}};
  return out;
}

}  // namespace detail

// Runs without touching the filesystem; used by the CLI and by tests.
inline ExperimentOutput execute(const json& resolved, unsigned threads = 1) {
  const std::string name = resolved["experiment"];
  const auto seed = resolved["master_seed"].get<std::uint64_t>();
  const json& p = resolved["parameters"];
  using Runner = ExperimentOutput (*)(const json&, std::uint64_t, unsigned);
  static const std::map<std::string, Runner> runners = {
      {"simulate", detail::run_simulate}, {"wasserstein", detail::run_wasserstein},
      {"dobrushin", detail::run_dobrushin}, {"rate", detail::run_rate},
      {"hk", detail::run_hk},             {"chaos", detail::run_chaos},
      {"vortex", detail::run_vortex},     {"hierarchy", detail::run_hierarchy},
      {"quantum", detail::run_quantum}};
  return runners.at(name)(p, seed, threads);
}

struct RunOptions {
  unsigned threads = 1;
  std::string seed_source = "config";
};

// Executes, writes the CSVs, then the manifest (atomically, after success).
inline json run(const json& resolved, const RunOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = detail::timestamp();
  const auto out = execute(resolved, opt.threads);
  const fs::path dir = resolved["output_dir"].get<std::string>();
  fs::create_directories(dir);
  json files = json::array();
  for (const auto& f : out.files) {
    write_atomic(dir / f.name, f.contents);
    files.push_back({{"file", f.name}, {"sha256", sha256_hex(f.contents)}, {"bytes", f.contents.size()}});
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest = {{"tool_version", kToolVersion},
                   {"config", resolved},
                   {"seed_source", opt.seed_source},
                   {"derived_seeds", out.seeds},
                   {"threads", opt.threads},
                   {"started_at", started},
                   {"finished_at", detail::timestamp()},
                   {"wall_time_s", wall},
                   {"outputs", files},
                   {"results", out.results}};
  write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

// True when every digest in the manifest matches the file next to it.
inline bool verify_manifest(const fs::path& manifest_path) {
  const json m = json::parse(read_file(manifest_path));
  const fs::path dir = manifest_path.parent_path();
  for (const auto& f : m["outputs"])
    if (sha256_hex(read_file(dir / f["file"].get<std::string>())) != f["sha256"]) return false;
  return true;
}

}  // namespace meanfield::harness
