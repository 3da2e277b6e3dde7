// Command-line driver: `meanfield run <experiment>` and `meanfield validate`.
// Exit codes: 0 success, 2 configuration error, 3 numerical failure, 1 other.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "meanfield/harness.hpp"

namespace mh = meanfield::harness;
using mh::json;

namespace {

// key=value; the value is parsed as JSON when possible, else taken as a string.
void apply_override(json& params, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw mh::ConfigError("override '" + kv + "' is not key=value");
  const std::string key = kv.substr(0, eq), text = kv.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  params[key] = value.is_discarded() ? json(text) : value;
}

json load_config(const std::string& path, const std::string& experiment, const std::vector<std::string>& sets) {
  json raw = json::object();
  if (!path.empty()) {
    std::string text;
    try {
      text = mh::read_file(path);
    } catch (const std::exception& e) {
      throw mh::ConfigError(e.what());
    }
    raw = json::parse(text, nullptr, false);
    if (raw.is_discarded()) throw mh::ConfigError("config file " + path + " is not valid JSON");
    if (!raw.is_object()) throw mh::ConfigError("config must be a JSON object");
  }
  if (!experiment.empty()) {
    if (raw.contains("experiment") && raw["experiment"] != experiment)
      throw mh::ConfigError("config is for experiment '" + raw["experiment"].dump() + "', not '" + experiment + "'");
    raw["experiment"] = experiment;
  }
  if (!sets.empty()) {
    if (!raw.contains("parameters")) raw["parameters"] = json::object();
    for (const auto& s : sets) apply_override(raw["parameters"], s);
  }
  return raw;
}

std::uint64_t parse_seed(const std::string& text, const char* what) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(text, &pos, 0);
    if (pos != text.size() || text.front() == '-') throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw mh::ConfigError(std::string(what) + " is not a non-negative integer: '" + text + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field limit experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an experiment and write CSV + manifest.json");
  std::string experiment, config, output_dir, seed_text;
  unsigned threads = 1;
  std::vector<std::string> sets;
  run->add_option("experiment", experiment, "simulate|wasserstein|dobrushin|rate|hk|chaos|vortex|hierarchy|quantum")
      ->required();
  run->add_option("--config", config, "JSON config file");
  run->add_option("--output-dir", output_dir, "directory for outputs");
  run->add_option("--seed", seed_text, "master seed (overrides config and MEANFIELD_SEED)");
  run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  run->add_option("--set", sets, "parameter override key=value (repeatable)");

  auto* validate = app.add_subcommand("validate", "resolve a config and print it with defaults filled in");
  std::string vconfig, vexperiment;
  std::vector<std::string> vsets;
  validate->add_option("--config", vconfig, "JSON config file")->required();
  validate->add_option("--experiment", vexperiment, "experiment name when the file omits it");
  validate->add_option("--set", vsets, "parameter override key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*validate) {
      std::cout << mh::resolve_config(load_config(vconfig, vexperiment, vsets)).dump(2) << "\n";
      return 0;
    }
    json raw = load_config(config, experiment, sets);
    std::string source = "config";
    if (const char* env = std::getenv("MEANFIELD_SEED"); env && *env) {
      raw["master_seed"] = parse_seed(env, "MEANFIELD_SEED");
      source = "env:MEANFIELD_SEED";
    }
    if (!seed_text.empty()) {
      raw["master_seed"] = parse_seed(seed_text, "--seed");
      source = "flag:--seed";
    }
    if (!output_dir.empty()) raw["output_dir"] = output_dir;
    const json resolved = mh::resolve_config(raw);
    const json manifest = mh::run(resolved, {threads, source});
    std::cout << "wrote " << resolved["output_dir"].get<std::string>() << "/manifest.json\n";
    if (!manifest["results"].empty()) std::cout << manifest["results"].dump(2) << "\n";
    return 0;
  } catch (const mh::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const meanfield::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::domain_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
