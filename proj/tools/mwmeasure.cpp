// mwmeasure: run, list, validate and show measure-of-consciousness scenarios.
//
// Exit codes: 0 success, 1 schema or validation error, 2 runtime query error.

#include "mwm/mwm.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kOk = 0;
constexpr int kSchemaError = 1;
constexpr int kRuntimeError = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw mwm::SchemaError({{0, "cannot read '" + path + "'"}});
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// A path to an existing file, otherwise a built-in name.
mwm::Scenario load(const std::string& source) {
  if (std::filesystem::is_regular_file(source)) return mwm::parse_scenario(read_file(source));
  if (mwm::find_builtin(source)) return mwm::builtin_scenario(source);
  throw mwm::SchemaError({{0, "'" + source + "' is neither a scenario file nor a built-in scenario"}});
}

mwm::ParamMap parse_params(const std::vector<std::string>& items) {
  mwm::ParamMap out;
  for (const auto& item : items) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw mwm::SchemaError({{0, "--param expects name=value, got '" + item + "'"}});
    try {
      out[item.substr(0, eq)] = mwm::Number(item.substr(eq + 1)).eval({});
    } catch (const mwm::Error& e) {
      throw mwm::SchemaError({{0, e.what()}});
    }
  }
  return out;
}

void print_issues(const mwm::SchemaError& e, const std::string& source) {
  for (const auto& i : e.issues()) std::cerr << source << ':' << i.line << ": " << i.message << '\n';
}

int validate_scenario(const mwm::Scenario& s, const mwm::ParamMap& params, const std::string& source) {
  const mwm::Script script = mwm::instantiate(s, mwm::resolve_params(s, params));
  auto violations = mwm::validate(script.initial);
  for (const auto& v : mwm::validate(mwm::run_to_end(script))) violations.push_back(v);
  for (const auto& v : violations) std::cerr << source << ": branch " << v.branch << ": " << v.message << '\n';
  if (!violations.empty()) return kSchemaError;
  std::cout << s.name << ": ok\n";
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Measure-of-consciousness scenarios for many-worlds thought experiments"};
  app.require_subcommand(1);

  std::string source, format = "text", semantics, out_path;
  std::size_t trials = 0, threads = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> params;

  auto* run = app.add_subcommand("run", "Run every query of a scenario file or built-in");
  run->add_option("scenario", source, "Scenario file or built-in name")->required();
  run->add_option("--trials", trials, "Single-world oracle trials per oracle query (0 = analytic only)");
  run->add_option("--seed", seed, "Oracle seed");
  run->add_option("--threads", threads, "Worker threads for oracle trials")->check(CLI::PositiveNumber);
  run->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "text"}));
  run->add_option("--semantics", semantics, "Measure semantics")->check(CLI::IsMember({"standard", "qif"}));
  run->add_option("--out", out_path, "Write the report here instead of standard output");
  run->add_option("--param", params, "Override a parameter default (name=value)");

  app.add_subcommand("list", "List built-in scenarios");

  auto* val = app.add_subcommand("validate", "Check a scenario file or built-in without running queries");
  val->add_option("scenario", source, "Scenario file or built-in name")->required();
  val->add_option("--param", params, "Override a parameter default (name=value)");

  auto* show = app.add_subcommand("show", "Print the source of a built-in scenario");
  show->add_option("name", source, "Built-in name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kSchemaError;
  }

  try {
    if (app.got_subcommand("list")) {
      for (const auto& b : mwm::builtin_scenarios()) std::cout << b.name << '\n';
      return kOk;
    }
    if (app.got_subcommand("show")) {
      const auto* b = mwm::find_builtin(source);
      if (!b) throw mwm::SchemaError({{0, "unknown built-in scenario '" + source + "'"}});
      std::cout << b->text;
      return kOk;
    }
    const mwm::Scenario scenario = load(source);
    const mwm::ParamMap overrides = parse_params(params);
    if (app.got_subcommand("validate")) return validate_scenario(scenario, overrides, source);

    mwm::RunOptions options;
    options.trials = trials;
    options.seed = seed;
    options.threads = threads;
    options.params = overrides;
    if (semantics == "qif") options.semantics = mwm::SemanticsMode::qif_renormalize;
    else if (semantics == "standard") options.semantics = mwm::SemanticsMode::standard;

    const auto rows = mwm::run(scenario, options);
    std::ofstream file;
    if (!out_path.empty()) {
      file.open(out_path, std::ios::binary);
      if (!file) throw mwm::Error("cannot write '" + out_path + "'");
    }
    std::ostream& os = out_path.empty() ? std::cout : file;
    if (format == "csv") mwm::write_csv(os, rows);
    else mwm::write_text(os, rows);
    return kOk;
  } catch (const mwm::SchemaError& e) {
    print_issues(e, source);
    return kSchemaError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}
