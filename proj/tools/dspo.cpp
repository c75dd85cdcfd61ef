#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dspo/cli.hpp"
#include "dspo/error.hpp"
#include "dspo/runtime.hpp"

namespace {

int report(std::string_view kind, std::string message) {
  for (char& c : message) {
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  }
  std::cerr << "error\t" << kind << "\t" << message << "\n";
  return dspo::cli::exit_code_for(kind);
}

struct Shared {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::vector<std::string> sets;
  bool no_timestamp = false;
  // Convenience flags that map onto config keys.
  std::map<std::string, std::string> keys;
};

void add_shared(CLI::App* cmd, Shared& shared, const std::vector<std::string>& key_flags) {
  cmd->add_option("--seed", shared.seed, "Random seed (overrides the config's seed key)");
  cmd->add_option("--config", shared.config, "Config file with key = value lines")->check(CLI::ExistingFile);
  cmd->add_option("--out", shared.out, "Output directory")->required();
  cmd->add_option("--set", shared.sets, "Override a config key: --set key=value (repeatable)");
  cmd->add_flag("--no-timestamp", shared.no_timestamp, "Omit the generated-at comment line from outputs");
  for (const auto& key : key_flags) cmd->add_option("--" + key, shared.keys[key], "Sets config key '" + key + "'");
}

dspo::cli::RunOptions resolve(const Shared& shared) {
  dspo::cli::RunOptions options;
  if (!shared.config.empty()) options.config = dspo::cli::load_config_file(shared.config);
  for (const auto& [key, value] : shared.keys) {
    if (!value.empty()) options.config[key] = value;
  }
  for (const auto& s : shared.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) dspo::fail(dspo::ErrorKind::Config, "--set expects key=value, got '" + s + "'");
    options.config[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (shared.seed) options.config["seed"] = std::to_string(*shared.seed);
  options.out = shared.out;
  options.timestamp = !shared.no_timestamp;
  return options;
}

}  // namespace

int main(int argc, char** argv) {
  dspo::tune_allocator();
  CLI::App app{"dspo: cross-sectional stock ranking with sub-sampled pairwise loss"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    std::vector<std::string> key_flags;
    std::function<void(const dspo::cli::RunOptions&)> run;
  };
  const std::vector<Command> commands{
      {"generate", "Write a synthetic market dataset", {}, dspo::cli::cmd_generate},
      {"train", "Train a ranking model", {"data", "objective"}, dspo::cli::cmd_train},
      {"evaluate", "Score a dataset and report daily RankIC", {"data", "checkpoint", "normalizer", "from", "to"},
       dspo::cli::cmd_evaluate},
      {"backtest", "Simulate trading on model scores",
       {"data", "market", "scores", "checkpoint", "normalizer", "from", "to", "mode"}, dspo::cli::cmd_backtest},
      {"features", "Compute classic intraday factors", {"data", "from", "to"}, dspo::cli::cmd_features},
  };
  std::vector<Shared> shared(commands.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    subs.push_back(app.add_subcommand(commands[i].name, commands[i].help));
    add_shared(subs.back(), shared[i], commands[i].key_flags);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("UsageError", e.what());
  }

  try {
    for (std::size_t i = 0; i < commands.size(); ++i) {
      if (subs[i]->parsed()) commands[i].run(resolve(shared[i]));
    }
  } catch (const dspo::Error& e) {
    return report(dspo::kind_name(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report("InternalError", e.what());
  }
  return 0;
}
