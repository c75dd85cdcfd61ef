#pragma once
// Command implementations behind the dspo executable. Each command reads a
// flat key/value configuration, writes its outputs plus a resolved-config
// snapshot into the output directory, and throws dspo::Error on failure.
//
// Config file format: one "key = value" per line; blank lines and lines
// starting with '#' are ignored; later keys override earlier ones. The
// resolved_config.txt written by every command uses the same format and can
// be fed back through --config.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dspo::cli {

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_config_text(std::string_view text, const std::string& origin);
KeyValues load_config_file(const std::filesystem::path& path);

// Typed, tracked access to a configuration. Every key read (with its
// effective value, default or not) lands in resolved(); finish() rejects keys
// that no accessor asked for.
class Settings {
 public:
  explicit Settings(KeyValues values) : values_(std::move(values)) {}

  std::string text(const std::string& key, const std::string& fallback);
  std::optional<std::string> optional_text(const std::string& key);
  std::size_t count(const std::string& key, std::size_t fallback);
  std::uint64_t integer(const std::string& key, std::uint64_t fallback);
  double real(const std::string& key, double fallback);
  bool flag(const std::string& key, bool fallback);

  void finish(const std::string& command) const;
  const KeyValues& resolved() const noexcept { return resolved_; }

 private:
  const std::string* find(const std::string& key);
  KeyValues values_;
  KeyValues resolved_;
  std::set<std::string> used_;
};

struct RunOptions {
  std::uint64_t seed = 0;  // used when the config has no "seed" key
  std::filesystem::path out;
  KeyValues config;
  bool timestamp = true;  // leading "# generated ..." line in every CSV
};

void cmd_generate(const RunOptions& options);
void cmd_train(const RunOptions& options);
void cmd_evaluate(const RunOptions& options);
void cmd_backtest(const RunOptions& options);
void cmd_features(const RunOptions& options);

// Process exit code for an error kind (success is 0).
int exit_code_for(std::string_view kind_name);

}  // namespace dspo::cli
