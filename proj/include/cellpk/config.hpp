#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cellpk/train.hpp"

namespace cellpk {

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

/// Flat "key = value" text; '#' starts a comment, blank lines are skipped.
std::vector<ConfigEntry> parse_key_values(const std::string& text, const std::string& origin = "config");
std::vector<ConfigEntry> read_key_values(const std::filesystem::path& path);

/// Training settings plus the run-level keys shared by the CLI.
struct RunConfig {
  TrainConfig train;
  int resolution = 256;
  int workers = 1;

  /// Applies entries; unknown keys and malformed values throw UsageError
  /// naming the line.
  void apply(const std::vector<ConfigEntry>& entries);
  void set(const std::string& key, const std::string& value);

  /// Every key with its resolved value, in file syntax.
  std::string to_string() const;

  static const std::vector<std::string>& keys();
};

/// "80/20" -> 0.8, "95/5" -> 0.95, or a plain fraction such as "0.8".
double parse_split(const std::string& text);
std::string format_split(double train_fraction);

}  // namespace cellpk
