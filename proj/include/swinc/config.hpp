#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swinc/data.hpp"
#include "swinc/model.hpp"
#include "swinc/train.hpp"

namespace swinc {

/// Everything a command needs: model, synthetic data, optimization, seed and paths.
struct RunConfig {
  ModelConfig model = ModelConfig::toy();
  SyntheticSpec data;  // num_classes follows model.num_classes
  Index train_size = 32;
  Index val_size = 8;
  TrainOptions train;
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  std::string data_dir = "data";

  /// Cross-field checks; throws ConfigError.
  void validate() const;
  /// Data spec with the class count and seed filled in for a split.
  SyntheticSpec data_spec(std::uint64_t split) const;
  /// Effective configuration in the file syntax, every key listed.
  std::string dump() const;
};

/// Documented configuration keys, as "section.name".
struct ConfigKey {
  std::string name;
  std::string type;  // integer, real, bool, string, list
  std::string doc;
};
const std::vector<ConfigKey>& config_keys();

/// Applies one `key = value` assignment (value in file syntax). Unknown keys
/// raise ConfigError naming the closest valid key; wrong types name the
/// expected type.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses `[section]` headers, `key = value` lines and `#` comments. Keys
/// may be dotted (`model.window`) at top level or bare inside a section.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "<text>");
RunConfig parse_config_file(const std::string& path);

/// Levenshtein distance, for suggestions.
std::size_t edit_distance(const std::string& a, const std::string& b);

}  // namespace swinc
