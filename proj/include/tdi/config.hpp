#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tdi/fusion.hpp"
#include "tdi/imputers.hpp"
#include "tdi/ingest.hpp"
#include "tdi/masking.hpp"
#include "tdi/predict.hpp"

namespace tdi {

/// A small TOML subset: `[section]` headers, `key = value` lines, `#`
/// comments, quoted strings, numbers, booleans and `[a, b]` arrays (which may
/// span lines).
/// Keys may contain dots; they are kept verbatim.
class ConfigTable {
 public:
  struct Value {
    std::vector<std::string> items;  // one entry unless the value is an array
    bool is_array = false;
    bool quoted = false;
    std::size_t line = 0;
  };

  static ConfigTable parse(std::string_view text);

  bool has_section(std::string_view section) const;
  /// Sections in file order ("" is the top level).
  std::vector<std::string> sections() const;
  std::vector<std::string> sections_with_prefix(std::string_view prefix) const;

  std::optional<std::string> get_string(std::string_view section, std::string_view key) const;
  std::optional<double> get_double(std::string_view section, std::string_view key) const;
  std::optional<std::uint64_t> get_uint(std::string_view section, std::string_view key) const;
  std::optional<bool> get_bool(std::string_view section, std::string_view key) const;
  std::optional<std::vector<std::string>> get_strings(std::string_view section,
                                                      std::string_view key) const;
  std::optional<std::vector<double>> get_doubles(std::string_view section,
                                                 std::string_view key) const;

  /// Throws Config naming the first key that no getter asked for.
  void reject_unused() const;

 private:
  const Value* find(std::string_view section, std::string_view key) const;

  struct Section {
    std::string name;
    std::vector<std::pair<std::string, Value>> entries;
  };
  std::vector<Section> sections_;
  mutable std::map<std::pair<std::string, std::string>, bool> used_;
};

struct DataConfig {
  std::optional<std::filesystem::path> input;  // long-format CSV; synthetic data when absent
  std::vector<std::string> variables;
  double grid_hours = 1.0;
  std::optional<std::filesystem::path> ranges;
  bool standardize = false;
  std::optional<std::size_t> subsample;
  std::optional<std::filesystem::path> labels;
  std::optional<std::filesystem::path> statics;
};

struct SynthSettings {
  SyntheticConfig panel;
  std::vector<std::size_t> label_variables{0, 1};
  double label_strength = 3.0;
  double label_offset = 0.0;
};

struct MaskingSettings {
  double p = 0.1;
  std::uint64_t seed = 0;
  std::vector<std::string> competitors;
};

struct PredictSettings {
  CvConfig cv;
  CohortTask task;
  LogisticOptions logistic;
  std::vector<std::string> methods{"tdi"};
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  SynthSettings synth;
  /// [imputer.NAME] sections, in file order.
  std::vector<std::pair<std::string, ImputerSpec>> imputers;
  TdiSpec tdi;
  std::size_t m = 1;
  std::string impute_method = "tdi";
  MaskingSettings masking;
  PredictSettings predict;

  /// "tdi" or the NAME of an [imputer.NAME] section.
  Competitor competitor(std::string_view name) const;
};

/// Relative paths are resolved against `base_dir`. Component seeds are
/// derived from the top-level seed unless a section writes its own.
/// `seed_override` replaces the top-level seed and forces derivation for
/// every component.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {},
                           std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

/// Keys accepted in an [imputer.NAME] section.
inline constexpr std::string_view kImputerKeys[] = {"kind",     "k",   "lambda",      "max_rank",
                                                    "max_iter", "tol", "ridge_alpha", "clip",
                                                    "seed"};

}  // namespace tdi
