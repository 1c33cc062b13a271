#include "tdi/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "tdi/csv.hpp"
#include "tdi/error.hpp"
#include "tdi/rng.hpp"

namespace tdi {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::Config, msg); }

std::string_view trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Strips a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view line) {
  bool in_quote = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quote = !in_quote;
    if (line[i] == '#' && !in_quote) return line.substr(0, i);
  }
  return line;
}

std::pair<std::string, bool> scalar(std::string_view raw, std::size_t line_no) {
  raw = trim(raw);
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    return {std::string(raw.substr(1, raw.size() - 2)), true};
  }
  if (raw.empty() || raw.find('"') != std::string_view::npos) {
    fail(fmt::format("config line {}: malformed value '{}'", line_no, raw));
  }
  return {std::string(raw), false};
}

}  // namespace

ConfigTable ConfigTable::parse(std::string_view text) {
  ConfigTable table;
  table.sections_.push_back({"", {}});
  std::size_t start = 0, line_no = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    const std::string_view line = trim(strip_comment(text.substr(start, nl - start)));
    start = nl + 1;
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(fmt::format("config line {}: unterminated section header", line_no));
      std::string name(trim(line.substr(1, line.size() - 2)));
      if (name.empty()) fail(fmt::format("config line {}: empty section name", line_no));
      for (const auto& s : table.sections_) {
        if (s.name == name) fail(fmt::format("config line {}: duplicate section [{}]", line_no, name));
      }
      table.sections_.push_back({std::move(name), {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(fmt::format("config line {}: expected key = value", line_no));
    std::string key(trim(line.substr(0, eq)));
    std::string raw(trim(line.substr(eq + 1)));
    if (key.empty()) fail(fmt::format("config line {}: empty key", line_no));
    Value v;
    v.line = line_no;
    if (!raw.empty() && raw.front() == '[') {
      // Arrays may continue over following lines.
      while (raw.back() != ']') {
        if (start > text.size()) fail(fmt::format("config line {}: unterminated array", v.line));
        nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        ++line_no;
        const auto more = trim(strip_comment(text.substr(start, nl - start)));
        start = nl + 1;
        if (!more.empty()) raw += " " + std::string(more);
      }
      v.is_array = true;
      std::string_view body = trim(std::string_view(raw).substr(1, raw.size() - 2));
      if (!body.empty() && body.back() == ',') body = trim(body.substr(0, body.size() - 1));
      if (!body.empty()) {
        for (auto field : csv::split(body)) {
          auto [s, q] = scalar(field, line_no);
          v.items.push_back(std::move(s));
          v.quoted = v.quoted || q;
        }
      }
    } else {
      auto [s, q] = scalar(raw, line_no);
      v.items.push_back(std::move(s));
      v.quoted = q;
    }
    auto& entries = table.sections_.back().entries;
    for (const auto& [k, _] : entries) {
      if (k == key) fail(fmt::format("config line {}: duplicate key '{}'", line_no, key));
    }
    entries.emplace_back(std::move(key), std::move(v));
  }
  return table;
}

bool ConfigTable::has_section(std::string_view section) const {
  return std::any_of(sections_.begin(), sections_.end(),
                     [&](const Section& s) { return s.name == section; });
}

std::vector<std::string> ConfigTable::sections() const {
  std::vector<std::string> out;
  for (const auto& s : sections_) out.push_back(s.name);
  return out;
}

std::vector<std::string> ConfigTable::sections_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& s : sections_) {
    if (s.name.size() > prefix.size() && s.name.compare(0, prefix.size(), prefix) == 0) {
      out.push_back(s.name);
    }
  }
  return out;
}

const ConfigTable::Value* ConfigTable::find(std::string_view section, std::string_view key) const {
  for (const auto& s : sections_) {
    if (s.name != section) continue;
    for (const auto& [k, v] : s.entries) {
      if (k == key) {
        used_[{s.name, k}] = true;
        return &v;
      }
    }
  }
  return nullptr;
}

namespace {

std::string where(std::string_view section, std::string_view key) {
  return section.empty() ? std::string(key) : fmt::format("[{}] {}", section, key);
}

const std::string& single(const ConfigTable::Value& v, std::string_view section,
                          std::string_view key) {
  if (v.is_array || v.items.size() != 1) fail(fmt::format("config: {} must be a single value", where(section, key)));
  return v.items.front();
}

double to_double(const std::string& s, std::string_view section, std::string_view key) {
  const auto d = csv::parse_double(s);
  if (!d || !std::isfinite(*d)) fail(fmt::format("config: {} = '{}' is not a finite number", where(section, key), s));
  return *d;
}

}  // namespace

std::optional<std::string> ConfigTable::get_string(std::string_view section, std::string_view key) const {
  const Value* v = find(section, key);
  if (!v) return std::nullopt;
  return single(*v, section, key);
}

std::optional<double> ConfigTable::get_double(std::string_view section, std::string_view key) const {
  const Value* v = find(section, key);
  if (!v) return std::nullopt;
  return to_double(single(*v, section, key), section, key);
}

std::optional<std::uint64_t> ConfigTable::get_uint(std::string_view section, std::string_view key) const {
  const Value* v = find(section, key);
  if (!v) return std::nullopt;
  const std::string& s = single(*v, section, key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    fail(fmt::format("config: {} = '{}' is not a non-negative integer", where(section, key), s));
  }
  return out;
}

std::optional<bool> ConfigTable::get_bool(std::string_view section, std::string_view key) const {
  const Value* v = find(section, key);
  if (!v) return std::nullopt;
  const std::string& s = single(*v, section, key);
  if (s == "true") return true;
  if (s == "false") return false;
  fail(fmt::format("config: {} must be true or false", where(section, key)));
}

std::optional<std::vector<std::string>> ConfigTable::get_strings(std::string_view section,
                                                                 std::string_view key) const {
  const Value* v = find(section, key);
  if (!v) return std::nullopt;
  return v->items;
}

std::optional<std::vector<double>> ConfigTable::get_doubles(std::string_view section,
                                                            std::string_view key) const {
  const Value* v = find(section, key);
  if (!v) return std::nullopt;
  std::vector<double> out;
  for (const auto& s : v->items) out.push_back(to_double(s, section, key));
  return out;
}

void ConfigTable::reject_unused() const {
  for (const auto& s : sections_) {
    for (const auto& [k, v] : s.entries) {
      if (!used_.count({s.name, k})) {
        fail(fmt::format("config line {}: unknown key {}", v.line, where(s.name, k)));
      }
    }
  }
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

ImputerSpec parse_imputer(const ConfigTable& t, const std::string& section, const std::string& prefix,
                          ImputerSpec spec, bool kind_required) {
  const auto key = [&](std::string_view k) { return prefix + std::string(k); };
  if (auto kind = t.get_string(section, key("kind"))) {
    const auto parsed = parse_imputer_kind(*kind);
    if (!parsed) {
      fail(fmt::format("config: [{}] kind '{}' is not one of mean, median, forward_fill, knn, "
                       "soft_impute, iterative",
                       section, *kind));
    }
    spec.kind = *parsed;
  } else if (kind_required) {
    fail(fmt::format("config: [{}] needs a kind", section));
  }
  if (auto v = t.get_uint(section, key("k"))) spec.k = *v;
  if (auto v = t.get_double(section, key("lambda"))) spec.lambda = *v;
  if (auto v = t.get_uint(section, key("max_rank"))) spec.max_rank = *v;
  if (auto v = t.get_uint(section, key("max_iter"))) spec.max_iter = *v;
  if (auto v = t.get_double(section, key("tol"))) spec.tol = *v;
  if (auto v = t.get_double(section, key("ridge_alpha"))) spec.ridge_alpha = *v;
  if (auto v = t.get_bool(section, key("clip"))) spec.clip = *v;
  try {
    spec.validate();
  } catch (const Error& e) {
    fail(fmt::format("config: [{}] {}", section, e.what()));
  }
  return spec;
}

}  // namespace

Competitor RunConfig::competitor(std::string_view name) const {
  if (name == "tdi") return Competitor{"tdi", tdi};
  for (const auto& [n, spec] : imputers) {
    if (n == name) return Competitor{n, spec};
  }
  fail(fmt::format("config: no imputer named '{}' (define [imputer.{}] or use 'tdi')", name, name));
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir,
                           std::optional<std::uint64_t> seed_override) {
  const ConfigTable t = ConfigTable::parse(text);
  for (const auto& s : t.sections()) {
    static constexpr std::string_view known[] = {"", "data", "synth", "tdi", "impute", "masking", "predict"};
    if (std::find(std::begin(known), std::end(known), s) == std::end(known) &&
        s.rfind("imputer.", 0) != 0) {
      fail(fmt::format("config: unknown section [{}]", s));
    }
  }

  RunConfig cfg;
  cfg.seed = t.get_uint("", "seed").value_or(0);
  if (seed_override) cfg.seed = *seed_override;
  // Component seeds: explicit value when written, otherwise derived from the top-level seed.
  const auto seed_of = [&](const std::string& section, std::string_view component) {
    const auto explicit_seed = t.get_uint(section, "seed");
    return explicit_seed && !seed_override ? *explicit_seed : derive_seed(cfg.seed, component);
  };

  auto& d = cfg.data;
  if (auto v = t.get_string("data", "input")) d.input = resolve(base_dir, *v);
  if (auto v = t.get_strings("data", "variables")) d.variables = *v;
  if (auto v = t.get_double("data", "grid_hours")) d.grid_hours = *v;
  if (!(d.grid_hours > 0.0)) fail("config: [data] grid_hours must be > 0");
  if (auto v = t.get_string("data", "ranges")) d.ranges = resolve(base_dir, *v);
  if (auto v = t.get_bool("data", "standardize")) d.standardize = *v;
  if (auto v = t.get_uint("data", "subsample")) d.subsample = *v;
  if (auto v = t.get_string("data", "labels")) d.labels = resolve(base_dir, *v);
  if (auto v = t.get_string("data", "statics")) d.statics = resolve(base_dir, *v);

  auto& s = cfg.synth;
  if (auto v = t.get_uint("synth", "n_patients")) s.panel.n_patients = *v;
  if (auto v = t.get_uint("synth", "n_timepoints")) s.panel.n_timepoints = *v;
  if (auto v = t.get_uint("synth", "n_variables")) s.panel.n_variables = *v;
  if (auto v = t.get_double("synth", "temporal_corr")) s.panel.temporal_corr = *v;
  if (auto v = t.get_double("synth", "cross_corr")) s.panel.cross_corr = *v;
  if (auto v = t.get_doubles("synth", "missing_profile")) s.panel.missing_profile = *v;
  if (auto v = t.get_double("synth", "step_hours")) s.panel.step_hours = *v;
  s.panel.seed = seed_of("synth", "synth");
  if (auto v = t.get_doubles("synth", "label_variables")) {
    s.label_variables.clear();
    for (double x : *v) {
      if (x < 0 || x != std::floor(x)) fail("config: [synth] label_variables must be column indices");
      s.label_variables.push_back(static_cast<std::size_t>(x));
    }
  }
  if (auto v = t.get_double("synth", "label_strength")) s.label_strength = *v;
  if (auto v = t.get_double("synth", "label_offset")) s.label_offset = *v;
  try {
    s.panel.validate();
  } catch (const Error& e) {
    fail(fmt::format("config: [synth] {}", e.what()));
  }
  for (std::size_t lv : s.label_variables) {
    if (lv >= s.panel.n_variables) fail("config: [synth] label_variables index out of range");
  }

  for (const auto& section : t.sections_with_prefix("imputer.")) {
    const std::string name = section.substr(std::string_view("imputer.").size());
    if (name == "tdi") fail("config: 'tdi' is reserved; configure it in [tdi]");
    ImputerSpec spec = parse_imputer(t, section, "", ImputerSpec{}, true);
    spec.seed = seed_of(section, "imputer." + name);
    cfg.imputers.emplace_back(name, spec);
  }

  TdiSpec& tdi = cfg.tdi;
  if (auto v = t.get_string("tdi", "weight.family")) {
    const auto fam = parse_weight_family(*v);
    if (!fam) fail(fmt::format("config: [tdi] weight.family '{}' is not reciprocal or exponential", *v));
    tdi.weight.family = *fam;
  }
  if (auto v = t.get_double("tdi", "weight.forced")) tdi.weight.forced = *v;
  if (auto v = t.get_string("tdi", "pooling")) {
    if (*v == "pooled") {
      tdi.pooling = FrequencyPooling::pooled;
    } else if (*v == "per_patient") {
      tdi.pooling = FrequencyPooling::per_patient;
    } else {
      fail("config: [tdi] pooling must be pooled or per_patient");
    }
  }
  if (auto kind = t.get_string("tdi", "iterative.kind"); kind && *kind != "iterative") {
    fail("config: [tdi] iterative.kind must be iterative");
  }
  tdi.iterative = parse_imputer(t, "tdi", "iterative.", ImputerSpec::iterative_defaults(), false);
  if (t.get_uint("tdi", "iterative.seed")) {
    fail("config: [tdi] iterative.seed is derived from the tdi seed; set [tdi] seed instead");
  }
  tdi.seed = seed_of("tdi", "tdi");
  cfg.m = t.get_uint("tdi", "m").value_or(1);
  if (cfg.m == 0) fail("config: [tdi] m must be >= 1");
  try {
    tdi.validate();
  } catch (const Error& e) {
    fail(fmt::format("config: [tdi] {}", e.what()));
  }

  if (auto v = t.get_string("impute", "method")) cfg.impute_method = *v;

  auto& mk = cfg.masking;
  if (auto v = t.get_double("masking", "p")) mk.p = *v;
  if (!(mk.p > 0.0 && mk.p <= 1.0)) fail("config: [masking] p must lie in (0, 1]");
  mk.seed = seed_of("masking", "masking");
  if (auto v = t.get_strings("masking", "competitors")) {
    mk.competitors = *v;
  } else {
    for (const auto& [name, _] : cfg.imputers) mk.competitors.push_back(name);
    mk.competitors.push_back("tdi");
  }

  auto& pr = cfg.predict;
  if (auto v = t.get_uint("predict", "n_folds")) pr.cv.n_folds = *v;
  if (auto v = t.get_bool("predict", "stratified")) pr.cv.stratified = *v;
  pr.cv.seed = seed_of("predict", "predict");
  if (auto v = t.get_double("predict", "window_hours")) pr.task.window_hours = *v;
  if (auto v = t.get_uint("predict", "n_obs")) pr.task.n_obs = *v;
  if (auto v = t.get_uint("predict", "min_timepoints")) pr.task.min_timepoints = *v;
  if (auto v = t.get_double("predict", "min_event_hours")) pr.task.min_event_hours = *v;
  if (auto v = t.get_bool("predict", "drop_empty_rows")) pr.task.drop_empty_rows = *v;
  if (auto v = t.get_double("predict", "l2")) pr.logistic.l2 = *v;
  if (auto v = t.get_uint("predict", "max_iter")) pr.logistic.max_iter = *v;
  if (auto v = t.get_strings("predict", "methods")) pr.methods = *v;
  if (pr.cv.n_folds < 2) fail("config: [predict] n_folds must be >= 2");
  if (pr.task.n_obs < 1) fail("config: [predict] n_obs must be >= 1");

  t.reject_unused();

  // Every name referenced must resolve.
  (void)cfg.competitor(cfg.impute_method);
  for (const auto& n : mk.competitors) (void)cfg.competitor(n);
  for (const auto& n : pr.methods) (void)cfg.competitor(n);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  std::string text;
  try {
    text = csv::read_file(path);
  } catch (const Error& e) {
    fail(fmt::format("config: cannot read '{}'", path.string()));
  }
  return parse_run_config(text, path.parent_path(), seed_override);
}

}  // namespace tdi
