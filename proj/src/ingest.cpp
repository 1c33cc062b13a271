#include "tdi/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <fmt/format.h>

#include "tdi/csv.hpp"
#include "tdi/error.hpp"
#include "tdi/rng.hpp"

namespace tdi {
namespace {

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    fn(line_no, line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
}

bool blank(std::string_view line) {
  return line.find_first_not_of(" \t") == std::string_view::npos;
}

}  // namespace

std::vector<LongRecord> parse_long_csv_text(std::string_view text,
                                            std::span<const std::string> declared_variables) {
  std::vector<LongRecord> out;
  bool header_seen = false;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (blank(line)) return;
    const auto fields = csv::split(line);
    if (!header_seen) {
      header_seen = true;
      if (fields.size() != 4 || fields[0] != "patient_id" || fields[1] != "time" ||
          fields[2] != "variable" || fields[3] != "value") {
        throw Error(ErrorKind::MalformedRow,
                    fmt::format("line {}: expected header 'patient_id,time,variable,value'",
                                line_no));
      }
      return;
    }
    if (fields.size() != 4 || fields[0].empty() || fields[2].empty()) {
      throw Error(ErrorKind::MalformedRow, fmt::format("line {}: expected 4 fields", line_no));
    }
    const auto time = csv::parse_double(fields[1]);
    const auto value = csv::parse_double(fields[3]);
    if (!time || !value) {
      throw Error(ErrorKind::MalformedRow, fmt::format("line {}: unparsable number", line_no));
    }
    if (!std::isfinite(*time) || !std::isfinite(*value)) {
      throw Error(ErrorKind::NonFiniteValue, fmt::format("line {}: non-finite number", line_no));
    }
    if (*time < 0.0) {
      throw Error(ErrorKind::MalformedRow, fmt::format("line {}: negative time", line_no));
    }
    std::string variable(fields[2]);
    if (!declared_variables.empty() &&
        std::find(declared_variables.begin(), declared_variables.end(), variable) ==
            declared_variables.end()) {
      throw Error(ErrorKind::UnknownVariable,
                  fmt::format("line {}: unknown variable '{}'", line_no, variable));
    }
    out.push_back(LongRecord{std::string(fields[0]), *time, std::move(variable), *value});
  });
  return out;
}

std::vector<LongRecord> parse_long_csv(const std::filesystem::path& path,
                                       std::span<const std::string> declared_variables) {
  return parse_long_csv_text(csv::read_file(path), declared_variables);
}

RangeTable parse_ranges_csv_text(std::string_view text) {
  RangeTable ranges;
  bool header_seen = false;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (blank(line) || line.front() == '#') return;
    const auto fields = csv::split(line);
    if (!header_seen) {
      header_seen = true;
      if (fields.size() == 3 && fields[0] == "variable") return;
    }
    if (fields.size() != 3) {
      throw Error(ErrorKind::MalformedRow,
                  fmt::format("ranges line {}: expected variable,low,high", line_no));
    }
    const auto low = csv::parse_double(fields[1]);
    const auto high = csv::parse_double(fields[2]);
    if (!low || !high || !(*low < *high)) {
      throw Error(ErrorKind::MalformedRow,
                  fmt::format("ranges line {}: need numeric low < high", line_no));
    }
    ranges[std::string(fields[0])] = ValueRange{*low, *high};
  });
  return ranges;
}

RangeTable parse_ranges_csv(const std::filesystem::path& path) {
  return parse_ranges_csv_text(csv::read_file(path));
}

OutlierFilterResult remove_outliers(std::vector<LongRecord> records, const RangeTable& ranges) {
  OutlierFilterResult result;
  result.records.reserve(records.size());
  for (auto& r : records) {
    const auto it = ranges.find(r.variable);
    if (it != ranges.end() && !it->second.contains(r.value)) {
      ++result.n_dropped;
      continue;
    }
    result.records.push_back(std::move(r));
  }
  return result;
}

PanelDataset discretize(std::span<const LongRecord> records, double grid_hours,
                        std::span<const std::string> variable_order, const RangeTable* ranges) {
  if (!(grid_hours > 0.0) || !std::isfinite(grid_hours)) {
    throw Error(ErrorKind::DomainError, "discretize: grid_hours must be positive");
  }
  if (records.empty()) throw Error(ErrorKind::EmptyCohort, "discretize: no records");

  std::vector<std::string> names(variable_order.begin(), variable_order.end());
  std::unordered_map<std::string, std::size_t> var_index;
  for (std::size_t d = 0; d < names.size(); ++d) var_index.emplace(names[d], d);
  if (names.empty()) {
    for (const auto& r : records) {
      if (var_index.emplace(r.variable, names.size()).second) names.push_back(r.variable);
    }
  }
  const std::size_t D = names.size();

  struct Bin {
    std::vector<double> sum;
    std::vector<std::size_t> count;
  };
  std::vector<std::string> patient_ids;
  std::unordered_map<std::string, std::size_t> patient_index;
  std::vector<std::map<long long, Bin>> bins;

  for (const auto& r : records) {
    const auto vit = var_index.find(r.variable);
    if (vit == var_index.end()) {
      throw Error(ErrorKind::UnknownVariable,
                  fmt::format("discretize: unknown variable '{}'", r.variable));
    }
    auto [pit, inserted] = patient_index.emplace(r.patient_id, patient_ids.size());
    if (inserted) {
      patient_ids.push_back(r.patient_id);
      bins.emplace_back();
    }
    const auto key = static_cast<long long>(std::floor(r.time / grid_hours));
    auto& bin = bins[pit->second][key];
    if (bin.sum.empty()) {
      bin.sum.assign(D, 0.0);
      bin.count.assign(D, 0);
    }
    bin.sum[vit->second] += r.value;
    ++bin.count[vit->second];
  }

  std::vector<VariableMeta> meta;
  meta.reserve(D);
  for (const auto& n : names) {
    VariableMeta vm{n, "", std::nullopt};
    if (ranges) {
      if (const auto it = ranges->find(n); it != ranges->end()) vm.valid_range = it->second;
    }
    meta.push_back(std::move(vm));
  }

  std::vector<PatientSeries> patients;
  patients.reserve(patient_ids.size());
  for (std::size_t i = 0; i < patient_ids.size(); ++i) {
    const auto& pb = bins[i];
    std::vector<double> times;
    times.reserve(pb.size());
    Matrix values(static_cast<Eigen::Index>(pb.size()), static_cast<Eigen::Index>(D));
    Eigen::Index row = 0;
    for (const auto& [key, bin] : pb) {
      times.push_back(static_cast<double>(key) * grid_hours);
      for (std::size_t d = 0; d < D; ++d) {
        values(row, static_cast<Eigen::Index>(d)) =
            bin.count[d] == 0 ? kMissing : bin.sum[d] / static_cast<double>(bin.count[d]);
      }
      ++row;
    }
    patients.emplace_back(patient_ids[i], std::move(times), std::move(values));
  }
  return PanelDataset(std::move(meta), std::move(patients));
}

std::string to_long_csv(const PanelDataset& data) {
  std::string out = "patient_id,time,variable,value\n";
  for (const auto& p : data.patients()) {
    for (std::size_t t = 0; t < p.rows(); ++t) {
      for (std::size_t d = 0; d < data.n_variables(); ++d) {
        const auto v = p.value(t, d);
        if (!v) continue;
        out += fmt::format("{},{},{},{}\n", p.id(), csv::format_double(p.time(t)),
                           data.variables()[d].name, csv::format_double(*v));
      }
    }
  }
  return out;
}

StandardizationParams fit_standardizer(const PanelDataset& data) {
  const std::size_t D = data.n_variables();
  StandardizationParams params;
  params.mean.assign(D, 0.0);
  params.std.assign(D, 1.0);
  std::vector<std::size_t> n(D, 0);
  for (const auto& p : data.patients()) {
    for (std::size_t t = 0; t < p.rows(); ++t) {
      for (std::size_t d = 0; d < D; ++d) {
        if (const auto v = p.value(t, d)) {
          params.mean[d] += *v;
          ++n[d];
        }
      }
    }
  }
  for (std::size_t d = 0; d < D; ++d) {
    if (n[d] > 0) params.mean[d] /= static_cast<double>(n[d]);
  }
  std::vector<double> ss(D, 0.0);
  for (const auto& p : data.patients()) {
    for (std::size_t t = 0; t < p.rows(); ++t) {
      for (std::size_t d = 0; d < D; ++d) {
        if (const auto v = p.value(t, d)) ss[d] += (*v - params.mean[d]) * (*v - params.mean[d]);
      }
    }
  }
  for (std::size_t d = 0; d < D; ++d) {
    const double sd = n[d] > 0 ? std::sqrt(ss[d] / static_cast<double>(n[d])) : 0.0;
    if (n[d] < 2 || !(sd > 0.0)) {
      params.std[d] = 1.0;
      params.degenerate.push_back(data.variables()[d].name);
    } else {
      params.std[d] = sd;
    }
  }
  return params;
}

namespace {

PanelDataset transform(const PanelDataset& data, const StandardizationParams& params, bool forward) {
  const std::size_t D = data.n_variables();
  if (params.mean.size() != D || params.std.size() != D) {
    throw Error(ErrorKind::ShapeMismatch, "standardizer: parameter count differs from panel");
  }
  std::vector<Matrix> values;
  values.reserve(data.n_patients());
  for (const auto& p : data.patients()) {
    Matrix m = p.values();
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
      for (std::size_t d = 0; d < D; ++d) {
        double& x = m(t, static_cast<Eigen::Index>(d));
        if (is_missing(x)) continue;
        x = forward ? (x - params.mean[d]) / params.std[d] : x * params.std[d] + params.mean[d];
      }
    }
    values.push_back(std::move(m));
  }
  return data.with_values(std::move(values));
}

}  // namespace

PanelDataset apply_standardizer(const PanelDataset& data, const StandardizationParams& params) {
  return transform(data, params, true);
}

PanelDataset invert_standardizer(const PanelDataset& data, const StandardizationParams& params) {
  return transform(data, params, false);
}

void SyntheticConfig::validate() const {
  if (n_patients < 1 || n_timepoints < 1 || n_variables < 1) {
    throw Error(ErrorKind::Config, "synthetic: counts must be >= 1");
  }
  if (!(temporal_corr >= 0.0 && temporal_corr < 1.0)) {
    throw Error(ErrorKind::Config, "synthetic: temporal_corr must be in [0, 1)");
  }
  if (!(cross_corr >= -1.0 && cross_corr <= 1.0)) {
    throw Error(ErrorKind::Config, "synthetic: cross_corr must be in [-1, 1]");
  }
  if (missing_profile.empty() ||
      (missing_profile.size() != 1 && missing_profile.size() != n_variables)) {
    throw Error(ErrorKind::Config,
                "synthetic: missing_profile needs 1 or n_variables probabilities");
  }
  for (double p : missing_profile) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::Config, "synthetic: missing probabilities must be in [0, 1]");
    }
  }
  if (!(step_hours > 0.0)) throw Error(ErrorKind::Config, "synthetic: step_hours must be > 0");
}

double SyntheticConfig::missing_probability(std::size_t d) const {
  return missing_profile.size() == 1 ? missing_profile[0] : missing_profile[d];
}

SyntheticPanel generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t D = cfg.n_variables;
  const std::size_t T = cfg.n_timepoints;
  const double phi = cfg.temporal_corr;
  const double innovation = std::sqrt(1.0 - phi * phi);
  const double shared = std::sqrt(std::abs(cfg.cross_corr));
  const double own = std::sqrt(1.0 - std::abs(cfg.cross_corr));

  std::vector<double> loading(D, shared);
  if (cfg.cross_corr < 0.0) {
    for (std::size_t d = 1; d < D; d += 2) loading[d] = -shared;
  }

  Rng values_rng(derive_seed(cfg.seed, "synthetic.values"));
  Rng missing_rng(derive_seed(cfg.seed, "synthetic.missingness"));

  std::vector<VariableMeta> meta;
  for (std::size_t d = 0; d < D; ++d) meta.push_back({fmt::format("x{}", d), "", std::nullopt});

  std::vector<PatientSeries> truth_rows;
  std::vector<PatientSeries> observed_rows;
  std::vector<MaskBlock> mask_blocks;
  const int width = static_cast<int>(fmt::format("{}", cfg.n_patients - 1).size());

  for (std::size_t i = 0; i < cfg.n_patients; ++i) {
    Matrix truth(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(D));
    double latent = values_rng.normal();
    std::vector<double> noise(D);
    for (auto& e : noise) e = values_rng.normal();
    for (std::size_t t = 0; t < T; ++t) {
      if (t > 0) {
        latent = phi * latent + innovation * values_rng.normal();
        for (auto& e : noise) e = phi * e + innovation * values_rng.normal();
      }
      for (std::size_t d = 0; d < D; ++d) {
        truth(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)) =
            loading[d] * latent + own * noise[d];
      }
    }
    Matrix observed = truth;
    MaskBlock mask(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(D));
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t d = 0; d < D; ++d) {
        const bool drop = missing_rng.uniform() < cfg.missing_probability(d);
        const auto r = static_cast<Eigen::Index>(t);
        const auto c = static_cast<Eigen::Index>(d);
        mask(r, c) = drop ? 0 : 1;
        if (drop) observed(r, c) = kMissing;
      }
    }
    std::vector<double> times(T);
    for (std::size_t t = 0; t < T; ++t) times[t] = static_cast<double>(t) * cfg.step_hours;
    const std::string id = fmt::format("p{:0{}}", i, width);
    truth_rows.emplace_back(id, times, std::move(truth));
    observed_rows.emplace_back(id, std::move(times), std::move(observed));
    mask_blocks.push_back(std::move(mask));
  }
  return SyntheticPanel{PanelDataset(meta, std::move(truth_rows)),
                        PanelDataset(meta, std::move(observed_rows)),
                        MaskMatrix(std::move(mask_blocks))};
}

PanelDataset subsample_patients(const PanelDataset& data, std::size_t n, std::uint64_t seed) {
  if (n >= data.n_patients()) return data;
  std::vector<std::size_t> idx(data.n_patients());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(seed, "subsample"));
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return data.subset(idx);
}

}  // namespace tdi
