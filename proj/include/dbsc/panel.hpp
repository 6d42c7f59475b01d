#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dbsc/csv.hpp"
#include "dbsc/error.hpp"

namespace dbsc {

/// Observed panel. Unit 0 is the treated unit; rows 1..J of `covariates`,
/// `coordinates` and `unit_labels` are the donors, in the same order as the
/// columns of `donor_outcomes`.
///
/// Time is 1-based in files and 0-based here: period t (1..T) lives at
/// index t - 1. The first `intervention_time` periods are pre-intervention.
struct PanelData {
  Eigen::VectorXd treated_outcomes;  // T
  Eigen::MatrixXd donor_outcomes;    // T x J
  int intervention_time = 0;         // T0
  Eigen::MatrixXd covariates;        // n x q, non-spatial
  Eigen::MatrixXd coordinates;       // n x k
  std::vector<std::string> unit_labels;
  std::vector<std::string> covariate_names;
  std::vector<std::string> coordinate_names;

  int n_units() const { return static_cast<int>(unit_labels.size()); }
  int n_donors() const { return static_cast<int>(donor_outcomes.cols()); }
  int n_periods() const { return static_cast<int>(treated_outcomes.size()); }
  int n_post() const { return n_periods() - intervention_time; }

  void validate() const {
    const int n = n_units();
    const int T = n_periods();
    if (n_donors() < 1) throw ValidationError("panel has zero donors");
    if (donor_outcomes.cols() != n - 1)
      throw ValidationError("donor outcome columns must equal n_units - 1");
    if (donor_outcomes.rows() != T)
      throw ValidationError("donor outcome rows must equal the number of periods");
    if (intervention_time < 2)
      throw ValidationError("intervention_time must be >= 2 (lag term needs two pre-periods)");
    if (intervention_time >= T) throw ValidationError("intervention_time must be < number of periods");
    if (covariates.rows() != n) throw ValidationError("covariate rows must equal n_units");
    if (coordinates.rows() != n) throw ValidationError("coordinate rows must equal n_units");
    if (coordinates.cols() < 1) throw ValidationError("at least one coordinate column is required");
    if (!treated_outcomes.allFinite() || !donor_outcomes.allFinite())
      throw ValidationError("outcomes contain non-finite values");
    if (!covariates.allFinite() || !coordinates.allFinite())
      throw ValidationError("covariates or coordinates contain non-finite values");
    if (static_cast<Eigen::Index>(covariate_names.size()) != covariates.cols() ||
        static_cast<Eigen::Index>(coordinate_names.size()) != coordinates.cols())
      throw ValidationError("column names do not match covariate/coordinate widths");
  }
};

struct StandardizationRecord {
  double outcome_mean = 0.0;
  double outcome_sd = 1.0;
  Eigen::VectorXd covariate_means;
  Eigen::VectorXd covariate_sds;

  double to_original(double standardized) const { return standardized * outcome_sd + outcome_mean; }
  double to_standard(double original) const { return (original - outcome_mean) / outcome_sd; }
};

struct IngestSettings {
  int intervention_time = 0;
  // Names of the coordinate columns in the covariates file. Empty selects
  // every column named p<digits>.
  std::vector<std::string> coordinate_columns;
};

namespace detail {

inline bool all_integer(const std::vector<std::string>& ids) {
  long long v;
  return std::all_of(ids.begin(), ids.end(), [&](const std::string& s) { return csv::parse_int(s, v); });
}

// Integer ids sort numerically, anything else lexicographically.
inline void sort_unit_ids(std::vector<std::string>& ids) {
  if (all_integer(ids)) {
    std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
      long long x = 0, y = 0;
      csv::parse_int(a, x);
      csv::parse_int(b, y);
      return x < y;
    });
  } else {
    std::sort(ids.begin(), ids.end());
  }
}

inline double sample_mean(const Eigen::Ref<const Eigen::VectorXd>& v) { return v.mean(); }

inline double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace detail

inline PanelData load_panel(const std::string& outcomes_path, const std::string& covariates_path,
                            const IngestSettings& settings) {
  const csv::Table cov = csv::read(covariates_path);
  const std::size_t c_unit = cov.column("unit_id");
  const std::size_t c_treated = cov.column("treated");

  std::vector<std::size_t> coord_cols, covar_cols;
  std::set<std::string> wanted(settings.coordinate_columns.begin(), settings.coordinate_columns.end());
  static const std::regex coord_pattern("p[0-9]+");
  for (std::size_t c = 0; c < cov.header.size(); ++c) {
    if (c == c_unit || c == c_treated) continue;
    const bool is_coord = settings.coordinate_columns.empty()
                              ? std::regex_match(cov.header[c], coord_pattern)
                              : wanted.count(cov.header[c]) > 0;
    (is_coord ? coord_cols : covar_cols).push_back(c);
  }
  for (const auto& name : settings.coordinate_columns)
    if (!cov.has_column(name)) throw ValidationError(covariates_path + ": missing coordinate column '" + name + "'");
  if (coord_cols.empty()) throw ValidationError(covariates_path + ": no coordinate columns found");

  std::optional<std::string> treated_id;
  std::vector<std::string> donor_ids;
  std::map<std::string, std::size_t> cov_row;
  for (std::size_t r = 0; r < cov.rows.size(); ++r) {
    const auto& row = cov.rows[r];
    const std::string& id = row[c_unit];
    if (id.empty()) throw ValidationError(covariates_path + ":" + std::to_string(cov.line_numbers[r]) + ": empty unit_id");
    if (!cov_row.emplace(id, r).second) throw ValidationError(covariates_path + ": duplicate unit " + id);
    if (row[c_treated] == "1") {
      if (treated_id) throw ValidationError(covariates_path + ": more than one unit flagged treated");
      treated_id = id;
    } else if (row[c_treated] == "0") {
      donor_ids.push_back(id);
    } else {
      throw ValidationError(covariates_path + ": treated flag for unit " + id + " must be 0 or 1");
    }
  }
  if (!treated_id) throw ValidationError(covariates_path + ": no unit flagged treated");
  if (donor_ids.empty()) throw ValidationError(covariates_path + ": zero donors");
  detail::sort_unit_ids(donor_ids);

  std::vector<std::string> labels{*treated_id};
  labels.insert(labels.end(), donor_ids.begin(), donor_ids.end());
  std::map<std::string, int> unit_index;
  for (std::size_t i = 0; i < labels.size(); ++i) unit_index[labels[i]] = static_cast<int>(i);

  const csv::Table out = csv::read(outcomes_path);
  const std::size_t o_unit = out.column("unit_id");
  const std::size_t o_time = out.column("time");
  const std::size_t o_value = out.column("outcome");

  long long T = 0;
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    long long t;
    if (!csv::parse_int(out.rows[r][o_time], t) || t < 1)
      throw ValidationError(outcomes_path + ":" + std::to_string(out.line_numbers[r]) +
                            ": time must be a positive integer");
    T = std::max(T, t);
  }
  if (T < 1) throw ValidationError(outcomes_path + ": no outcome rows");

  const Eigen::Index n = static_cast<Eigen::Index>(labels.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd values = Eigen::MatrixXd::Constant(T, n, nan);
  std::vector<std::vector<bool>> seen(n, std::vector<bool>(T, false));
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    const auto& row = out.rows[r];
    auto it = unit_index.find(row[o_unit]);
    if (it == unit_index.end())
      throw ValidationError(outcomes_path + ":" + std::to_string(out.line_numbers[r]) + ": unit " + row[o_unit] +
                            " not present in covariates file");
    long long t = 0;
    csv::parse_int(row[o_time], t);
    if (seen[it->second][t - 1])
      throw ValidationError("duplicate outcome for unit " + row[o_unit] + ", time " + std::to_string(t));
    seen[it->second][t - 1] = true;
    double v;
    const std::string& cell = row[o_value];
    if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") continue;  // reported below
    if (!csv::parse_double(cell, v) || !std::isfinite(v))
      throw ValidationError(outcomes_path + ":" + std::to_string(out.line_numbers[r]) + ": invalid outcome '" +
                            cell + "' for unit " + row[o_unit] + ", time " + std::to_string(t));
    values(t - 1, it->second) = v;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (long long t = 1; t <= T; ++t)
      if (std::isnan(values(t - 1, i)))
        throw ValidationError("missing outcome for unit " + labels[i] + ", time " + std::to_string(t));

  PanelData panel;
  panel.unit_labels = labels;
  panel.treated_outcomes = values.col(0);
  panel.donor_outcomes = values.rightCols(n - 1);
  panel.intervention_time = settings.intervention_time;
  panel.covariates.resize(n, static_cast<Eigen::Index>(covar_cols.size()));
  panel.coordinates.resize(n, static_cast<Eigen::Index>(coord_cols.size()));
  for (auto c : covar_cols) panel.covariate_names.push_back(cov.header[c]);
  for (auto c : coord_cols) panel.coordinate_names.push_back(cov.header[c]);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = cov.rows[cov_row.at(labels[i])];
    auto fill = [&](const std::vector<std::size_t>& cols, Eigen::MatrixXd& dst) {
      for (std::size_t j = 0; j < cols.size(); ++j) {
        double v;
        if (!csv::parse_double(row[cols[j]], v) || !std::isfinite(v))
          throw ValidationError(covariates_path + ": invalid value in column '" + cov.header[cols[j]] +
                                "' for unit " + labels[i]);
        dst(i, static_cast<Eigen::Index>(j)) = v;
      }
    };
    fill(covar_cols, panel.covariates);
    fill(coord_cols, panel.coordinates);
  }
  panel.validate();
  return panel;
}

/// Writes the panel in the long-format ingestion schema.
inline void write_panel(const PanelData& panel, std::ostream& outcomes, std::ostream& covariates) {
  outcomes << "unit_id,time,outcome\n";
  for (int i = 0; i < panel.n_units(); ++i)
    for (int t = 0; t < panel.n_periods(); ++t) {
      const double v = i == 0 ? panel.treated_outcomes(t) : panel.donor_outcomes(t, i - 1);
      csv::write_row(outcomes, {panel.unit_labels[i], std::to_string(t + 1), csv::format(v)});
    }
  std::vector<std::string> header{"unit_id", "treated"};
  header.insert(header.end(), panel.covariate_names.begin(), panel.covariate_names.end());
  header.insert(header.end(), panel.coordinate_names.begin(), panel.coordinate_names.end());
  csv::write_row(covariates, header);
  for (int i = 0; i < panel.n_units(); ++i) {
    std::vector<std::string> row{panel.unit_labels[i], i == 0 ? "1" : "0"};
    for (Eigen::Index c = 0; c < panel.covariates.cols(); ++c) row.push_back(csv::format(panel.covariates(i, c)));
    for (Eigen::Index c = 0; c < panel.coordinates.cols(); ++c) row.push_back(csv::format(panel.coordinates(i, c)));
    csv::write_row(covariates, row);
  }
}

/// Outcomes are centred and scaled with the treated unit's pre-period mean
/// and sample sd (common scale for all series); covariates per column over
/// all n units. Coordinates are left untouched.
inline std::pair<PanelData, StandardizationRecord> standardize(const PanelData& panel) {
  panel.validate();
  StandardizationRecord rec;
  const auto pre = panel.treated_outcomes.head(panel.intervention_time);
  rec.outcome_mean = detail::sample_mean(pre);
  rec.outcome_sd = detail::sample_sd(pre);
  if (!(rec.outcome_sd > 0.0))
    throw ValidationError("zero variance in pre-period outcomes of treated unit " + panel.unit_labels[0]);

  const Eigen::Index q = panel.covariates.cols();
  rec.covariate_means.resize(q);
  rec.covariate_sds.resize(q);
  for (Eigen::Index c = 0; c < q; ++c) {
    rec.covariate_means(c) = detail::sample_mean(panel.covariates.col(c));
    rec.covariate_sds(c) = detail::sample_sd(panel.covariates.col(c));
    if (!(rec.covariate_sds(c) > 0.0))
      throw ValidationError("zero variance in covariate '" + panel.covariate_names[c] + "'");
  }

  PanelData out = panel;
  out.treated_outcomes = (panel.treated_outcomes.array() - rec.outcome_mean) / rec.outcome_sd;
  out.donor_outcomes = (panel.donor_outcomes.array() - rec.outcome_mean) / rec.outcome_sd;
  for (Eigen::Index c = 0; c < q; ++c)
    out.covariates.col(c) = (panel.covariates.col(c).array() - rec.covariate_means(c)) / rec.covariate_sds(c);
  return {std::move(out), std::move(rec)};
}

inline PanelData unstandardize(const PanelData& panel, const StandardizationRecord& rec) {
  PanelData out = panel;
  out.treated_outcomes = panel.treated_outcomes.array() * rec.outcome_sd + rec.outcome_mean;
  out.donor_outcomes = panel.donor_outcomes.array() * rec.outcome_sd + rec.outcome_mean;
  for (Eigen::Index c = 0; c < panel.covariates.cols(); ++c)
    out.covariates.col(c) = panel.covariates.col(c).array() * rec.covariate_sds(c) + rec.covariate_means(c);
  return out;
}

/// Euclidean centroid distance of each donor to the treated unit, in
/// coordinate units.
inline Eigen::VectorXd donor_centroid_distances(const PanelData& panel) {
  const int J = panel.n_donors();
  Eigen::VectorXd d(J);
  for (int j = 0; j < J; ++j) d(j) = (panel.coordinates.row(j + 1) - panel.coordinates.row(0)).norm();
  return d;
}

/// Keeps donors whose centroid distance to the treated unit is <= max_distance.
inline PanelData trim_donors(const PanelData& panel, double max_distance) {
  if (!(max_distance > 0.0)) throw ValidationError("max_distance must be > 0");
  const Eigen::VectorXd d = donor_centroid_distances(panel);
  std::vector<int> keep;
  for (int j = 0; j < panel.n_donors(); ++j)
    if (d(j) <= max_distance) keep.push_back(j);
  if (keep.empty()) throw ValidationError("trimming at max_distance removes every donor");
  if (static_cast<int>(keep.size()) == panel.n_donors()) return panel;

  const Eigen::Index J = static_cast<Eigen::Index>(keep.size());
  PanelData out;
  out.treated_outcomes = panel.treated_outcomes;
  out.intervention_time = panel.intervention_time;
  out.covariate_names = panel.covariate_names;
  out.coordinate_names = panel.coordinate_names;
  out.donor_outcomes.resize(panel.n_periods(), J);
  out.covariates.resize(J + 1, panel.covariates.cols());
  out.coordinates.resize(J + 1, panel.coordinates.cols());
  out.covariates.row(0) = panel.covariates.row(0);
  out.coordinates.row(0) = panel.coordinates.row(0);
  out.unit_labels.push_back(panel.unit_labels[0]);
  for (Eigen::Index k = 0; k < J; ++k) {
    const int j = keep[k];
    out.donor_outcomes.col(k) = panel.donor_outcomes.col(j);
    out.covariates.row(k + 1) = panel.covariates.row(j + 1);
    out.coordinates.row(k + 1) = panel.coordinates.row(j + 1);
    out.unit_labels.push_back(panel.unit_labels[j + 1]);
  }
  return out;
}

}  // namespace dbsc
