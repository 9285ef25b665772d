#pragma once

// Files in and out: CSV data and covariance matrices, JSON hypotheses/configs/results,
// repeated-measures estimation of Omega, and prediction.

#include "mepois/admm.hpp"
#include "mepois/constraints.hpp"
#include "mepois/dataset.hpp"
#include "mepois/inference.hpp"
#include "mepois/model.hpp"
#include "mepois/penalty.hpp"
#include "mepois/simulation.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mepois {

using json = nlohmann::json;

// ---------------------------------------------------------------- CSV

inline constexpr int kFullPrecision = 17;

struct CsvTable {
  std::vector<std::string> header;  // empty for headerless files
  std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  return out;
}

}  // namespace detail

inline double parse_double(const std::string& s, const std::string& where = "") {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (!s.empty() && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || s.empty()) {
    throw InvalidArgument("not a number: '" + s + "'" + (where.empty() ? "" : " (" + where + ")"));
  }
  return v;
}

inline CsvTable read_csv(std::istream& in, bool has_header) {
  CsvTable t;
  std::string line;
  bool first = true;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (first && has_header) {
      t.header = std::move(fields);
      width = t.header.size();
      first = false;
      continue;
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw DimensionMismatch("CSV row " + std::to_string(t.rows.size() + 1) + " has " +
                              std::to_string(fields.size()) + " fields, expected " + std::to_string(width));
    }
    first = false;
    t.rows.push_back(std::move(fields));
  }
  return t;
}

inline CsvTable read_csv(const std::string& path, bool has_header) {
  auto in = detail::open_in(path);
  return read_csv(in, has_header);
}

inline MatrixXd to_matrix(const CsvTable& t) {
  const Index rows = static_cast<Index>(t.rows.size());
  const Index cols = rows > 0 ? static_cast<Index>(t.rows[0].size()) : static_cast<Index>(t.header.size());
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = parse_double(t.rows[i][j], "row " + std::to_string(i + 1) + ", column " + std::to_string(j + 1));
    }
  }
  return m;
}

inline std::string format_double(double v, int digits = kFullPrecision) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

inline void write_matrix_csv(std::ostream& out, const Eigen::Ref<const MatrixXd>& m,
                             const std::vector<std::string>& header = {}) {
  if (!header.empty()) {
    if (static_cast<Index>(header.size()) != m.cols()) throw DimensionMismatch("header width does not match matrix");
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

inline void write_matrix_csv(const std::string& path, const Eigen::Ref<const MatrixXd>& m,
                             const std::vector<std::string>& header = {}) {
  auto out = detail::open_out(path);
  write_matrix_csv(out, m, header);
}

inline MatrixXd read_matrix_csv(const std::string& path) { return to_matrix(read_csv(path, false)); }

/// Data file: header row, a column named `y`, every other column a covariate in file order.
inline std::pair<MatrixXd, VectorXd> read_data_csv(const std::string& path,
                                                   std::vector<std::string>* names = nullptr) {
  const CsvTable t = read_csv(path, true);
  const auto it = std::find(t.header.begin(), t.header.end(), "y");
  if (it == t.header.end()) throw InvalidArgument("'" + path + "' has no column named 'y'");
  const Index ycol = static_cast<Index>(it - t.header.begin());
  const MatrixXd all = to_matrix(t);
  if (all.rows() < 1) throw InvalidArgument("'" + path + "' has no data rows");
  MatrixXd w(all.rows(), all.cols() - 1);
  Index k = 0;
  for (Index j = 0; j < all.cols(); ++j) {
    if (j == ycol) continue;
    w.col(k++) = all.col(j);
    if (names) names->push_back(t.header[j]);
  }
  return {std::move(w), all.col(ycol)};
}

inline void write_data_csv(std::ostream& out, const Dataset& d) {
  std::vector<std::string> header;
  for (Index j = 0; j < d.p(); ++j) header.push_back("w" + std::to_string(j + 1));
  header.push_back("y");
  MatrixXd all(d.n(), d.p() + 1);
  all << d.W, d.Y;
  write_matrix_csv(out, all, header);
}

inline void write_data_csv(const std::string& path, const Dataset& d) {
  auto out = detail::open_out(path);
  write_data_csv(out, d);
}

/// `zero`, `scaled:<c>:<file>` (c times the matrix in file), or a headerless p x p CSV.
inline MatrixXd parse_omega(const std::string& spec, Index p) {
  MatrixXd omega;
  if (spec == "zero") {
    omega = MatrixXd::Zero(p, p);
  } else if (spec.rfind("scaled:", 0) == 0) {
    const auto rest = spec.substr(7);
    const auto colon = rest.find(':');
    if (colon == std::string::npos) throw InvalidArgument("expected scaled:<c>:<file>, got '" + spec + "'");
    const double c = parse_double(rest.substr(0, colon), "omega scale");
    if (!(c >= 0.0)) throw InvalidArgument("omega scale must be nonnegative");
    omega = c * read_matrix_csv(rest.substr(colon + 1));
  } else {
    omega = read_matrix_csv(spec);
  }
  if (omega.rows() != p || omega.cols() != p) {
    throw DimensionMismatch("Omega is " + std::to_string(omega.rows()) + "x" + std::to_string(omega.cols()) +
                            " but the data have " + std::to_string(p) + " covariates");
  }
  check_covariance(omega, "Omega");
  return omega;
}

inline Dataset load_dataset(const std::string& data_path, const std::string& omega_spec) {
  auto [w, y] = read_data_csv(data_path);
  MatrixXd omega = parse_omega(omega_spec, w.cols());
  return Dataset(std::move(w), std::move(y), std::move(omega));
}

// ---------------------------------------------------------------- JSON

inline json to_json(const VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline VectorXd vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw InvalidArgument(what + " must be an array");
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidArgument(what + " must contain numbers");
    v[static_cast<Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline json to_json(const IndexSet& s, bool one_based = true) {
  json a = json::array();
  for (Index j : s) a.push_back(j + (one_based ? 1 : 0));
  return a;
}

/// {"C": [[...]], "t": [...], "M": [...]} with M 1-based, as users number covariates.
inline HypothesisSpec hypothesis_from_json(const json& j) {
  if (!j.is_object() || !j.contains("C") || !j.contains("t") || !j.contains("M")) {
    throw InvalidArgument("hypothesis JSON needs keys C, t and M");
  }
  HypothesisSpec h;
  const json& c = j.at("C");
  if (!c.is_array() || c.empty()) throw InvalidArgument("C must be a nonempty array of rows");
  const Index rows = static_cast<Index>(c.size());
  const Index cols = c[0].is_array() ? static_cast<Index>(c[0].size()) : 0;
  h.C.resize(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const VectorXd row = vector_from_json(c[i], "C row");
    if (row.size() != cols) throw DimensionMismatch("C rows differ in length");
    h.C.row(i) = row.transpose();
  }
  h.t = vector_from_json(j.at("t"), "t");
  const json& m = j.at("M");
  if (!m.is_array()) throw InvalidArgument("M must be an array");
  for (const auto& e : m) {
    if (!e.is_number_integer() || e.get<long long>() < 1) throw InvalidArgument("M entries must be integers >= 1");
    h.M.push_back(static_cast<Index>(e.get<long long>() - 1));
  }
  return h;
}

inline json to_json(const HypothesisSpec& h) {
  json c = json::array();
  for (Index i = 0; i < h.C.rows(); ++i) c.push_back(to_json(VectorXd(h.C.row(i).transpose())));
  return json{{"C", c}, {"t", to_json(h.t)}, {"M", to_json(h.M)}};
}

inline json to_json(const TestResult& r) {
  json j{{"kind", to_string(r.kind)},
         {"statistic", r.statistic},
         {"df", r.df},
         {"p_value", r.p_value},
         {"lambda", r.lambda},
         {"support", to_json(r.support)}};
  return j;
}

inline json to_json(const FitResult& f) {
  json path = json::array();
  for (const auto& [lam, b] : f.bic_path) path.push_back(json{{"lambda", lam}, {"bic", b}});
  return json{{"beta", to_json(f.beta)},
              {"support", to_json(f.support)},
              {"lambda", f.lambda},
              {"converged", f.converged},
              {"iterations", f.iterations},
              {"objective", f.objective},
              {"bic", f.bic},
              {"constraint_residual", f.constraint_residual},
              {"primal_residual", f.primal_residual},
              {"R1", f.radii.R1},
              {"R2", f.radii.R2},
              {"on_boundary", f.on_boundary},
              {"bic_path", path}};
}

inline json to_json(const SizePowerRow& row) {
  return json{{"hypothesis", row.hypothesis}, {"h", row.h},           {"label", row.label},
              {"T_W_rate", row.wald_rate},    {"T_S_rate", row.score_rate}, {"T_W_se", row.wald_se},
              {"T_S_se", row.score_se},       {"reps", row.reps},     {"failures", row.failures}};
}

inline json read_json_file(const std::string& path) {
  auto in = detail::open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("'" + path + "': " + e.what());
  }
}

/// Config file keys: rho, t_max, tol, newton_max, newton_tol, ridge, r1, r2,
/// lambda_grid, penalty ("scad"/"mcp"), shape, sigma ("residual"/"closed-form").
inline void apply_config(const json& j, InferenceOptions& opt) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  static const std::vector<std::string> known = {"rho", "t_max", "tol", "newton_max", "newton_tol", "ridge", "r1",
                                                 "r2", "lambda_grid", "penalty", "shape", "sigma"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw InvalidArgument("unknown config key '" + key + "'");
    }
  }
  try {
    SolverConfig& s = opt.solver;
    if (j.contains("rho")) s.rho = j["rho"].get<double>();
    if (j.contains("t_max")) s.t_max = j["t_max"].get<int>();
    if (j.contains("tol")) s.tol = j["tol"].get<double>();
    if (j.contains("newton_max")) s.newton_max = j["newton_max"].get<int>();
    if (j.contains("newton_tol")) s.newton_tol = j["newton_tol"].get<double>();
    if (j.contains("ridge")) s.ridge = j["ridge"].get<double>();
    if (j.contains("r1")) s.R1 = j["r1"].get<double>();
    if (j.contains("r2")) s.R2 = j["r2"].get<double>();
    if (j.contains("lambda_grid")) opt.grid = j["lambda_grid"].get<std::vector<double>>();
    if (j.contains("penalty")) {
      opt.family = parse_penalty_family(j["penalty"].get<std::string>());
      opt.shape = default_shape(opt.family);
    }
    if (j.contains("shape")) opt.shape = j["shape"].get<double>();
    if (j.contains("sigma")) {
      const auto v = j["sigma"].get<std::string>();
      if (v == "residual") opt.sigma = SigmaEstimator::Residual;
      else if (v == "closed-form") opt.sigma = SigmaEstimator::ClosedForm;
      else throw InvalidArgument("sigma must be 'residual' or 'closed-form'");
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad config value: ") + e.what());
  }
  opt.solver.validate();
}

inline std::vector<double> parse_lambda_grid(const std::string& s) {
  std::vector<double> grid;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) grid.push_back(parse_double(detail::trim(item), "lambda grid"));
  if (grid.empty()) throw InvalidArgument("empty lambda grid");
  for (double l : grid) {
    if (!(l > 0.0)) throw InvalidArgument("lambda values must be positive");
  }
  return grid;
}

// ---------------------------------------------------------------- repeated measures

/// Subject-visit rows: features are the error-prone covariates, age the detrending regressor.
struct LongitudinalPanel {
  std::vector<std::string> subject;
  std::vector<long long> visit;
  MatrixXd features;
  VectorXd age;

  Index rows() const { return features.rows(); }

  void validate() const {
    const auto n = static_cast<std::size_t>(features.rows());
    if (subject.size() != n || visit.size() != n || static_cast<std::size_t>(age.size()) != n) {
      throw DimensionMismatch("panel columns have different lengths");
    }
    if (features.cols() < 1) throw InvalidArgument("panel has no feature columns");
    if (!features.allFinite() || !age.allFinite()) throw InvalidArgument("panel has non-finite entries");
  }
};

/// Columns `subject`, `visit`, `age`; every remaining column is a feature.
inline LongitudinalPanel read_panel_csv(const std::string& path) {
  const CsvTable t = read_csv(path, true);
  auto col = [&](const std::string& name) {
    const auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end()) throw InvalidArgument("panel '" + path + "' has no column '" + name + "'");
    return static_cast<std::size_t>(it - t.header.begin());
  };
  const std::size_t cs = col("subject"), cv = col("visit"), ca = col("age");
  LongitudinalPanel panel;
  std::vector<std::size_t> fcols;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j != cs && j != cv && j != ca) fcols.push_back(j);
  }
  const Index n = static_cast<Index>(t.rows.size());
  panel.features.resize(n, static_cast<Index>(fcols.size()));
  panel.age.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = t.rows[i];
    panel.subject.push_back(r[cs]);
    const double v = parse_double(r[cv], "visit");
    if (std::floor(v) != v) throw InvalidArgument("visit must be an integer");
    panel.visit.push_back(static_cast<long long>(v));
    panel.age[i] = parse_double(r[ca], "age");
    for (std::size_t k = 0; k < fcols.size(); ++k) {
      panel.features(i, static_cast<Index>(k)) = parse_double(r[fcols[k]], t.header[fcols[k]]);
    }
  }
  panel.validate();
  return panel;
}

/// Pooled within-subject covariance of the age-detrended features,
///   sum_i sum_j (u_ij - ubar_i)(u_ij - ubar_i)' / sum_i (n_i - 1),
/// where u are residuals of a per-feature least-squares fit on (1, age).
/// `leading_zeros` error-free covariates are prepended as zero rows and columns.
inline MatrixXd estimate_omega(const LongitudinalPanel& panel, Index leading_zeros = 0) {
  panel.validate();
  if (leading_zeros < 0) throw InvalidArgument("leading_zeros must be nonnegative");
  const Index n = panel.rows();
  const Index q = panel.features.cols();

  std::map<std::string, std::vector<Index>> groups;
  for (Index i = 0; i < n; ++i) groups[panel.subject[static_cast<std::size_t>(i)]].push_back(i);
  Index dof = 0;
  for (const auto& [id, rows] : groups) dof += static_cast<Index>(rows.size()) - 1;
  if (dof < 1) throw InsufficientReplicates("no subject has two or more visits");

  MatrixXd design(n, 2);
  design.col(0).setOnes();
  design.col(1) = panel.age;
  MatrixXd resid = panel.features;
  if (n >= 2) {
    const MatrixXd coef = design.colPivHouseholderQr().solve(panel.features);
    resid = panel.features - design * coef;
  }

  MatrixXd acc = MatrixXd::Zero(q, q);
  for (const auto& [id, rows] : groups) {
    if (rows.size() < 2) continue;
    MatrixXd block(static_cast<Index>(rows.size()), q);
    for (std::size_t k = 0; k < rows.size(); ++k) block.row(static_cast<Index>(k)) = resid.row(rows[k]);
    const Eigen::RowVectorXd mean = block.colwise().mean();
    block.rowwise() -= mean;
    acc.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
  }
  MatrixXd tilde = acc.selfadjointView<Eigen::Lower>();
  tilde /= static_cast<double>(dof);
  tilde = 0.5 * (tilde + tilde.transpose()).eval();

  MatrixXd omega = MatrixXd::Zero(q + leading_zeros, q + leading_zeros);
  omega.bottomRightCorner(q, q) = tilde;
  return omega;
}

// ---------------------------------------------------------------- prediction

/// exp(b'W_i - b'Omega b / 2), or without the halving when `half` is false.
inline VectorXd predict(const VectorXd& beta, const MatrixXd& w_new, const MatrixXd& omega, bool half = true) {
  if (w_new.cols() != beta.size()) throw DimensionMismatch("coefficients do not match columns of W");
  if (omega.rows() != beta.size() || omega.cols() != beta.size()) throw DimensionMismatch("Omega does not match coefficients");
  const double quad = beta.dot(omega * beta);
  VectorXd eta = w_new * beta;
  eta.array() -= (half ? 0.5 : 1.0) * quad;
  if ((eta.array() > kExponentGuard).any()) throw Overflow("prediction exponent exceeds guard");
  return eta.array().exp();
}

/// sum_i |Y_i - Yhat_i| / |Y_i|.
inline double prediction_error(const VectorXd& y, const VectorXd& yhat) {
  if (y.size() != yhat.size()) throw DimensionMismatch("prediction length does not match outcomes");
  double total = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) throw InvalidArgument("relative prediction error is undefined for zero outcomes");
    total += std::abs(y[i] - yhat[i]) / std::abs(y[i]);
  }
  return total;
}

// ---------------------------------------------------------------- preprocessing

inline void center_columns(MatrixXd& m) { m.rowwise() -= m.colwise().mean(); }

/// Centers and divides by the sample standard deviation; constant columns are only centered.
inline void standardize_columns(MatrixXd& m) {
  center_columns(m);
  if (m.rows() < 2) return;
  for (Index j = 0; j < m.cols(); ++j) {
    const double sd = std::sqrt(m.col(j).squaredNorm() / static_cast<double>(m.rows() - 1));
    if (sd > 0.0) m.col(j) /= sd;
  }
}

/// Divides the listed columns by a reference column, which is then dropped.
inline MatrixXd ratio_to_reference(const MatrixXd& m, Index reference, const IndexSet& columns) {
  if (reference < 0 || reference >= m.cols()) throw InvalidArgument("reference column out of range");
  if ((m.col(reference).array() == 0.0).any()) throw InvalidArgument("reference column has zeros");
  MatrixXd out = m;
  for (Index j : columns) {
    if (j < 0 || j >= m.cols()) throw InvalidArgument("ratio column out of range");
    if (j == reference) continue;
    out.col(j) = m.col(j).cwiseQuotient(m.col(reference));
  }
  IndexSet keep;
  for (Index j = 0; j < m.cols(); ++j) {
    if (j != reference) keep.push_back(j);
  }
  MatrixXd dropped(out.rows(), static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) dropped.col(static_cast<Index>(k)) = out.col(keep[k]);
  return dropped;
}

// ---------------------------------------------------------------- tables

inline std::string tsv_header() { return "hypothesis\th\tT_W_rate\tT_S_rate\treps\tfailures"; }

inline std::string tsv_row(const SizePowerRow& row) {
  std::ostringstream os;
  os << std::setprecision(6) << row.hypothesis << '\t' << row.h << '\t' << row.wald_rate << '\t' << row.score_rate
     << '\t' << row.reps << '\t' << row.failures;
  return os.str();
}

}  // namespace mepois
