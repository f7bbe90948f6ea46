#pragma once

// Per-iteration metrics and their CSV form.

#include <array>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "teki/linalg.hpp"

namespace teki {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// One row of records.csv. Fields that need Jacobians are NaN when diagnostics are off.
struct RunRecord {
  int n = 0;
  double h_n = kNaN;
  double alpha_sq_n = kNaN;
  double rel_err = kNaN;
  double loss = kNaN;
  double misfit = kNaN;
  double eig_min_cuu = kNaN;
  double eig_max_cuu = kNaN;
  double move_norm = kNaN;
  double gn_gap = kNaN;
  double grad_norm = kNaN;
  double omega_n = kNaN;
  double c_n = kNaN;
  double descent_residual = kNaN;
};

inline constexpr std::array<std::string_view, 14> kRecordColumns = {
    "n",       "h_n",       "alpha_sq_n", "rel_err", "loss",    "misfit", "eig_min_cuu",
    "eig_max_cuu", "move_norm", "gn_gap",     "grad_norm", "omega_n", "c_n",    "descent_residual"};

inline double relative_error(const Vector& m, const Vector& truth) {
  if (m.size() != truth.size()) throw std::invalid_argument("relative_error: size mismatch");
  const double denom = truth.norm();
  if (denom == 0.0) throw std::invalid_argument("relative_error: truth is the zero vector");
  return (m - truth).norm() / denom;
}

struct SpectralDiagnostics {
  /// min eigenvalue of Sigma^{1/2} C^{-1} Sigma^{1/2}
  double omega;
  /// min eigenvalue of Sigma^{-1/2} C Sigma^{-1/2}
  double c;
};

inline SpectralDiagnostics spectral_diagnostics(const Matrix& cuu, const Matrix& sigma_eff) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(symmetrize(cuu), symmetrize(sigma_eff), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("spectral_diagnostics: Sigma is not SPD");
  const Vector& ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  return {top > 0.0 ? 1.0 / top : std::numeric_limits<double>::infinity(), ev.minCoeff()};
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string record_csv_header() {
  std::string out;
  for (std::size_t i = 0; i < kRecordColumns.size(); ++i) {
    if (i) out += ',';
    out += kRecordColumns[i];
  }
  return out;
}

inline std::string record_csv_row(const RunRecord& r) {
  const double values[] = {r.h_n,       r.alpha_sq_n,  r.rel_err, r.loss,    r.misfit,
                           r.eig_min_cuu, r.eig_max_cuu, r.move_norm, r.gn_gap, r.grad_norm,
                           r.omega_n,   r.c_n,         r.descent_residual};
  std::string out = std::to_string(r.n);
  for (double v : values) {
    out += ',';
    out += format_double(v);
  }
  return out;
}

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void emit_records(const std::vector<RunRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << record_csv_header() << '\n';
  for (const auto& r : records) out << record_csv_row(r) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

/// Inverse of record_csv_row; exact for rows produced by it.
inline RunRecord parse_record_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  cells.push_back(cell);
  if (cells.size() != kRecordColumns.size()) throw std::invalid_argument("parse_record_row: expected 14 columns");
  auto num = [&](std::size_t i) { return std::strtod(cells[i].c_str(), nullptr); };
  RunRecord r;
  r.n = std::stoi(cells[0]);
  double* fields[] = {&r.h_n,         &r.alpha_sq_n, &r.rel_err,  &r.loss,      &r.misfit,
                      &r.eig_min_cuu, &r.eig_max_cuu, &r.move_norm, &r.gn_gap, &r.grad_norm,
                      &r.omega_n,     &r.c_n,        &r.descent_residual};
  for (std::size_t i = 0; i < 13; ++i) *fields[i] = num(i + 1);
  return r;
}

}  // namespace teki
