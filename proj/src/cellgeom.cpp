#include "lctem/cellgeom.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <string>

#include "lctem/error.hpp"
#include "lctem/text.hpp"

namespace lctem::cellgeom {

namespace {

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

struct LinearFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd std_error;
  double residual_rms = 0.0;
};

LinearFit least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const char* what) {
  const auto n = x.rows(), p = x.cols();
  if (n < p) throw DegenerateDesignError(std::string(what) + ": fewer observations than parameters");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-12);
  if (qr.rank() < p) throw DegenerateDesignError(std::string(what) + ": rank-deficient design");
  LinearFit f;
  f.coef = qr.solve(y);
  const Eigen::VectorXd r = y - x * f.coef;
  const double rss = r.squaredNorm();
  f.residual_rms = std::sqrt(rss / static_cast<double>(n));
  const double sigma2 = n > p ? rss / static_cast<double>(n - p) : 0.0;
  const Eigen::MatrixXd cov = (x.transpose() * x).inverse() * sigma2;
  f.std_error = cov.diagonal().cwiseSqrt();
  return f;
}

std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path,
                                                  const std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || split(line, ',') != header) {
    std::string want;
    for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
    throw InputError(path.string() + ": expected header '" + want + "'");
  }
  std::vector<std::vector<double>> rows;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    const std::string where = path.string() + " row " + std::to_string(row);
    if (cells.size() != header.size()) throw InputError(where + ": wrong number of columns");
    std::vector<double> v;
    for (std::size_t i = 0; i < cells.size(); ++i) v.push_back(parse_double(cells[i], where + " " + header[i]));
    rows.push_back(std::move(v));
  }
  return rows;
}

}  // namespace

TiltSeries::TiltSeries(std::vector<TiltSample> samples) : samples_(std::move(samples)) {
  std::set<double> nonzero;
  for (const auto& s : samples_) {
    if (!std::isfinite(s.theta_deg) || !std::isfinite(s.displacement_um))
      throw InputError("tilt series: non-finite sample");
    if (std::abs(s.theta_deg) >= 90.0) throw InputError("tilt series: |theta| must be below 90 degrees");
    if (s.theta_deg != 0.0) nonzero.insert(s.theta_deg);
  }
  if (nonzero.empty()) throw DegenerateDesignError("tilt series: all angles are zero");
  if (nonzero.size() < 2) throw InputError("tilt series: need at least two distinct non-zero angles");
}

SeparationFit fit_separation(const TiltSeries& series) {
  double sl = 0.0, ss = 0.0;
  for (const auto& s : series.samples()) {
    const double sn = std::sin(radians(s.theta_deg));
    sl += s.displacement_um * sn;
    ss += sn * sn;
  }
  if (ss == 0.0) throw DegenerateDesignError("fit_separation: all angles are zero");
  SeparationFit f;
  f.h_prime_um = sl / ss;
  double rss = 0.0;
  for (const auto& s : series.samples()) {
    const double r = s.displacement_um - f.h_prime_um * std::sin(radians(s.theta_deg));
    rss += r * r;
  }
  const auto n = static_cast<double>(series.samples().size());
  f.residual_rms_um = std::sqrt(rss / n);
  f.std_error_um = n > 1 ? std::sqrt(rss / (n - 1) / ss) : 0.0;
  return f;
}

double liquid_thickness(double h_prime_um, double particle_diameter_um) {
  if (!(h_prime_um >= 0.0) || !(particle_diameter_um >= 0.0))
    throw InputError("liquid_thickness: arguments must be non-negative");
  return h_prime_um + particle_diameter_um;
}

MembraneFit fit_profile(const std::vector<ProfilePoint>& points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n < 3) throw DegenerateDesignError("fit_profile: need at least three points");
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    x(i, 0) = -(p.x_um * p.x_um + p.y_um * p.y_um);
    x(i, 1) = 1.0;
    y(i) = p.thickness_um;
  }
  const auto f = least_squares(x, y, "fit_profile");
  MembraneFit m;
  m.a_per_um = f.coef(0);
  m.b_um = f.coef(1);
  m.a_se_per_um = f.std_error(0);
  m.b_se_um = f.std_error(1);
  m.residual_rms_um = f.residual_rms;
  return m;
}

EdgeFit fit_edge(const std::vector<EdgePoint>& points, Side side) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n < 3) throw DegenerateDesignError("fit_edge: need at least three points");
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    x(i, 0) = -p.coord_um * p.coord_um;
    x(i, 1) = 1.0;
    y(i) = p.thickness_um;
  }
  const auto f = least_squares(x, y, "fit_edge");
  return {f.coef(0), f.coef(1), side};
}

void CellSpec::validate() const {
  if (!(w_um > 0.0) || !(wa_um > 0.0) || !(s_um > 0.0)) throw InputError("cell: sizes must be positive");
  if (wa_um > 2.0 * w_um || w_um > 2.0 * wa_um)
    throw InputError("cell: actual window size must be within a factor 2 of nominal");
}

ScalingFit scaling_relations(const std::vector<EdgeObservation>& observations) {
  std::vector<const EdgeObservation*> up, lo;
  for (const auto& o : observations) {
    o.cell.validate();
    if (!(o.fit.g_per_um > 0.0)) throw InputError("scaling_relations: edge curvature must be positive");
    (o.fit.side == Side::Upper ? up : lo).push_back(&o);
  }
  auto inverse_slope = [](const std::vector<const EdgeObservation*>& obs) {
    std::set<double> widths;
    double num = 0.0, den = 0.0;
    for (const auto* o : obs) {
      widths.insert(o->cell.wa_um);
      num += o->cell.wa_um / o->fit.g_per_um;
      den += o->cell.wa_um * o->cell.wa_um;
    }
    if (widths.size() < 2) throw DegenerateDesignError("scaling_relations: need two distinct W_A per side");
    return den / num;
  };
  ScalingFit out;
  out.params.a_upper = inverse_slope(up);
  out.params.a_lower = inverse_slope(lo);

  const auto n = static_cast<Eigen::Index>(observations.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = observations[static_cast<std::size_t>(i)];
    x(i, o.fit.side == Side::Upper ? 0 : 1) = o.cell.wa_um;
    x(i, 2) = 1.0;
    y(i) = o.fit.h_edge_um - o.cell.s_um;
  }
  const auto joint = least_squares(x, y, "scaling_relations");
  out.params.b_upper = joint.coef(0);
  out.params.b_lower = joint.coef(1);
  out.params.eta_um = joint.coef(2);
  out.residual_rms_um = joint.residual_rms;

  auto own_intercept = [](const std::vector<const EdgeObservation*>& obs) {
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(obs.size()), 2);
    Eigen::VectorXd ys(xs.rows());
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      const auto* o = obs[static_cast<std::size_t>(i)];
      xs(i, 0) = o->cell.wa_um;
      xs(i, 1) = 1.0;
      ys(i) = o->fit.h_edge_um - o->cell.s_um;
    }
    return least_squares(xs, ys, "scaling_relations").coef(1);
  };
  out.eta_upper_um = own_intercept(up);
  out.eta_lower_um = own_intercept(lo);
  return out;
}

double empirical_thickness(double r_um, const CellSpec& cell, const EmpiricalParams& p) {
  if (!(r_um >= 0.0)) throw InputError("empirical_thickness: r must be non-negative");
  if (!(cell.wa_um > 0.0)) throw InputError("empirical_thickness: W_A must be positive");
  return -(std::sqrt(p.a_upper * p.a_lower) / cell.wa_um) * r_um * r_um + (p.b_upper + p.b_lower) * cell.wa_um +
         p.eta_um + cell.s_um;
}

TiltSeries load_tilt_csv(const std::filesystem::path& path) {
  std::vector<TiltSample> s;
  for (const auto& r : read_numeric_csv(path, {"theta_deg", "displacement_um"})) s.push_back({r[0], r[1]});
  return TiltSeries(std::move(s));
}

std::vector<ProfilePoint> load_profile_csv(const std::filesystem::path& path) {
  std::vector<ProfilePoint> p;
  for (const auto& r : read_numeric_csv(path, {"x_um", "y_um", "thickness_um"})) p.push_back({r[0], r[1], r[2]});
  return p;
}

}  // namespace lctem::cellgeom
