#pragma once

#include <filesystem>
#include <vector>

namespace lctem::cellgeom {

// Lengths are micrometres throughout. Curvature coefficients a and g are
// stored in 1/um and only scaled to 1/mm for reporting (kPerUmToPerMm).
inline constexpr double kPerUmToPerMm = 1e3;

struct TiltSample {
  double theta_deg = 0.0;
  double displacement_um = 0.0;
};

/// Tilt series; construction checks >= 2 distinct non-zero angles, |theta| < 90.
class TiltSeries {
 public:
  explicit TiltSeries(std::vector<TiltSample> samples);
  const std::vector<TiltSample>& samples() const { return samples_; }

 private:
  std::vector<TiltSample> samples_;
};

struct SeparationFit {
  double h_prime_um = 0.0;
  double residual_rms_um = 0.0;
  double std_error_um = 0.0;
};

/// l(theta) = h' sin(theta), closed-form least squares.
SeparationFit fit_separation(const TiltSeries& series);

/// Particles sit on both membranes, so the liquid is one diameter thicker.
double liquid_thickness(double h_prime_um, double particle_diameter_um);

struct ProfilePoint {
  double x_um = 0.0;
  double y_um = 0.0;
  double thickness_um = 0.0;
};

struct MembraneFit {
  double a_per_um = 0.0;
  double b_um = 0.0;
  double a_se_per_um = 0.0;
  double b_se_um = 0.0;
  double residual_rms_um = 0.0;
  double a_per_mm() const { return a_per_um * kPerUmToPerMm; }
};

/// h' = -a r^2 + b with r^2 = x^2 + y^2; unweighted.
MembraneFit fit_profile(const std::vector<ProfilePoint>& points);

enum class Side { Upper, Lower };

struct EdgePoint {
  double coord_um = 0.0;
  double thickness_um = 0.0;
};

struct EdgeFit {
  double g_per_um = 0.0;
  double h_edge_um = 0.0;
  Side side = Side::Upper;
  double g_per_mm() const { return g_per_um * kPerUmToPerMm; }
};

EdgeFit fit_edge(const std::vector<EdgePoint>& points, Side side);

struct CellSpec {
  double w_um = 0.0;
  double wa_um = 0.0;
  double s_um = 0.0;
  void validate() const;
};

struct EmpiricalParams {
  double a_upper = 0.20;
  double a_lower = 0.11;
  double b_upper = 0.038;
  double b_lower = 0.018;
  double eta_um = 2.5;
};

struct EdgeObservation {
  EdgeFit fit;
  CellSpec cell;
};

struct ScalingFit {
  EmpiricalParams params;
  // h_edge - S = b W_A + eta fitted with a separate eta per side
  double eta_upper_um = 0.0;
  double eta_lower_um = 0.0;
  double residual_rms_um = 0.0;
};

/// g = a / W_A per side (fitted as 1/g proportional to W_A through the origin),
/// then h_edge - S = b_side W_A + eta with eta shared by both sides.
ScalingFit scaling_relations(const std::vector<EdgeObservation>& observations);

/// h(r) = -(sqrt(aU aL) / W_A) r^2 + (bU + bL) W_A + eta + S
double empirical_thickness(double r_um, const CellSpec& cell, const EmpiricalParams& params = {});

/// `theta_deg,displacement_um`
TiltSeries load_tilt_csv(const std::filesystem::path& path);
/// `x_um,y_um,thickness_um`
std::vector<ProfilePoint> load_profile_csv(const std::filesystem::path& path);

}  // namespace lctem::cellgeom
