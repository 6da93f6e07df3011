#pragma once

// Inversion layer: peak fitting, ZFS extraction, orientation fitting, decay and
// CPMG-scaling fits, ESEEM Larmor regression, polarization fits, orientation
// clustering and field inversion.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "triplet/coherent.hpp"
#include "triplet/fit.hpp"
#include "triplet/photophysics.hpp"
#include "triplet/spin_core.hpp"

namespace triplet {

// ---------------------------------------------------------------------------
// Peaks

struct PeakGuess {
  double center_mhz = 0.0;
  double fwhm_mhz = 5.0;
  double amplitude = 0.0;
};

struct PeakFitOptions {
  std::optional<std::vector<PeakGuess>> init;
  std::optional<double> baseline;  // initial baseline
  LmOptions lm;
};

// Parameters center_k, fwhm_k, amplitude_k (k = 1..n, ascending center) and
// baseline. Model: baseline + sum_k amplitude_k L(f; center_k, fwhm_k) with
// unit-height Lorentzians.
FitResult fit_peaks(const OdmrSpectrum& spectrum, int n_peaks, const PeakFitOptions& options = {});

// Residual model - data over the spectrum, parameters packed per peak as
// (center, fwhm, amplitude) followed by the baseline.
LeastSquaresProblem peaks_problem(const OdmrSpectrum& spectrum, int n_peaks);
double peaks_model(const Eigen::VectorXd& params, double f);

// n_peaks initial guesses from the largest deviations from the median.
std::vector<PeakGuess> guess_peaks(const OdmrSpectrum& spectrum, int n_peaks);

// ---------------------------------------------------------------------------
// ZFS from line positions

enum class LineRole { TwoE, DMinusE, DPlusE };

struct ZfsEstimate {
  ZfsParams zfs;
  // |f(2E) + f(D-E) - f(D+E)| when all three roles are present, else 0.
  double residual_mhz = 0.0;
  bool has_residual = false;
  std::vector<LineRole> roles;
};

// Roles default to ordering: with three lines smallest = 2E, middle = D - E,
// largest = D + E; with two lines the pair is taken as {2E, D - E}.
// Throws Underdetermined with fewer than two lines.
ZfsEstimate zfs_from_peaks(std::span<const double> centers_mhz,
                           std::optional<std::vector<LineRole>> roles = std::nullopt);

// ---------------------------------------------------------------------------
// Orientation

struct OrientationPoint {
  FieldVector field;
  SublevelPair pair;
  double freq_mhz = 0.0;
  double sigma_mhz = 1.0;
};

using OrientationDataset = std::vector<OrientationPoint>;

struct OrientationFit : FitResult {
  // Canonical representative: beta in [0, 90], gamma in [0, 180), alpha in [0, 360).
  Orientation orientation;
  // All members of the D2 equivalence class, in degrees, canonical one first.
  std::vector<std::array<double, 3>> equivalents_deg;
  // Number of independent components (of 5) of the lab-frame ZFS tensor fixed
  // by the field directions; below 5 a continuous family of orientations fits.
  int tensor_rank = 0;
};

struct OrientationFitOptions {
  // Extra starting orientation tried alongside the fixed grid.
  std::optional<Orientation> init;
  LmOptions lm;
};

// Parameters alpha_deg, beta_deg, gamma_deg. Multi-start over 12 icosahedral
// z-axis directions times gamma in {0, 60, 120} degrees.
OrientationFit fit_orientation(const OrientationDataset& data, const ZfsParams& zfs, double g,
                               const OrientationFitOptions& options = {});

// Weighted residuals (f_model - f_meas) / sigma in Euler angles (radians),
// with a Hellmann-Feynman Jacobian.
LeastSquaresProblem orientation_problem(const OrientationDataset& data, const ZfsParams& zfs, double g);

// Canonical representative and class members of the D2 symmetry group.
Orientation fold_orientation(const Orientation& o);
std::vector<Orientation> equivalent_orientations(const Orientation& o);

// Smallest rotation angle (degrees) between a and any member of b's class.
double orientation_distance_deg(const Orientation& a, const Orientation& b);

// Triplet energies depend on the field only through |B|^2 and B.D_lab.B, so a
// set of field directions n constrains the traceless tensor D_lab through the
// span of n n^T. Returns that span's dimension (0..5).
int field_direction_rank(const OrientationDataset& data);

// ---------------------------------------------------------------------------
// Decay

struct DecayFitOptions {
  bool fit_offset = true;
  std::optional<double> fixed_exponent;
  double min_exponent = 0.5;
  double max_exponent = 3.0;
  LmOptions lm;
};

// A exp(-(t/T2)^n) + c. Parameters amplitude, t2_us, exponent, offset.
FitResult fit_decay(const CoherenceTrace& trace, const DecayFitOptions& options = {});

// ---------------------------------------------------------------------------
// CPMG scaling

struct CpmgPoint {
  double n_pulses = 1.0;
  double t2_us = 0.0;
};

struct CpmgFitOptions {
  double sharpness = 4.0;
  // Upper bound on the saturation value (e.g. the configured lifetime limit).
  std::optional<double> t_sat_max_us;
  LmOptions lm;
};

// T2(N) = (T0^-k N^-k gamma_s + T_sat^-k)^(-1/k), fitted on log T2.
// Parameters t0_us, gamma_s, t_sat_us. Throws Underdetermined with < 4 points.
FitResult fit_cpmg_scaling(std::span<const CpmgPoint> points, const CpmgFitOptions& options = {});
double cpmg_scaling_model(double n, double t0, double gamma_s, double t_sat, double sharpness = 4.0);

// ---------------------------------------------------------------------------
// Larmor regression

struct FieldTrace {
  double field_mt = 0.0;
  CoherenceTrace trace;
};

// Dominant modulation frequency (MHz) of a trace; throws NoModulation when
// fewer than two periods fit in the trace or no modulation is present.
double modulation_frequency(const CoherenceTrace& trace);

// Parameter gamma_mhz_per_t. Traces without modulation are excluded and
// listed in warnings; throws Underdetermined if fewer than 3 remain.
FitResult fit_larmor(std::span<const FieldTrace> traces);

// ---------------------------------------------------------------------------
// Polarization

struct PolarizationSample {
  double angle_deg = 0.0;
  double counts = 0.0;
};

using PolarizationScan = std::vector<PolarizationSample>;

// A cos^2(theta - theta0) + C; parameters theta0_deg in [0, 180), amplitude, offset.
FitResult fit_polarization(const PolarizationScan& scan, const LmOptions& lm = {});

inline constexpr std::array<double, 3> kOrientationClasses{0.0, 60.0, 120.0};

struct ClusterResult {
  std::vector<int> assignment;  // index into kOrientationClasses
  std::vector<bool> tie;
  std::array<int, 3> counts{};
  std::array<double, 3> circular_mean_deg{};  // NaN for empty classes
  std::array<double, 3> circular_std_deg{};
  double bin_width_deg = 10.0;
  std::vector<int> histogram;  // bins over [0, 180)
};

ClusterResult cluster_orientations(std::span<const double> angles_deg, double bin_width_deg = 10.0);

// ---------------------------------------------------------------------------
// Magnetometry

// f_pair(B direction) - f_pair(0).
double field_shift(const TripletModel& model, const SublevelPair& pair, const Eigen::Vector3d& direction,
                   double b_mt);

// |B| such that the pair's shift equals shift_mhz along the unit direction,
// by bisection on [0, b_max] to 1e-4 mT. Throws NonMonotoneBracket or OutOfRange.
double invert_field(double shift_mhz, const SublevelPair& pair, const TripletModel& model,
                    const Eigen::Vector3d& direction, double b_max_mt);

}  // namespace triplet
