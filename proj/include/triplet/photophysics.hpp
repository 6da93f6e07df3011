#pragma once

// Five-level classical rate model: S0, S1 and the three triplet sublevels.
// Rates are in 1/us; populations are occupation probabilities.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "triplet/spin_core.hpp"

namespace triplet {

enum class Level { S0 = 0, S1 = 1, Tx = 2, Ty = 3, Tz = 4 };
inline constexpr int kNumLevels = 5;

// Triplet array slot (0 = Tx, 1 = Ty, 2 = Tz) and level index for a sublevel.
int triplet_slot(Sublevel s);
Level level_of(Sublevel s);

using RateMatrix = Eigen::Matrix<double, kNumLevels, kNumLevels>;

struct MicrowaveTransfer {
  SublevelPair pair;
  double rate = 0.0;  // symmetric two-way transfer, 1/us
};

struct RateSet {
  double k_pump = 10.0;
  double k_fl = 1e3;
  std::array<double, 3> k_isc{6.0, 2.0, 0.5};   // S1 -> Tx, Ty, Tz
  std::array<double, 3> k_dec{0.05, 0.5, 0.02};  // Tx, Ty, Tz -> S0
  std::vector<MicrowaveTransfer> mw;

  // Throws InvalidInput on negative or non-finite rates.
  void validate() const;
  bool pumpable() const;
};

class PopulationVector {
 public:
  using Vector = Eigen::Matrix<double, kNumLevels, 1>;

  PopulationVector();  // all population in S0
  // Throws InvalidInput unless p_i >= -1e-12 and sum within 1e-9 of 1.
  explicit PopulationVector(const Vector& p);

  const Vector& values() const { return p_; }
  double operator[](Level l) const { return p_(static_cast<int>(l)); }
  double sum() const { return p_.sum(); }

  static PopulationVector ground();

 private:
  Vector p_;
};

struct OdmrSample {
  double freq_mhz = 0.0;
  double contrast = 0.0;
};

struct OdmrSpectrum {
  std::vector<OdmrSample> samples;
};

struct OdmrOptions {
  double linewidth_fwhm_mhz = 5.0;
  double mw_strength = 1.0;  // peak transfer rate for unit amplitude, 1/us
  // Lab-frame linear drive polarization; unset means orientation-averaged.
  std::optional<Eigen::Vector3d> drive_axis;
};

// dp/dt = M p. Column sums of M are exactly zero.
RateMatrix rate_matrix(const RateSet& rates);

PopulationVector evolve_populations(const RateSet& rates, const PopulationVector& p0, double t_us);

// Throws AmbiguityError when the null space of M is not one-dimensional.
PopulationVector steady_state(const RateSet& rates);

double photon_rate(const RateSet& rates, const PopulationVector& p);

// Lorentzian with unit peak height.
double lorentzian(double f, double center, double fwhm);

OdmrSpectrum simulate_cw_odmr(const TripletModel& model, const RateSet& rates,
                              const FieldVector& field, std::span<const double> grid_mhz,
                              const OdmrOptions& options = {});

OdmrSpectrum simulate_double_resonance(const TripletModel& model, const RateSet& rates,
                                       const FieldVector& field, double hold_mhz,
                                       std::span<const double> sweep_mhz,
                                       const OdmrOptions& options = {});

std::vector<double> frequency_grid(double start, double stop, double step);

}  // namespace triplet
