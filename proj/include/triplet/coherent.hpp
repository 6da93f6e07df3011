#pragma once

// Coherent dynamics on the triplet: Rabi driving, filter-function dephasing
// under Ramsey / Hahn / CPMG sequences, and exact Hahn-echo ESEEM with a few
// hyperfine-coupled spin-1/2 nuclei.
//
// Noise spectral densities are in angular units: S(omega) with omega in rad/us,
// so that chi(t) = (1/pi) int_0^inf S(omega) F_N(omega t) / omega^2 d omega and a
// white component S = s0 decays as exp(-s0 t / 2).

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "triplet/spin_core.hpp"

namespace triplet {

inline constexpr double kProtonGammaMhzPerT = 42.577478;
inline constexpr double kDeuteronGammaMhzPerT = 6.535903;

// ---------------------------------------------------------------------------
// Pulse sequences

struct Pulse {
  SublevelPair pair;
  double rabi_mhz = 1.0;
  double phase_rad = 0.0;
  double duration_us = 0.0;

  // Rotation angle 2 pi rabi duration.
  double angle() const;
};

struct Delay {
  double duration_us = 0.0;
};

struct Readout {
  SublevelPair pair;
};

using SequenceElement = std::variant<Pulse, Delay, Readout>;

class PulseSequence {
 public:
  PulseSequence() = default;
  // Throws InvalidInput unless durations are >= 0, pairs valid, and there is
  // exactly one Readout, placed last.
  explicit PulseSequence(std::vector<SequenceElement> elements);

  const std::vector<SequenceElement>& elements() const { return elements_; }
  double total_duration() const;

 private:
  std::vector<SequenceElement> elements_;
};

// pi/2 - [t/2N - pi - t/N - ... - pi - t/2N] - pi/2 - readout, with ideal
// (short) pulses. n_pulses = 0 gives Ramsey, 1 gives Hahn echo.
PulseSequence make_cpmg(SublevelPair pair, int n_pulses, double free_time_us,
                        double rabi_mhz = 1e4);

struct DecouplingStructure {
  SublevelPair pair;
  int n_pulses = 0;
  double free_time_us = 0.0;
};

// Recognizes Ramsey/Hahn/CPMG structure; throws UnsupportedSequence otherwise
// (including non-uniform pi-pulse spacing).
DecouplingStructure analyze_sequence(const PulseSequence& seq);

// ---------------------------------------------------------------------------
// Noise

struct WhiteNoise {
  double s0 = 0.0;  // 1/us
};

// Ornstein-Uhlenbeck frequency noise with rms amplitude b (MHz) and
// correlation time tau_c: S(omega) = 2 (2 pi b)^2 tau_c / (1 + omega^2 tau_c^2).
struct LorentzianNoise {
  double b_mhz = 0.0;
  double tau_c_us = 0.0;
};

// Piecewise-linear S(omega) on an ascending omega grid, zero outside.
struct TabulatedNoise {
  std::vector<double> omega;
  std::vector<double> density;
};

using NoiseComponent = std::variant<WhiteNoise, LorentzianNoise, TabulatedNoise>;

struct NoiseModel {
  std::array<double, 3> t1_us{1e12, 1e12, 1e12};  // Tx, Ty, Tz
  std::vector<NoiseComponent> dephasing;

  void validate() const;
  double spectral_density(double omega) const;
  // 2 / (1/T1_a + 1/T1_b)
  double t1_limit(const SublevelPair& pair) const;
};

double spectral_density(const NoiseComponent& c, double omega);

// Filter function F_N(x) with x = omega t, normalized so that F_0 = 2 sin^2(x/2).
double filter_function(int n_pulses, double x);
// Direct sum over pulse times; slower, valid everywhere.
double filter_function_sum(int n_pulses, double x);

// (1/pi) int_0^inf S(omega) F_N(omega t) / omega^2 d omega by panel-wise adaptive
// Gauss-Kronrod quadrature plus a period-averaged tail. rel_tol defaults to 1e-6.
double filter_integral(const std::function<double(double)>& s_omega, int n_pulses, double t_us,
                       double rel_tol = 1e-6);

// chi(t) summed over all dephasing components.
double decay_exponent(const NoiseModel& noise, int n_pulses, double t_us);

// ---------------------------------------------------------------------------
// Traces

struct TraceSample {
  double t_us = 0.0;
  double signal = 0.0;
};

struct CoherenceTrace {
  std::vector<TraceSample> samples;
};

std::vector<double> time_grid(double start, double stop, std::size_t count);

// C(t) = exp(-chi(t) - t / T1_limit(pair)).
double coherence(const NoiseModel& noise, const SublevelPair& pair, int n_pulses, double t_us);

// The sequence fixes pair and pulse count; t_grid sets the total free evolution times.
CoherenceTrace coherence_function(const NoiseModel& noise, const PulseSequence& sequence,
                                  std::span<const double> t_grid);
CoherenceTrace coherence_function(const NoiseModel& noise, const SublevelPair& pair, int n_pulses,
                                  std::span<const double> t_grid);

// 1/e time of the N-pulse CPMG coherence on the pair.
double t2_effective(const SublevelPair& pair, int n_pulses, const NoiseModel& noise);

// ---------------------------------------------------------------------------
// Rabi

struct RabiOptions {
  double contrast_scale = 1.0;
  std::optional<NoiseModel> noise;  // exp(-t / T1_limit) envelope when set
};

// Population transferred to the other level of drive_pair after a resonant
// drive of duration t, times contrast_scale.
CoherenceTrace rabi_trace(const TripletModel& model, const SublevelPair& drive_pair,
                          double rabi_mhz, std::span<const double> t_grid,
                          const RabiOptions& options = {});

// ---------------------------------------------------------------------------
// ESEEM

struct NuclearSpin {
  double gamma_mhz_per_t = kProtonGammaMhzPerT;
  Eigen::Matrix3d hyperfine_mhz = Eigen::Matrix3d::Zero();  // molecular frame
};

inline constexpr int kMaxNuclei = 4;

// Joint electron-nuclear Hamiltonian (MHz) in the |m_s> x |m_I...> product basis.
Eigen::MatrixXcd eseem_hamiltonian(const TripletModel& model, const FieldVector& field,
                                   std::span<const NuclearSpin> nuclei);

// Density matrix at the echo time 2 tau after pi/2 - tau - pi - tau on drive_pair,
// starting from the first level of the pair with unpolarized nuclei.
Eigen::MatrixXcd eseem_density_matrix(const TripletModel& model, const FieldVector& field,
                                      std::span<const NuclearSpin> nuclei,
                                      const SublevelPair& drive_pair, double tau_us);

// Echo amplitude versus tau, normalized to 1 at tau = 0. With a noise model the
// Hahn-echo envelope C(2 tau) multiplies the signal.
CoherenceTrace hahn_echo_eseem(const TripletModel& model, const FieldVector& field,
                               std::span<const NuclearSpin> nuclei, const SublevelPair& drive_pair,
                               std::span<const double> tau_grid,
                               const std::optional<NoiseModel>& noise = std::nullopt);

// ---------------------------------------------------------------------------
// Presets

struct CoherencePreset {
  std::string name;
  NoiseModel noise;
  double target_hahn_t2_us = 0.0;
  SublevelPair hahn_pair = kPairYZ;
  SublevelPair protected_pair = kPairXZ;
};

// "Pc-H14-RT", "Pc-H14-4K", "Pc-D14-4K". The Lorentzian amplitude is solved
// for on first use so that the Hahn-echo 1/e time on hahn_pair equals the target.
const CoherencePreset& coherence_preset(const std::string& name);
std::vector<std::string> coherence_preset_names();

// Solves for b (MHz) such that t2_effective(pair, 1, noise with b) == target.
double calibrate_lorentzian_amplitude(NoiseModel noise, std::size_t component,
                                      const SublevelPair& pair, double target_t2_us);

}  // namespace triplet
