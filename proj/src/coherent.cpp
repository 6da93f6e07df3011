#include "triplet/coherent.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/tools/roots.hpp>

namespace triplet {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kAngleTol = 1e-6;

bool near_angle(double a, double b) { return std::abs(a - b) < kAngleTol; }

}  // namespace

// ---------------------------------------------------------------------------
// Sequences

double Pulse::angle() const { return 2.0 * kPi * rabi_mhz * duration_us; }

PulseSequence::PulseSequence(std::vector<SequenceElement> elements) : elements_(std::move(elements)) {
  int readouts = 0;
  for (std::size_t i = 0; i < elements_.size(); ++i) {
    const auto& e = elements_[i];
    if (const auto* p = std::get_if<Pulse>(&e)) {
      if (!(p->duration_us >= 0.0) || !std::isfinite(p->duration_us))
        throw InvalidInput("sequence: pulse duration must be >= 0");
      if (!p->pair.valid()) throw InvalidInput("sequence: invalid pulse pair");
      if (!(p->rabi_mhz > 0.0) || !std::isfinite(p->phase_rad))
        throw InvalidInput("sequence: pulse needs rabi > 0 and a finite phase");
    } else if (const auto* d = std::get_if<Delay>(&e)) {
      if (!(d->duration_us >= 0.0) || !std::isfinite(d->duration_us))
        throw InvalidInput("sequence: delay must be >= 0");
    } else {
      const auto& r = std::get<Readout>(e);
      if (!r.pair.valid()) throw InvalidInput("sequence: invalid readout pair");
      ++readouts;
      if (i + 1 != elements_.size()) throw InvalidInput("sequence: readout must be last");
    }
  }
  if (readouts != 1) throw InvalidInput("sequence: exactly one readout required");
}

double PulseSequence::total_duration() const {
  double t = 0.0;
  for (const auto& e : elements_) {
    if (const auto* p = std::get_if<Pulse>(&e)) t += p->duration_us;
    if (const auto* d = std::get_if<Delay>(&e)) t += d->duration_us;
  }
  return t;
}

PulseSequence make_cpmg(SublevelPair pair, int n_pulses, double free_time_us, double rabi_mhz) {
  if (n_pulses < 0) throw InvalidInput("make_cpmg: negative pulse count");
  const double half_pi = 0.25 / rabi_mhz;
  const double pi = 0.5 / rabi_mhz;
  std::vector<SequenceElement> el;
  el.emplace_back(Pulse{pair, rabi_mhz, 0.0, half_pi});
  if (n_pulses == 0) {
    el.emplace_back(Delay{free_time_us});
  } else {
    const double spacing = free_time_us / n_pulses;
    el.emplace_back(Delay{0.5 * spacing});
    for (int k = 0; k < n_pulses; ++k) {
      el.emplace_back(Pulse{pair, rabi_mhz, 0.5 * kPi, pi});
      el.emplace_back(Delay{k + 1 == n_pulses ? 0.5 * spacing : spacing});
    }
  }
  el.emplace_back(Pulse{pair, rabi_mhz, 0.0, half_pi});
  el.emplace_back(Readout{pair});
  return PulseSequence(std::move(el));
}

DecouplingStructure analyze_sequence(const PulseSequence& seq) {
  std::vector<Pulse> pulses;
  std::vector<double> gaps{0.0};  // free time preceding each pulse / after the last
  for (const auto& e : seq.elements()) {
    if (const auto* p = std::get_if<Pulse>(&e)) {
      pulses.push_back(*p);
      gaps.push_back(0.0);
    } else if (const auto* d = std::get_if<Delay>(&e)) {
      gaps.back() += d->duration_us;
    }
  }
  if (pulses.size() < 2) throw UnsupportedSequence("sequence: need opening and closing pi/2 pulses");
  // gaps[0] precedes the first pulse, gaps.back() follows the last pulse
  if (gaps.front() != 0.0 || gaps.back() != 0.0)
    throw UnsupportedSequence("sequence: free evolution outside the pi/2 pulses");
  const SublevelPair pair = pulses.front().pair;
  for (const auto& p : pulses)
    if (!(p.pair == pair)) throw UnsupportedSequence("sequence: pulses on different pairs");
  if (!near_angle(pulses.front().angle(), 0.5 * kPi) || !near_angle(pulses.back().angle(), 0.5 * kPi))
    throw UnsupportedSequence("sequence: must open and close with pi/2 pulses");
  for (std::size_t i = 1; i + 1 < pulses.size(); ++i)
    if (!near_angle(pulses[i].angle(), kPi))
      throw UnsupportedSequence("sequence: inner pulses must be pi pulses");

  const int n = static_cast<int>(pulses.size()) - 2;
  // free intervals between consecutive pulses: gaps[1..n+1]
  std::vector<double> d(gaps.begin() + 1, gaps.end() - 1);
  double total = 0.0;
  for (double v : d) total += v;
  const double tol = 1e-9 * std::max(total, 1e-300);
  if (n >= 1) {
    const double half = d.front();
    if (std::abs(d.back() - half) > tol)
      throw UnsupportedSequence("sequence: non-uniform pulse spacing");
    for (int k = 1; k < n; ++k)
      if (std::abs(d[k] - 2.0 * half) > tol) throw UnsupportedSequence("sequence: non-uniform pulse spacing");
  }
  return {pair, n, total};
}

// ---------------------------------------------------------------------------
// Coherence

std::vector<double> time_grid(double start, double stop, std::size_t count) {
  if (count < 2 || !(stop > start)) throw InvalidInput("time_grid: need count >= 2 and stop > start");
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i)
    g[i] = start + (stop - start) * static_cast<double>(i) / static_cast<double>(count - 1);
  return g;
}

double coherence(const NoiseModel& noise, const SublevelPair& pair, int n_pulses, double t_us) {
  noise.validate();
  if (!(t_us >= 0.0)) throw InvalidInput("coherence: negative time");
  const double chi = decay_exponent(noise, n_pulses, t_us);
  return std::exp(-chi - t_us / noise.t1_limit(pair));
}

namespace {

void check_times(std::span<const double> grid) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || !std::isfinite(grid[i])) throw InvalidInput("trace: times must be >= 0");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw InvalidInput("trace: times must be strictly increasing");
  }
}

}  // namespace

CoherenceTrace coherence_function(const NoiseModel& noise, const SublevelPair& pair, int n_pulses,
                                  std::span<const double> t_grid) {
  check_times(t_grid);
  if (n_pulses < 0) throw InvalidInput("coherence_function: negative pulse count");
  CoherenceTrace out;
  for (double t : t_grid) out.samples.push_back({t, coherence(noise, pair, n_pulses, t)});
  return out;
}

CoherenceTrace coherence_function(const NoiseModel& noise, const PulseSequence& sequence,
                                  std::span<const double> t_grid) {
  const auto s = analyze_sequence(sequence);
  return coherence_function(noise, s.pair, s.n_pulses, t_grid);
}

double t2_effective(const SublevelPair& pair, int n_pulses, const NoiseModel& noise) {
  if (n_pulses < 0) throw InvalidInput("t2_effective: negative pulse count");
  noise.validate();
  const double t1 = noise.t1_limit(pair);
  auto f = [&](double t) { return decay_exponent(noise, n_pulses, t) + t / t1 - 1.0; };
  double hi = std::min(1.0, t1);
  while (f(hi) < 0.0) {
    if (hi >= t1) break;
    hi = std::min(hi * 2.0, t1);
    if (hi > 1e13) throw InvalidInput("t2_effective: no decay");
  }
  if (f(hi) < 0.0) throw InvalidInput("t2_effective: no decay");
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(f, 0.0, hi, -1.0, f(hi),
                                                   boost::math::tools::eps_tolerance<double>(44), iters);
  return 0.5 * (r.first + r.second);
}

// ---------------------------------------------------------------------------
// Rabi

CoherenceTrace rabi_trace(const TripletModel& model, const SublevelPair& drive_pair, double rabi_mhz,
                          std::span<const double> t_grid, const RabiOptions& options) {
  model.validate();
  if (!drive_pair.valid()) throw InvalidInput("rabi_trace: invalid drive pair");
  if (!(rabi_mhz > 0.0) || !std::isfinite(rabi_mhz)) throw InvalidInput("rabi_trace: rabi must be > 0");
  check_times(t_grid);
  double t1 = INFINITY;
  if (options.noise) {
    options.noise->validate();
    t1 = options.noise->t1_limit(drive_pair);
  }
  // resonant two-level rotating frame: U = exp(-i pi rabi t sigma_x)
  CoherenceTrace out;
  for (double t : t_grid) {
    const double envelope = std::exp(-t / t1);
    const double p = 0.5 * (1.0 - envelope * std::cos(2.0 * kPi * rabi_mhz * t));
    out.samples.push_back({t, options.contrast_scale * p});
  }
  return out;
}

// ---------------------------------------------------------------------------
// ESEEM

namespace {

using MatrixXc = Eigen::MatrixXcd;

MatrixXc kron(const MatrixXc& a, const MatrixXc& b) {
  MatrixXc out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Spin-1/2 operator on nucleus k of n, identity elsewhere.
MatrixXc nuclear_op(int k, int n, const Eigen::Matrix2cd& op) {
  MatrixXc out = MatrixXc::Identity(1, 1);
  for (int i = 0; i < n; ++i) out = kron(out, i == k ? MatrixXc(op) : MatrixXc::Identity(2, 2));
  return out;
}

std::array<Eigen::Matrix2cd, 3> pauli_half() {
  const Complex i(0.0, 1.0);
  Eigen::Matrix2cd x, y, z;
  x << 0, 0.5, 0.5, 0;
  y << 0, -0.5 * i, 0.5 * i, 0;
  z << 0.5, 0, 0, -0.5;
  return {x, y, z};
}

void check_nuclei(std::span<const NuclearSpin> nuclei) {
  if (nuclei.size() > kMaxNuclei)
    throw CapacityError("eseem: at most " + std::to_string(kMaxNuclei) + " nuclei supported");
  for (const auto& n : nuclei)
    if (!std::isfinite(n.gamma_mhz_per_t) || !n.hyperfine_mhz.allFinite())
      throw InvalidInput("eseem: non-finite nuclear parameters");
}

struct EchoSetup {
  Eigen::VectorXd energies;
  MatrixXc vectors;
  MatrixXc half_pi, pi;
  MatrixXc rho0, observable;  // observable = |a><b| x 1
};

EchoSetup prepare_echo(const TripletModel& model, const FieldVector& field,
                       std::span<const NuclearSpin> nuclei, const SublevelPair& pair) {
  if (!pair.valid()) throw InvalidInput("eseem: invalid drive pair");
  check_nuclei(nuclei);
  const MatrixXc h = eseem_hamiltonian(model, field, nuclei);
  Eigen::SelfAdjointEigenSolver<MatrixXc> solver(h);
  EchoSetup s;
  s.energies = solver.eigenvalues();
  s.vectors = solver.eigenvectors();

  const auto el = sublevels(model, field);
  const Vector3c a = el.states.col(static_cast<int>(pair.a));
  const Vector3c b = el.states.col(static_cast<int>(pair.b));
  const Matrix3c proj = a * a.adjoint() + b * b.adjoint();
  const Matrix3c x = a * b.adjoint() + b * a.adjoint();
  auto rotation = [&](double theta) {
    const Matrix3c r = Matrix3c::Identity() - (1.0 - std::cos(0.5 * theta)) * proj -
                       Complex(0.0, std::sin(0.5 * theta)) * x;
    return r;
  };
  const int dn = 1 << nuclei.size();
  const MatrixXc id_n = MatrixXc::Identity(dn, dn);
  s.half_pi = kron(rotation(0.5 * kPi), id_n);
  s.pi = kron(rotation(kPi), id_n);
  s.rho0 = kron(MatrixXc(a * a.adjoint()), id_n / static_cast<double>(dn));
  s.observable = kron(MatrixXc(a * b.adjoint()), id_n);
  return s;
}

MatrixXc propagate_echo(const EchoSetup& s, double tau) {
  const Eigen::VectorXcd phases =
      (s.energies.cast<Complex>() * Complex(0.0, -2.0 * kPi * tau)).array().exp().matrix();
  const MatrixXc u = s.vectors * phases.asDiagonal() * s.vectors.adjoint();
  MatrixXc rho = s.half_pi * s.rho0 * s.half_pi.adjoint();
  rho = u * rho * u.adjoint();
  rho = s.pi * rho * s.pi.adjoint();
  rho = u * rho * u.adjoint();
  return rho;
}

}  // namespace

MatrixXc eseem_hamiltonian(const TripletModel& model, const FieldVector& field,
                           std::span<const NuclearSpin> nuclei) {
  check_nuclei(nuclei);
  const int n = static_cast<int>(nuclei.size());
  const int dn = 1 << n;
  const auto ops = spin_operators();
  const std::array<MatrixXc, 3> s{ops.sx.matrix(), ops.sy.matrix(), ops.sz.matrix()};
  const auto pauli = pauli_half();

  MatrixXc h = kron(build_hamiltonian(model, field).matrix(), MatrixXc::Identity(dn, dn));
  const Eigen::Vector3d b_tesla = model.to_molecular(field) * 1e-3;
  const MatrixXc id_e = MatrixXc::Identity(3, 3);
  for (int k = 0; k < n; ++k) {
    const auto& nuc = nuclei[k];
    std::array<MatrixXc, 3> ik;
    for (int c = 0; c < 3; ++c) ik[c] = nuclear_op(k, n, pauli[c]);
    for (int c = 0; c < 3; ++c) h -= nuc.gamma_mhz_per_t * b_tesla(c) * kron(id_e, ik[c]);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (nuc.hyperfine_mhz(i, j) != 0.0) h += nuc.hyperfine_mhz(i, j) * kron(s[i], ik[j]);
  }
  return 0.5 * (h + h.adjoint());
}

MatrixXc eseem_density_matrix(const TripletModel& model, const FieldVector& field,
                              std::span<const NuclearSpin> nuclei, const SublevelPair& drive_pair,
                              double tau_us) {
  if (!(tau_us >= 0.0)) throw InvalidInput("eseem: tau must be >= 0");
  return propagate_echo(prepare_echo(model, field, nuclei, drive_pair), tau_us);
}

CoherenceTrace hahn_echo_eseem(const TripletModel& model, const FieldVector& field,
                               std::span<const NuclearSpin> nuclei, const SublevelPair& drive_pair,
                               std::span<const double> tau_grid, const std::optional<NoiseModel>& noise) {
  check_times(tau_grid);
  const auto setup = prepare_echo(model, field, nuclei, drive_pair);
  const Complex c0 = (propagate_echo(setup, 0.0) * setup.observable).trace();
  CoherenceTrace out;
  for (double tau : tau_grid) {
    const Complex c = (propagate_echo(setup, tau) * setup.observable).trace();
    double signal = (c / c0).real();
    if (noise) signal *= coherence(*noise, drive_pair, 1, 2.0 * tau);
    out.samples.push_back({tau, signal});
  }
  return out;
}

}  // namespace triplet
