#include "triplet/photophysics.hpp"

#include <cmath>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "triplet/parallel.hpp"

namespace triplet {

int triplet_slot(Sublevel s) {
  switch (s) {
    case Sublevel::Tx: return 0;
    case Sublevel::Ty: return 1;
    case Sublevel::Tz: return 2;
  }
  return 0;
}

Level level_of(Sublevel s) { return static_cast<Level>(2 + triplet_slot(s)); }

void RateSet::validate() const {
  auto check = [](double r, const char* what) {
    if (!std::isfinite(r) || r < 0.0)
      throw InvalidInput(std::string("rates: ") + what + " must be finite and >= 0");
  };
  check(k_pump, "k_pump");
  check(k_fl, "k_fl");
  for (double r : k_isc) check(r, "k_isc");
  for (double r : k_dec) check(r, "k_dec");
  for (const auto& m : mw) {
    check(m.rate, "mw rate");
    if (!m.pair.valid()) throw InvalidInput("rates: invalid microwave pair");
  }
}

bool RateSet::pumpable() const {
  bool isc = false, dec = false;
  for (double r : k_isc) isc |= r > 0.0;
  for (double r : k_dec) dec |= r > 0.0;
  return isc && dec;
}

PopulationVector::PopulationVector() : p_(Vector::Zero()) { p_(0) = 1.0; }

PopulationVector::PopulationVector(const Vector& p) : p_(p) {
  if (!p.allFinite()) throw InvalidInput("populations: non-finite entry");
  if (p.minCoeff() < -1e-12) throw InvalidInput("populations: negative entry");
  if (std::abs(p.sum() - 1.0) > 1e-9) throw InvalidInput("populations: sum differs from 1");
}

PopulationVector PopulationVector::ground() { return PopulationVector(); }

RateMatrix rate_matrix(const RateSet& rates) {
  rates.validate();
  RateMatrix m = RateMatrix::Zero();
  // off-diagonal (to, from) entries first; diagonals are minus the column sums
  auto add = [&](int from, int to, double k) { m(to, from) += k; };
  const int s0 = 0, s1 = 1;
  add(s0, s1, rates.k_pump);
  add(s1, s0, rates.k_fl);
  for (int i = 0; i < 3; ++i) {
    add(s1, 2 + i, rates.k_isc[i]);
    add(2 + i, s0, rates.k_dec[i]);
  }
  for (const auto& t : rates.mw) {
    const int a = static_cast<int>(level_of(t.pair.a));
    const int b = static_cast<int>(level_of(t.pair.b));
    add(a, b, t.rate);
    add(b, a, t.rate);
  }
  for (int c = 0; c < kNumLevels; ++c) {
    double out = 0.0;
    for (int r = 0; r < kNumLevels; ++r)
      if (r != c) out += m(r, c);
    m(c, c) = -out;
  }
  return m;
}

namespace {

PopulationVector clean(PopulationVector::Vector p) {
  for (int i = 0; i < kNumLevels; ++i)
    if (p(i) < 0.0 && p(i) > -1e-12) p(i) = 0.0;
  p /= p.sum();
  return PopulationVector(p);
}

}  // namespace

PopulationVector evolve_populations(const RateSet& rates, const PopulationVector& p0, double t_us) {
  if (!std::isfinite(t_us) || t_us < 0.0) throw InvalidInput("evolve_populations: t must be >= 0");
  const RateMatrix m = rate_matrix(rates);
  if (t_us == 0.0 || m.isZero(0.0)) return p0;
  const RateMatrix propagator = (m * t_us).exp();
  return clean(propagator * p0.values());
}

PopulationVector steady_state(const RateSet& rates) {
  const RateMatrix m = rate_matrix(rates);
  Eigen::FullPivLU<RateMatrix> lu(m);
  lu.setThreshold(1e-12);
  if (lu.rank() != kNumLevels - 1)
    throw AmbiguityError("steady_state: rate matrix null space has dimension " +
                         std::to_string(kNumLevels - lu.rank()));
  PopulationVector::Vector p = lu.kernel().col(0);
  p /= p.sum();
  return clean(p);
}

double photon_rate(const RateSet& rates, const PopulationVector& p) {
  return rates.k_fl * p[Level::S1];
}

double lorentzian(double f, double center, double fwhm) {
  const double x = 2.0 * (f - center) / fwhm;
  return 1.0 / (1.0 + x * x);
}

std::vector<double> frequency_grid(double start, double stop, double step) {
  if (!(step > 0.0) || !(stop >= start)) throw InvalidInput("frequency_grid: bad range");
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = start + step * static_cast<double>(i);
  return g;
}

namespace {

void check_grid(std::span<const double> grid, const OdmrOptions& opt) {
  if (grid.empty()) throw InvalidInput("odmr: empty frequency grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i])) throw InvalidInput("odmr: non-finite grid frequency");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw InvalidInput("odmr: grid must be strictly ascending");
  }
  if (!(opt.linewidth_fwhm_mhz > 0.0)) throw InvalidInput("odmr: linewidth must be > 0");
  if (!(opt.mw_strength >= 0.0)) throw InvalidInput("odmr: mw_strength must be >= 0");
}

std::vector<Transition> drive_table(const TripletModel& model, const FieldVector& field,
                                    const OdmrOptions& opt) {
  return opt.drive_axis ? transition_table(model, field, opt.drive_axis->normalized())
                        : transition_table_isotropic(model, field);
}

void add_tone(RateSet& rates, const std::vector<Transition>& table, double f, const OdmrOptions& opt) {
  for (const auto& t : table) {
    const double r = opt.mw_strength * lorentzian(f, t.frequency_mhz, opt.linewidth_fwhm_mhz) * t.amplitude;
    if (r > 0.0) rates.mw.push_back({t.pair, r});
  }
}

OdmrSpectrum sweep(const RateSet& base, const std::vector<Transition>& table,
                   std::span<const double> grid, const OdmrOptions& opt) {
  const double pl_ref = photon_rate(base, steady_state(base));
  if (!(pl_ref > 0.0)) throw InvalidInput("odmr: reference photoluminescence is zero");
  OdmrSpectrum out;
  out.samples.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    RateSet r = base;
    add_tone(r, table, grid[i], opt);
    const double pl = photon_rate(r, steady_state(r));
    out.samples[i] = {grid[i], (pl - pl_ref) / pl_ref};
  });
  return out;
}

}  // namespace

OdmrSpectrum simulate_cw_odmr(const TripletModel& model, const RateSet& rates,
                              const FieldVector& field, std::span<const double> grid_mhz,
                              const OdmrOptions& options) {
  check_grid(grid_mhz, options);
  return sweep(rates, drive_table(model, field, options), grid_mhz, options);
}

OdmrSpectrum simulate_double_resonance(const TripletModel& model, const RateSet& rates,
                                       const FieldVector& field, double hold_mhz,
                                       std::span<const double> sweep_mhz,
                                       const OdmrOptions& options) {
  check_grid(sweep_mhz, options);
  if (!std::isfinite(hold_mhz)) throw InvalidInput("double resonance: non-finite hold frequency");
  const auto table = drive_table(model, field, options);
  RateSet held = rates;
  add_tone(held, table, hold_mhz, options);
  return sweep(held, table, sweep_mhz, options);
}

}  // namespace triplet
