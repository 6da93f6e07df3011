#include <cmath>
#include <map>
#include <mutex>

#include <boost/math/tools/roots.hpp>

#include "triplet/coherent.hpp"

namespace triplet {

namespace {

// Bath correlation time shared by all presets; long compared with every
// single-interval free evolution so CPMG sits in the N^(2/3) regime.
constexpr double kBathTauCUs = 1000.0;

struct PresetSpec {
  const char* name;
  std::array<double, 3> t1_us;  // Tx, Ty, Tz
  double hahn_t2_us;
};

// Ty is the short-lived readout level; Tx and Tz form the protected pair.
constexpr std::array<PresetSpec, 3> kSpecs{{
    {"Pc-H14-RT", {150.0, 30.0, 120.0}, 2.4},
    {"Pc-H14-4K", {150.0, 30.0, 120.0}, 3.4},
    {"Pc-D14-4K", {450.0, 100.0, 280.0}, 39.8},
}};

}  // namespace

double calibrate_lorentzian_amplitude(NoiseModel noise, std::size_t component, const SublevelPair& pair,
                                      double target_t2_us) {
  if (component >= noise.dephasing.size() || !std::holds_alternative<LorentzianNoise>(noise.dephasing[component]))
    throw InvalidInput("calibrate: component is not Lorentzian");
  if (!(target_t2_us > 0.0) || target_t2_us >= noise.t1_limit(pair))
    throw InvalidInput("calibrate: target T2 must lie below the lifetime limit");
  auto t2_at = [&](double log_b) {
    std::get<LorentzianNoise>(noise.dephasing[component]).b_mhz = std::exp(log_b);
    return t2_effective(pair, 1, noise) - target_t2_us;
  };
  double lo = std::log(1e-6), hi = std::log(1e3);
  if (t2_at(lo) < 0.0 || t2_at(hi) > 0.0) throw InvalidInput("calibrate: target outside bracket");
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(t2_at, lo, hi, boost::math::tools::eps_tolerance<double>(44), iters);
  return std::exp(0.5 * (r.first + r.second));
}

std::vector<std::string> coherence_preset_names() {
  std::vector<std::string> names;
  for (const auto& s : kSpecs) names.emplace_back(s.name);
  return names;
}

const CoherencePreset& coherence_preset(const std::string& name) {
  static std::mutex mutex;
  static std::map<std::string, CoherencePreset> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find(name); it != cache.end()) return it->second;
  for (const auto& spec : kSpecs) {
    if (name != spec.name) continue;
    CoherencePreset p;
    p.name = spec.name;
    p.target_hahn_t2_us = spec.hahn_t2_us;
    p.noise.t1_us = spec.t1_us;
    p.noise.dephasing = {LorentzianNoise{1.0, kBathTauCUs}};
    std::get<LorentzianNoise>(p.noise.dephasing[0]).b_mhz =
        calibrate_lorentzian_amplitude(p.noise, 0, p.hahn_pair, spec.hahn_t2_us);
    return cache.emplace(name, std::move(p)).first->second;
  }
  std::string valid;
  for (const auto& s : kSpecs) valid += std::string(valid.empty() ? "" : ", ") + s.name;
  throw InvalidInput("unknown coherence preset '" + name + "' (valid: " + valid + ")");
}

}  // namespace triplet
