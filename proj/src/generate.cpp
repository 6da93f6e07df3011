#include <cmath>
#include <numbers>
#include <random>

#include "triplet/workbench.hpp"

namespace triplet::wb {

namespace {

std::vector<Eigen::Vector3d> default_directions() {
  return {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, Eigen::Vector3d(1, 1, 0).normalized(),
          Eigen::Vector3d(0, 1, 1).normalized(), Eigen::Vector3d(1, 0, 1).normalized()};
}

class NoiseSource {
 public:
  explicit NoiseSource(const RunConfig& cfg)
      : sigma_(cfg.sigma), counts_scale_(cfg.counts_scale), rng_(cfg.seed.value_or(0)) {}

  bool active() const { return sigma_ > 0.0 || counts_scale_.has_value(); }

  double operator()(double y) {
    if (!active()) return y;
    const double s = counts_scale_ ? std::sqrt(std::abs(y) / *counts_scale_) : sigma_;
    return y + s * gauss_(rng_);
  }

 private:
  double sigma_;
  std::optional<double> counts_scale_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

bool has_dephasing(const RunConfig& cfg) { return cfg.noise_preset || !cfg.noise.dephasing.empty(); }

}  // namespace

NoiseModel resolved_noise(const RunConfig& cfg) {
  if (cfg.noise_preset) return coherence_preset(*cfg.noise_preset).noise;
  return cfg.noise;
}

Dataset generate(DatasetKind kind, const RunConfig& cfg) {
  cfg.validate();
  NoiseSource noise(cfg);
  Dataset d;
  switch (kind) {
    case DatasetKind::Spectrum: {
      const auto grid = frequency_grid(cfg.spectrum.start, cfg.spectrum.stop, cfg.spectrum.step);
      const OdmrSpectrum s = cfg.hold_mhz
                                 ? simulate_double_resonance(cfg.model, cfg.rates, cfg.field, *cfg.hold_mhz, grid, cfg.odmr)
                                 : simulate_cw_odmr(cfg.model, cfg.rates, cfg.field, grid, cfg.odmr);
      d = make_dataset(s);
      break;
    }
    case DatasetKind::Trace: {
      const auto grid = time_grid(cfg.trace.start_us, cfg.trace.stop_us, cfg.trace.count);
      CoherenceTrace t;
      if (cfg.trace.sequence == "eseem") {
        std::optional<NoiseModel> env;
        if (has_dephasing(cfg)) env = resolved_noise(cfg);
        t = hahn_echo_eseem(cfg.model, cfg.field, cfg.nuclei, cfg.trace.pair, grid, env);
      } else if (cfg.trace.sequence == "rabi") {
        RabiOptions opt;
        if (has_dephasing(cfg)) opt.noise = resolved_noise(cfg);
        t = rabi_trace(cfg.model, cfg.trace.pair, cfg.trace.rabi_mhz, grid, opt);
      } else {
        t = coherence_function(resolved_noise(cfg), cfg.trace.pair, cfg.trace.n_pulses, grid);
      }
      d = make_dataset(t);
      break;
    }
    case DatasetKind::Polarization: {
      PolarizationScan p;
      const auto& ps = cfg.polarization;
      for (int i = 0; i < ps.n_angles; ++i) {
        const double th = 360.0 * i / ps.n_angles;
        const double c = std::cos((th - ps.theta0_deg) * std::numbers::pi / 180.0);
        p.push_back({th, ps.amplitude * c * c + ps.offset});
      }
      d = make_dataset(p);
      break;
    }
    case DatasetKind::CpmgPoints: {
      const NoiseModel nm = resolved_noise(cfg);
      std::vector<CpmgPoint> pts;
      for (int n : cfg.cpmg.n_pulses) pts.push_back({double(n), t2_effective(cfg.cpmg.pair, n, nm)});
      d = make_dataset(pts);
      break;
    }
    case DatasetKind::OrientationPoints: {
      const auto dirs = cfg.orientation.directions.empty() ? default_directions() : cfg.orientation.directions;
      OrientationDataset o;
      for (const auto& dir : dirs)
        for (double b : cfg.orientation.fields_mt) {
          const FieldVector f(dir * b);
          for (const auto& pair : {kPairXY, kPairYZ, kPairXZ})
            o.push_back({f, pair, transition_frequency(cfg.model, f, pair), cfg.orientation.sigma_mhz});
        }
      d = make_dataset(o);
      break;
    }
  }

  // noise on the measured column, drawn row by row
  if (noise.active()) {
    const std::size_t col = kind == DatasetKind::OrientationPoints ? 4 : 1;
    for (double& v : d.columns[col]) v = noise(v);
    if (kind == DatasetKind::Polarization)
      for (double& v : d.columns[col]) v = std::max(0.0, v);
  }

  d.provenance = {{"source", "generate"},
                  {"generator", "triplet-sense"},
                  {"kind", kind_name(kind)},
                  {"seed", cfg.seed ? Json(*cfg.seed) : Json(nullptr)},
                  {"sigma", cfg.sigma},
                  {"config", config_to_json(cfg)}};
  if (kind == DatasetKind::Trace) d.provenance["field_mt"] = cfg.field.magnitude();
  return d;
}

}  // namespace triplet::wb
