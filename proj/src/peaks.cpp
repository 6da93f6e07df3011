#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "triplet/inference.hpp"

namespace triplet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

double peaks_model(const Eigen::VectorXd& p, double f) {
  const Eigen::Index n = (p.size() - 1) / 3;
  double y = p(3 * n);
  for (Eigen::Index k = 0; k < n; ++k) y += p(3 * k + 2) * lorentzian(f, p(3 * k), p(3 * k + 1));
  return y;
}

LeastSquaresProblem peaks_problem(const OdmrSpectrum& spectrum, int n_peaks) {
  if (n_peaks < 1) throw InvalidInput("fit_peaks: n_peaks must be >= 1");
  const auto data = std::make_shared<const std::vector<OdmrSample>>(spectrum.samples);
  LeastSquaresProblem pr;
  pr.residuals = [data](const Eigen::VectorXd& p) {
    const auto& s = *data;
    Eigen::VectorXd r(static_cast<Eigen::Index>(s.size()));
    const Eigen::Index n = (p.size() - 1) / 3;
    for (Eigen::Index k = 0; k < n; ++k)
      if (!(p(3 * k + 1) > 0.0)) return Eigen::VectorXd::Constant(r.size(), kInf).eval();
    for (std::size_t i = 0; i < s.size(); ++i)
      r(static_cast<Eigen::Index>(i)) = peaks_model(p, s[i].freq_mhz) - s[i].contrast;
    return r;
  };
  pr.jacobian = [data](const Eigen::VectorXd& p) {
    const auto& s = *data;
    const Eigen::Index n = (p.size() - 1) / 3;
    Eigen::MatrixXd j(static_cast<Eigen::Index>(s.size()), p.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double c = p(3 * k), w = p(3 * k + 1), a = p(3 * k + 2);
        const double x = 2.0 * (s[i].freq_mhz - c) / w;
        const double l = 1.0 / (1.0 + x * x);
        const double dl_dx = -2.0 * x * l * l;
        j(row, 3 * k) = a * dl_dx * (-2.0 / w);
        j(row, 3 * k + 1) = a * dl_dx * (-x / w);
        j(row, 3 * k + 2) = l;
      }
      j(row, 3 * n) = 1.0;
    }
    return j;
  };
  return pr;
}

std::vector<PeakGuess> guess_peaks(const OdmrSpectrum& spectrum, int n_peaks) {
  const auto& s = spectrum.samples;
  std::vector<double> y(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) y[i] = s[i].contrast;
  const double base = median(y);
  const double step = (s.back().freq_mhz - s.front().freq_mhz) / static_cast<double>(s.size() - 1);
  std::vector<bool> used(s.size(), false);
  std::vector<PeakGuess> out;
  for (int k = 0; k < n_peaks; ++k) {
    std::size_t best = s.size();
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!used[i] && (best == s.size() || std::abs(y[i] - base) > std::abs(y[best] - base))) best = i;
    if (best == s.size()) break;
    const double amp = y[best] - base;
    // walk out to half maximum on both sides
    std::size_t lo = best, hi = best;
    while (lo > 0 && std::abs(y[lo] - base) > 0.5 * std::abs(amp)) --lo;
    while (hi + 1 < s.size() && std::abs(y[hi] - base) > 0.5 * std::abs(amp)) ++hi;
    const double fwhm = std::max(s[hi].freq_mhz - s[lo].freq_mhz, 2.0 * step);
    out.push_back({s[best].freq_mhz, fwhm, amp});
    const double exclude = 3.0 * fwhm;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (std::abs(s[i].freq_mhz - s[best].freq_mhz) <= exclude) used[i] = true;
  }
  return out;
}

FitResult fit_peaks(const OdmrSpectrum& spectrum, int n_peaks, const PeakFitOptions& options) {
  if (n_peaks < 1) throw InvalidInput("fit_peaks: n_peaks must be >= 1");
  const auto& s = spectrum.samples;
  if (s.size() < static_cast<std::size_t>(3 * n_peaks + 2))
    throw Underdetermined("fit_peaks: too few samples for " + std::to_string(n_peaks) + " peaks");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s[i].freq_mhz) || !std::isfinite(s[i].contrast))
      throw InvalidInput("fit_peaks: non-finite sample " + std::to_string(i));
    if (i > 0 && !(s[i].freq_mhz > s[i - 1].freq_mhz))
      throw InvalidInput("fit_peaks: frequencies must be strictly ascending");
  }

  std::vector<PeakGuess> guess = options.init ? *options.init : guess_peaks(spectrum, n_peaks);
  if (static_cast<int>(guess.size()) != n_peaks)
    throw InvalidInput("fit_peaks: need exactly " + std::to_string(n_peaks) + " initial guesses");
  std::vector<double> y(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) y[i] = s[i].contrast;
  const double base = options.baseline.value_or(median(y));

  const Eigen::Index np = 3 * n_peaks + 1;
  Eigen::VectorXd p0(np);
  double amp_scale = 0.0;
  for (int k = 0; k < n_peaks; ++k) {
    p0(3 * k) = guess[k].center_mhz;
    p0(3 * k + 1) = guess[k].fwhm_mhz;
    p0(3 * k + 2) = guess[k].amplitude;
    amp_scale = std::max(amp_scale, std::abs(guess[k].amplitude));
  }
  p0(3 * n_peaks) = base;
  if (amp_scale == 0.0) amp_scale = 1e-6;

  LmOptions lm = options.lm;
  if (lm.scale.size() != np) {
    lm.scale.resize(np);
    for (int k = 0; k < n_peaks; ++k) {
      lm.scale(3 * k) = std::max(p0(3 * k + 1), 1e-6);  // centers move on the scale of a linewidth
      lm.scale(3 * k + 1) = std::max(p0(3 * k + 1), 1e-6);
      lm.scale(3 * k + 2) = amp_scale;
    }
    lm.scale(3 * n_peaks) = amp_scale;
  }

  const auto problem = peaks_problem(spectrum, n_peaks);
  const LmResult lmr = levenberg_marquardt(problem, p0, lm);

  const auto m = static_cast<double>(s.size());
  const double dof = m - static_cast<double>(np);
  const double s2 = dof > 0.0 ? 2.0 * lmr.cost / dof : 0.0;
  int deficient = 0;
  const Eigen::MatrixXd cov = covariance_from_jacobian(lmr.jacobian, s2, &deficient);

  // order peaks by center
  std::vector<int> order(static_cast<std::size_t>(n_peaks));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return lmr.params(3 * a) < lmr.params(3 * b); });
  std::vector<Eigen::Index> perm;
  for (int k : order)
    for (int q = 0; q < 3; ++q) perm.push_back(3 * k + q);
  perm.push_back(3 * n_peaks);

  FitResult out;
  out.values.resize(np);
  out.covariance.resize(np, np);
  for (Eigen::Index i = 0; i < np; ++i) {
    out.values(i) = lmr.params(perm[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < np; ++j)
      out.covariance(i, j) = cov(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  for (int k = 1; k <= n_peaks; ++k) {
    out.names.push_back("center_" + std::to_string(k));
    out.names.push_back("fwhm_" + std::to_string(k));
    out.names.push_back("amplitude_" + std::to_string(k));
  }
  out.names.push_back("baseline");
  out.residuals = lmr.residuals;
  out.residual_norm = lmr.residuals.norm();
  out.converged = lmr.converged;
  out.iterations = lmr.iterations;
  out.diagnostic = lmr.diagnostic;
  if (deficient > 0) out.warnings.push_back("singular normal matrix: some parameters unidentifiable");
  const double f_lo = s.front().freq_mhz, f_hi = s.back().freq_mhz;
  for (int k = 0; k < n_peaks; ++k) {
    const double c = out.values(3 * k);
    if (c < f_lo || c > f_hi)
      out.warnings.push_back("peak " + std::to_string(k + 1) + " center outside the spectrum");
  }
  return out;
}

// ---------------------------------------------------------------------------

ZfsEstimate zfs_from_peaks(std::span<const double> centers, std::optional<std::vector<LineRole>> roles) {
  if (centers.size() < 2) throw Underdetermined("zfs_from_peaks: need at least two lines");
  if (centers.size() > 3) throw InvalidInput("zfs_from_peaks: at most three lines");
  for (double c : centers)
    if (!std::isfinite(c) || c <= 0.0) throw InvalidInput("zfs_from_peaks: line positions must be > 0");

  std::vector<LineRole> r;
  if (roles) {
    if (roles->size() != centers.size()) throw InvalidInput("zfs_from_peaks: one role per line required");
    r = *roles;
    for (std::size_t i = 0; i < r.size(); ++i)
      for (std::size_t j = i + 1; j < r.size(); ++j)
        if (r[i] == r[j]) throw InvalidInput("zfs_from_peaks: duplicate line role");
  } else {
    std::vector<std::size_t> idx(centers.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return centers[a] < centers[b]; });
    const LineRole by_rank[] = {LineRole::TwoE, LineRole::DMinusE, LineRole::DPlusE};
    r.resize(centers.size());
    for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = by_rank[k];
  }

  // rows of A x = b with x = (D, E)
  Eigen::MatrixXd a(static_cast<Eigen::Index>(centers.size()), 2);
  Eigen::VectorXd b(static_cast<Eigen::Index>(centers.size()));
  double signed_sum = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    switch (r[i]) {
      case LineRole::TwoE: a.row(row) << 0.0, 2.0; signed_sum += centers[i]; break;
      case LineRole::DMinusE: a.row(row) << 1.0, -1.0; signed_sum += centers[i]; break;
      case LineRole::DPlusE: a.row(row) << 1.0, 1.0; signed_sum -= centers[i]; break;
    }
    b(row) = centers[i];
  }
  const Eigen::Vector2d x = a.colPivHouseholderQr().solve(b);

  ZfsEstimate out;
  out.zfs = {x(0), x(1)};
  out.roles = r;
  if (centers.size() == 3) {
    out.has_residual = true;
    out.residual_mhz = std::abs(signed_sum);
  }
  return out;
}

}  // namespace triplet
