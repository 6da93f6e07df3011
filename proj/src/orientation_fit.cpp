#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "triplet/inference.hpp"

namespace triplet {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = 180.0 / kPi;

struct OrientationData {
  OrientationDataset points;
  ZfsParams zfs;
  double g;
};

// Sublevel energies (ascending) and, optionally, their derivatives with respect
// to the Euler angles.
void pair_frequency(const OrientationData& d, const Eigen::Vector3d& angles, const OrientationPoint& pt,
                    double* f, double* df) {
  static const SpinOperators ops = spin_operators();
  const Eigen::Matrix3d r = euler_zyz(angles(0), angles(1), angles(2));
  const double ge = d.g * kBohrMhzPerMt;
  const Eigen::Vector3d b = pt.field.vec();
  const Eigen::Vector3d bm = r.transpose() * b;

  const double dd = d.zfs.d_mhz, e = d.zfs.e_mhz;
  const Matrix3c& sx = ops.sx.matrix();
  const Matrix3c& sy = ops.sy.matrix();
  const Matrix3c& sz = ops.sz.matrix();
  Matrix3c h = dd * (sz * sz - (2.0 / 3.0) * Matrix3c::Identity()) + e * (sx * sx - sy * sy) +
               ge * (bm.x() * sx + bm.y() * sy + bm.z() * sz);
  Eigen::SelfAdjointEigenSolver<Matrix3c> es(h);
  const int a = static_cast<int>(pt.pair.a), c = static_cast<int>(pt.pair.b);
  const double diff = es.eigenvalues()(a) - es.eigenvalues()(c);
  *f = std::abs(diff);
  if (!df) return;
  const double sign = diff >= 0.0 ? 1.0 : -1.0;
  const auto dr = euler_zyz_derivatives(angles(0), angles(1), angles(2));
  const Vector3c va = es.eigenvectors().col(a), vc = es.eigenvectors().col(c);
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d dbm = dr[static_cast<std::size_t>(k)].transpose() * b;
    const Matrix3c dh = ge * (dbm.x() * sx + dbm.y() * sy + dbm.z() * sz);
    const double dea = va.dot(dh * va).real();
    const double dec = vc.dot(dh * vc).real();
    df[k] = sign * (dea - dec);
  }
}

void validate_dataset(const OrientationDataset& data, const ZfsParams& zfs, double g) {
  if (data.empty()) throw Underdetermined("fit_orientation: empty dataset");
  if (!(zfs.d_mhz > 0.0) || zfs.e_mhz < 0.0) throw InvalidInput("fit_orientation: ZFS must have D > 0, E >= 0");
  if (!(g >= 1.5 && g <= 2.5)) throw InvalidInput("fit_orientation: g outside [1.5, 2.5]");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = data[i];
    if (!p.pair.valid()) throw InvalidInput("fit_orientation: invalid pair at point " + std::to_string(i));
    if (!std::isfinite(p.freq_mhz)) throw InvalidInput("fit_orientation: non-finite frequency");
    if (!(p.sigma_mhz > 0.0) || !std::isfinite(p.sigma_mhz))
      throw InvalidInput("fit_orientation: sigma must be > 0 at point " + std::to_string(i));
  }
}

Orientation from_vector(const Eigen::Vector3d& v) { return Orientation(v(0), v(1), v(2)); }

}  // namespace

LeastSquaresProblem orientation_problem(const OrientationDataset& data, const ZfsParams& zfs, double g) {
  validate_dataset(data, zfs, g);
  const auto d = std::make_shared<const OrientationData>(OrientationData{data, zfs, g});
  LeastSquaresProblem pr;
  pr.residuals = [d](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(d->points.size()));
    for (std::size_t i = 0; i < d->points.size(); ++i) {
      const auto& pt = d->points[i];
      double f = 0.0;
      pair_frequency(*d, p.head<3>(), pt, &f, nullptr);
      r(static_cast<Eigen::Index>(i)) = (f - pt.freq_mhz) / pt.sigma_mhz;
    }
    return r;
  };
  pr.jacobian = [d](const Eigen::VectorXd& p) {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(d->points.size()), 3);
    for (std::size_t i = 0; i < d->points.size(); ++i) {
      const auto& pt = d->points[i];
      double f = 0.0, df[3];
      pair_frequency(*d, p.head<3>(), pt, &f, df);
      for (int k = 0; k < 3; ++k) j(static_cast<Eigen::Index>(i), k) = df[k] / pt.sigma_mhz;
    }
    return j;
  };
  return pr;
}

std::vector<Orientation> equivalent_orientations(const Orientation& o) {
  const Eigen::Matrix3d r = o.matrix();
  std::vector<Orientation> out{o};
  for (const Eigen::Vector3d& s : {Eigen::Vector3d(1, -1, -1), Eigen::Vector3d(-1, 1, -1), Eigen::Vector3d(-1, -1, 1)})
    out.push_back(Orientation::from_matrix(r * s.asDiagonal()));
  return out;
}

Orientation fold_orientation(const Orientation& o) {
  double a = o.alpha(), b = o.beta(), c = o.gamma();
  if (b > 0.5 * kPi) {
    a += kPi;
    b = kPi - b;
    c = -c;
  }
  a = std::fmod(a, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  c = std::fmod(c, kPi);
  if (c < 0.0) c += kPi;
  if (c >= kPi) c -= kPi;
  // the constructor normalizes into [0, 2 pi), which leaves c untouched
  return Orientation(a, b, c);
}

int field_direction_rank(const OrientationDataset& data) {
  std::vector<Eigen::Matrix<double, 5, 1>> rows;
  for (const auto& pt : data) {
    if (pt.field.magnitude() <= 1e-9) continue;
    const Eigen::Vector3d n = pt.field.vec().normalized();
    Eigen::Matrix<double, 5, 1> v;
    v << n.x() * n.x() - n.z() * n.z(), n.y() * n.y() - n.z() * n.z(), 2.0 * n.x() * n.y(), 2.0 * n.x() * n.z(),
        2.0 * n.y() * n.z();
    rows.push_back(v);
  }
  if (rows.empty()) return 0;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), 5);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  svd.setThreshold(1e-8);
  return static_cast<int>(svd.rank());
}

double orientation_distance_deg(const Orientation& a, const Orientation& b) {
  double best = std::numeric_limits<double>::infinity();
  const Eigen::Matrix3d ra = a.matrix();
  for (const auto& e : equivalent_orientations(b)) {
    const double tr = (ra.transpose() * e.matrix()).trace();
    best = std::min(best, std::acos(std::clamp(0.5 * (tr - 1.0), -1.0, 1.0)) * kDeg);
  }
  return best;
}

OrientationFit fit_orientation(const OrientationDataset& data, const ZfsParams& zfs, double g,
                               const OrientationFitOptions& options) {
  const auto problem = orientation_problem(data, zfs, g);

  // starting grid: icosahedron vertices as molecular z axes, three gamma values
  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  std::vector<Eigen::Vector3d> starts;
  for (double s1 : {-1.0, 1.0})
    for (double s2 : {-1.0, 1.0}) {
      for (const Eigen::Vector3d& v : {Eigen::Vector3d(0, s1, s2 * phi), Eigen::Vector3d(s1, s2 * phi, 0),
                                      Eigen::Vector3d(s2 * phi, 0, s1)}) {
        const Eigen::Vector3d u = v.normalized();
        for (double gam : {0.0, 60.0, 120.0})
          starts.emplace_back(std::atan2(u.y(), u.x()), std::acos(std::clamp(u.z(), -1.0, 1.0)), gam / kDeg);
      }
    }
  if (options.init) starts.emplace_back(options.init->alpha(), options.init->beta(), options.init->gamma());

  LmOptions lm = options.lm;
  if (lm.scale.size() != 3) lm.scale = Eigen::Vector3d::Constant(1.0);
  LmResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (const auto& s : starts) {
    LmResult r = levenberg_marquardt(problem, s, lm);
    if (r.cost < best.cost - 1e-12 * std::abs(best.cost) || !std::isfinite(best.cost)) best = std::move(r);
  }

  const Orientation folded = fold_orientation(from_vector(best.params));
  const Eigen::Vector3d p(folded.alpha(), folded.beta(), folded.gamma());
  const Eigen::MatrixXd j = problem.jacobian(p);
  int deficient = 0;
  const Eigen::MatrixXd cov_rad = covariance_from_jacobian(j, 1.0, &deficient);

  OrientationFit out;
  out.orientation = folded;
  out.names = {"alpha_deg", "beta_deg", "gamma_deg"};
  out.values = p * kDeg;
  out.covariance = cov_rad * kDeg * kDeg;
  out.residuals = problem.residuals(p);
  out.residual_norm = out.residuals.norm();
  out.converged = best.converged;
  out.iterations = best.iterations;
  out.diagnostic = best.diagnostic;
  for (const auto& e : equivalent_orientations(folded))
    out.equivalents_deg.push_back({e.alpha() * kDeg, e.beta() * kDeg, e.gamma() * kDeg});

  // identifiability
  out.tensor_rank = field_direction_rank(data);
  if (out.tensor_rank == 0) {
    out.warnings.push_back("unidentifiable: orientation unobservable, all fields are zero");
  } else if (out.tensor_rank == 1) {
    out.warnings.push_back("underdetermined: single field axis, only the tilt of that axis is fixed");
  } else if (out.tensor_rank < 5) {
    out.warnings.push_back("underdetermined: field directions fix " + std::to_string(out.tensor_rank) +
                           " of 5 lab-frame ZFS tensor components, a family of orientations fits equally");
  }
  if (data.size() < 6) out.warnings.push_back("underdetermined: fewer than 6 points");
  if (deficient > 0 && out.tensor_rank == 5)
    out.warnings.push_back("unidentifiable: singular normal matrix at the solution");
  return out;
}

}  // namespace triplet
