#include "triplet/spin_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace triplet {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_two_pi(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

Eigen::Matrix3d rz(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

Eigen::Matrix3d ry(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

Eigen::Matrix3d drz(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return m;
}

Eigen::Matrix3d dry(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return m;
}

Matrix3c spin_dot(const Eigen::Vector3d& n) {
  const auto ops = spin_operators();
  return n.x() * ops.sx.matrix() + n.y() * ops.sy.matrix() + n.z() * ops.sz.matrix();
}

}  // namespace

// ---------------------------------------------------------------------------
// Orientation

Eigen::Matrix3d euler_zyz(double alpha, double beta, double gamma) {
  return rz(alpha) * ry(beta) * rz(gamma);
}

std::array<Eigen::Matrix3d, 3> euler_zyz_derivatives(double alpha, double beta, double gamma) {
  return {drz(alpha) * ry(beta) * rz(gamma), rz(alpha) * dry(beta) * rz(gamma),
          rz(alpha) * ry(beta) * drz(gamma)};
}

Orientation::Orientation(double alpha, double beta, double gamma) {
  if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(gamma))
    throw InvalidInput("orientation: non-finite Euler angle");
  *this = from_matrix(euler_zyz(alpha, beta, gamma));
}

Orientation Orientation::from_degrees(double alpha_deg, double beta_deg, double gamma_deg) {
  constexpr double k = std::numbers::pi / 180.0;
  return Orientation(alpha_deg * k, beta_deg * k, gamma_deg * k);
}

Orientation Orientation::from_matrix(const Eigen::Matrix3d& r) {
  if (!r.allFinite() || (r.transpose() * r - Eigen::Matrix3d::Identity()).norm() > 1e-9 ||
      r.determinant() < 0.0)
    throw InvalidInput("orientation: matrix is not a proper rotation");
  Orientation o;
  const double cb = std::clamp(r(2, 2), -1.0, 1.0);
  const double sb = std::hypot(r(0, 2), r(1, 2));
  if (sb > 1e-12) {
    o.beta_ = std::atan2(sb, cb);
    o.alpha_ = wrap_two_pi(std::atan2(r(1, 2), r(0, 2)));
    o.gamma_ = wrap_two_pi(std::atan2(r(2, 1), -r(2, 0)));
  } else if (cb > 0.0) {
    // gimbal lock: only alpha + gamma is defined
    o.beta_ = 0.0;
    o.alpha_ = wrap_two_pi(std::atan2(r(1, 0), r(0, 0)));
    o.gamma_ = 0.0;
  } else {
    o.beta_ = std::numbers::pi;
    o.alpha_ = wrap_two_pi(std::atan2(-r(1, 0), -r(0, 0)));
    o.gamma_ = 0.0;
  }
  return o;
}

Eigen::Matrix3d Orientation::matrix() const { return euler_zyz(alpha_, beta_, gamma_); }

// ---------------------------------------------------------------------------
// Field, model

FieldVector::FieldVector(double bx, double by, double bz) : b_(bx, by, bz) {
  if (!b_.allFinite()) throw InvalidInput("field: non-finite component");
  if (b_.norm() >= kMaxMagnitudeMt) throw InvalidInput("field: magnitude exceeds 1e4 mT");
}

void TripletModel::validate() const {
  if (!std::isfinite(zfs.d_mhz) || !std::isfinite(zfs.e_mhz))
    throw InvalidInput("model: non-finite ZFS parameter");
  if (!(g >= 1.5 && g <= 2.5)) throw InvalidInput("model: g-factor outside [1.5, 2.5]");
}

ZfsParams canonicalize(const ZfsParams& zfs) { return canonicalize(TripletModel{zfs, {}, kFreeElectronG}).zfs; }

TripletModel canonicalize(const TripletModel& model) {
  const double d = model.zfs.d_mhz, e = model.zfs.e_mhz;
  // principal values of the traceless ZFS tensor along molecular x, y, z
  const std::array<double, 3> pv{e - d / 3.0, -e - d / 3.0, 2.0 * d / 3.0};
  std::array<int, 3> idx{0, 1, 2};
  // new y = smallest, new x = middle, new z = largest
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return pv[a] < pv[b]; });
  const int new_y = idx[0], new_x = idx[1], new_z = idx[2];
  const double dz = pv[new_z], dx = pv[new_x], dy = pv[new_y];
  if (dz <= 0.0) {
    if (d == 0.0 && e == 0.0) return model;
    throw InvalidInput("canonicalize: vanishing ZFS tensor");
  }
  TripletModel out = model;
  out.zfs.d_mhz = 1.5 * dz;
  out.zfs.e_mhz = 0.5 * (dx - dy);
  if (out.zfs.e_mhz > out.zfs.d_mhz / 3.0 * (1.0 + 1e-12))
    throw InvalidInput("canonicalize: no labelling with D > 0 and E <= D/3");
  out.zfs.e_mhz = std::min(out.zfs.e_mhz, out.zfs.d_mhz / 3.0);

  Eigen::Matrix3d p = Eigen::Matrix3d::Zero();
  p(new_x, 0) = 1.0;
  p(new_y, 1) = 1.0;
  p(new_z, 2) = 1.0;
  if (p.determinant() < 0.0) p.col(1) *= -1.0;  // ZFS is invariant under an axis flip
  out.orientation = Orientation::from_matrix(model.orientation.matrix() * p);
  return out;
}

// ---------------------------------------------------------------------------
// Matrices

bool HermitianMatrix3::is_hermitian(const Matrix3c& m, double rel_tol) {
  if (!m.allFinite()) return false;
  const double scale = std::max(m.norm(), 1.0);
  return (m - m.adjoint()).norm() <= rel_tol * scale;
}

HermitianMatrix3::HermitianMatrix3(const Matrix3c& m) : m_(m) {
  if (!is_hermitian(m)) throw InvalidInput("matrix is not Hermitian within tolerance");
}

SpinOperators spin_operators() {
  const double r = 1.0 / std::sqrt(2.0);
  const Complex i(0.0, 1.0);
  Matrix3c sx, sy, sz;
  sx << 0, r, 0, r, 0, r, 0, r, 0;
  sy << 0, -i * r, 0, i * r, 0, -i * r, 0, i * r, 0;
  sz << 1, 0, 0, 0, 0, 0, 0, 0, -1;
  return {HermitianMatrix3(sx), HermitianMatrix3(sy), HermitianMatrix3(sz)};
}

HermitianMatrix3 build_hamiltonian(const TripletModel& model, const FieldVector& field) {
  model.validate();
  const auto ops = spin_operators();
  const Matrix3c& sx = ops.sx.matrix();
  const Matrix3c& sy = ops.sy.matrix();
  const Matrix3c& sz = ops.sz.matrix();
  const double d = model.zfs.d_mhz, e = model.zfs.e_mhz;

  Matrix3c h = d * (sz * sz - (2.0 / 3.0) * Matrix3c::Identity()) + e * (sx * sx - sy * sy);
  const Eigen::Vector3d b_mol = model.to_molecular(field);
  h += model.gamma_e() * (b_mol.x() * sx + b_mol.y() * sy + b_mol.z() * sz);
  // remove round-off asymmetry before the Hermiticity check
  h = 0.5 * (h + h.adjoint()).eval();
  return HermitianMatrix3(h);
}

EigenSystem eigensystem(const HermitianMatrix3& h) {
  Eigen::SelfAdjointEigenSolver<Matrix3c> solver(h.matrix());
  if (solver.info() != Eigen::Success) throw InvalidInput("eigensystem: solver failed");
  EigenSystem es;
  for (int i = 0; i < 3; ++i) es.energies[i] = solver.eigenvalues()(i);
  es.states = solver.eigenvectors();
  return es;
}

EigenSystem sublevels(const TripletModel& model, const FieldVector& field) {
  return eigensystem(build_hamiltonian(model, field));
}

// ---------------------------------------------------------------------------
// Transitions

char sublevel_name(Sublevel s) {
  switch (s) {
    case Sublevel::Tx: return 'x';
    case Sublevel::Ty: return 'y';
    case Sublevel::Tz: return 'z';
  }
  return '?';
}

std::string pair_name(const SublevelPair& pair) {
  // canonical order x < y < z
  char a = sublevel_name(pair.a), b = sublevel_name(pair.b);
  if (a > b) std::swap(a, b);
  return {a, b};
}

SublevelPair parse_pair(std::string_view text) {
  std::string letters;
  for (char c : text) {
    const char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (l == 'x' || l == 'y' || l == 'z') letters.push_back(l);
    else if (l != 't' && l != '-' && l != '_' && l != ' ')
      throw InvalidInput("unknown sublevel pair '" + std::string(text) + "'");
  }
  if (letters.size() != 2 || letters[0] == letters[1])
    throw InvalidInput("unknown sublevel pair '" + std::string(text) + "'");
  auto to_level = [](char c) {
    return c == 'x' ? Sublevel::Tx : (c == 'y' ? Sublevel::Ty : Sublevel::Tz);
  };
  return {to_level(letters[0]), to_level(letters[1])};
}

namespace {

std::vector<Transition> make_table(const EigenSystem& es,
                                   const std::vector<Matrix3c>& drive_ops, double weight) {
  std::vector<Transition> out;
  constexpr std::array<SublevelPair, 3> pairs{kPairXY, kPairYZ, kPairXZ};
  for (const auto& pair : pairs) {
    const int i = static_cast<int>(pair.a), j = static_cast<int>(pair.b);
    Transition t;
    t.pair = pair;
    t.frequency_mhz = std::abs(es.energies[i] - es.energies[j]);
    for (const auto& op : drive_ops) {
      t.amplitude += weight * std::norm(es.states.col(i).dot(op * es.states.col(j)));
    }
    out.push_back(t);
  }
  std::stable_sort(out.begin(), out.end(), [](const Transition& a, const Transition& b) {
    return a.frequency_mhz < b.frequency_mhz;
  });
  return out;
}

}  // namespace

std::vector<Transition> transition_table(const TripletModel& model, const FieldVector& field,
                                         const Eigen::Vector3d& drive_axis) {
  const double n = drive_axis.norm();
  if (!drive_axis.allFinite() || std::abs(n - 1.0) > 1e-9)
    throw InvalidInput("transition_table: drive axis must be a unit vector");
  const auto es = sublevels(model, field);
  const Eigen::Vector3d axis_mol = model.orientation.matrix().transpose() * drive_axis;
  return make_table(es, {spin_dot(axis_mol)}, 1.0);
}

std::vector<Transition> transition_table_isotropic(const TripletModel& model,
                                                   const FieldVector& field) {
  const auto es = sublevels(model, field);
  const auto ops = spin_operators();
  return make_table(es, {ops.sx.matrix(), ops.sy.matrix(), ops.sz.matrix()}, 1.0 / 3.0);
}

double transition_frequency(const TripletModel& model, const FieldVector& field,
                            const SublevelPair& pair) {
  if (!pair.valid()) throw InvalidInput("transition_frequency: invalid pair");
  const auto es = sublevels(model, field);
  return std::abs(es.energies[static_cast<int>(pair.a)] - es.energies[static_cast<int>(pair.b)]);
}

}  // namespace triplet
