#pragma once

// S = 1 triplet Hamiltonian: zero-field splitting plus electron Zeeman term.
//
// Conventions used throughout the library:
//  * energies and frequencies in MHz, fields in mT, times in us;
//  * spin matrices are written in the |+1>, |0>, |-1> basis of the molecular z axis;
//  * an Orientation holds Z-Y-Z Euler angles of R = Rz(alpha) Ry(beta) Rz(gamma).
//    The columns of R are the molecular axes expressed in the lab frame, so a lab
//    field maps into the molecular frame as B_mol = R^T B_lab;
//  * sublevels are labelled by energy order, Tz < Ty < Tx. At zero field this is
//    E_z = -2D/3, E_y = D/3 - E, E_x = D/3 + E, giving Tx<->Ty = 2E, Ty<->Tz = D - E
//    and Tx<->Tz = D + E. Away from zero field the label follows the same ordering,
//    which coincides with adiabatic continuation whenever levels do not cross.

#include <array>
#include <complex>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "triplet/error.hpp"

namespace triplet {

using Complex = std::complex<double>;
using Matrix3c = Eigen::Matrix3cd;
using Vector3c = Eigen::Vector3cd;

// mu_B / h in MHz per mT.
inline constexpr double kBohrMhzPerMt = 13.996245;
inline constexpr double kFreeElectronG = 2.0023;

struct ZfsParams {
  double d_mhz = 0.0;
  double e_mhz = 0.0;
};

class Orientation {
 public:
  Orientation() = default;
  // Angles in radians; normalized to alpha, gamma in [0, 2pi), beta in [0, pi].
  Orientation(double alpha, double beta, double gamma);

  static Orientation from_degrees(double alpha_deg, double beta_deg, double gamma_deg);
  // R must be a proper rotation (to ~1e-9).
  static Orientation from_matrix(const Eigen::Matrix3d& r);

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double gamma() const { return gamma_; }

  Eigen::Matrix3d matrix() const;
  // Molecular z axis in the lab frame.
  Eigen::Vector3d molecular_axis(int axis) const { return matrix().col(axis); }

 private:
  double alpha_ = 0.0;
  double beta_ = 0.0;
  double gamma_ = 0.0;
};

// Rz(a) Ry(b) Rz(c) without normalization, plus partial derivatives.
Eigen::Matrix3d euler_zyz(double alpha, double beta, double gamma);
std::array<Eigen::Matrix3d, 3> euler_zyz_derivatives(double alpha, double beta, double gamma);

class FieldVector {
 public:
  FieldVector() = default;
  FieldVector(double bx, double by, double bz);
  explicit FieldVector(const Eigen::Vector3d& b) : FieldVector(b.x(), b.y(), b.z()) {}

  double bx() const { return b_.x(); }
  double by() const { return b_.y(); }
  double bz() const { return b_.z(); }
  const Eigen::Vector3d& vec() const { return b_; }
  double magnitude() const { return b_.norm(); }

  static constexpr double kMaxMagnitudeMt = 1e4;

 private:
  Eigen::Vector3d b_ = Eigen::Vector3d::Zero();
};

struct TripletModel {
  ZfsParams zfs;
  Orientation orientation;
  double g = kFreeElectronG;

  // Electron gyromagnetic factor g * mu_B / h, MHz/mT.
  double gamma_e() const { return g * kBohrMhzPerMt; }
  Eigen::Vector3d to_molecular(const FieldVector& field) const {
    return orientation.matrix().transpose() * field.vec();
  }
  void validate() const;
};

// Relabels molecular axes so that D > 0 and 0 <= E <= D/3, rotating the
// orientation alongside. Throws InvalidInput when the principal values admit
// no such labelling (middle principal value > 0) or the tensor vanishes.
TripletModel canonicalize(const TripletModel& model);
ZfsParams canonicalize(const ZfsParams& zfs);

class HermitianMatrix3 {
 public:
  HermitianMatrix3() : m_(Matrix3c::Zero()) {}
  // Throws InvalidInput if m deviates from m^H by more than 1e-12 relative.
  explicit HermitianMatrix3(const Matrix3c& m);

  const Matrix3c& matrix() const { return m_; }
  Complex operator()(int i, int j) const { return m_(i, j); }
  double trace() const { return m_.trace().real(); }

  static constexpr double kTolerance = 1e-12;
  static bool is_hermitian(const Matrix3c& m, double rel_tol = kTolerance);

 private:
  Matrix3c m_;
};

struct EigenSystem {
  std::array<double, 3> energies{};
  Matrix3c states = Matrix3c::Identity();  // columns are eigenvectors
};

struct SpinOperators {
  HermitianMatrix3 sx, sy, sz;
};

enum class Sublevel { Tz = 0, Ty = 1, Tx = 2 };

struct SublevelPair {
  Sublevel a = Sublevel::Ty;
  Sublevel b = Sublevel::Tz;

  bool operator==(const SublevelPair& o) const {
    return (a == o.a && b == o.b) || (a == o.b && b == o.a);
  }
  bool valid() const { return a != b; }
};

inline constexpr SublevelPair kPairXY{Sublevel::Tx, Sublevel::Ty};
inline constexpr SublevelPair kPairYZ{Sublevel::Ty, Sublevel::Tz};
inline constexpr SublevelPair kPairXZ{Sublevel::Tx, Sublevel::Tz};

// "xy", "yz", "xz" (order-insensitive, also accepts "TxTy" style).
SublevelPair parse_pair(std::string_view text);
std::string pair_name(const SublevelPair& pair);
char sublevel_name(Sublevel s);

struct Transition {
  SublevelPair pair;
  double frequency_mhz = 0.0;
  double amplitude = 0.0;
};

SpinOperators spin_operators();

HermitianMatrix3 build_hamiltonian(const TripletModel& model, const FieldVector& field);

EigenSystem eigensystem(const HermitianMatrix3& h);

// Eigensystem with energies ascending, i.e. indexed by Sublevel.
EigenSystem sublevels(const TripletModel& model, const FieldVector& field);

// All three transitions sorted by frequency. Amplitude is |<i|S.n|j>|^2 with
// n the lab-frame drive axis rotated into the molecular frame.
std::vector<Transition> transition_table(const TripletModel& model, const FieldVector& field,
                                         const Eigen::Vector3d& drive_axis);

// Orientation-averaged amplitude (1/3) sum_k |<i|S_k|j>|^2, for unpolarized drive.
std::vector<Transition> transition_table_isotropic(const TripletModel& model,
                                                   const FieldVector& field);

double transition_frequency(const TripletModel& model, const FieldVector& field,
                            const SublevelPair& pair);

}  // namespace triplet
