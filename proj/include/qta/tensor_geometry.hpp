#pragma once

// Geometric primitives shared across the toolkit: the 5-component traceless
// symmetric tensor convention, rotations, gyration tensors and the radial /
// angular expansions used by the network filters.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "qta/error.hpp"
#include "qta/rng.hpp"

namespace qta {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Symmetric traceless 3x3 tensor stored as [T_xy, T_xz, T_yz, T_an, T_zz]
/// with T_an = (T_xx - T_yy) / 2.
struct Traceless5 {
  std::array<double, 5> c{};

  double xy() const { return c[0]; }
  double xz() const { return c[1]; }
  double yz() const { return c[2]; }
  double an() const { return c[3]; }
  double zz() const { return c[4]; }

  double &operator[](std::size_t i) { return c[i]; }
  double operator[](std::size_t i) const { return c[i]; }

  friend Traceless5 operator-(const Traceless5 &a, const Traceless5 &b) {
    Traceless5 r;
    for (int i = 0; i < 5; ++i)
      r.c[i] = a.c[i] - b.c[i];
    return r;
  }
  friend Traceless5 operator+(const Traceless5 &a, const Traceless5 &b) {
    Traceless5 r;
    for (int i = 0; i < 5; ++i)
      r.c[i] = a.c[i] + b.c[i];
    return r;
  }
  friend Traceless5 operator*(double s, const Traceless5 &a) {
    Traceless5 r;
    for (int i = 0; i < 5; ++i)
      r.c[i] = s * a.c[i];
    return r;
  }
  friend bool operator==(const Traceless5 &, const Traceless5 &) = default;
};

/// Weights of the 5-vector inner product that reproduce the Frobenius inner
/// product of the full 3x3 tensors.
inline constexpr std::array<double, 5> kFrobeniusWeights{2.0, 2.0, 2.0, 2.0, 1.5};

inline Traceless5 to_traceless5(const Mat3 &full, double sym_tol = 1e-9) {
  const double scale = std::max(1.0, full.cwiseAbs().maxCoeff());
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      if (std::abs(full(a, b) - full(b, a)) > sym_tol * scale)
        throw ValidationError("to_traceless5: input tensor is not symmetric");
  const double third = full.trace() / 3.0;
  const double xx = full(0, 0) - third;
  const double yy = full(1, 1) - third;
  const double zz = full(2, 2) - third;
  Traceless5 t;
  t.c = {0.5 * (full(0, 1) + full(1, 0)), 0.5 * (full(0, 2) + full(2, 0)),
         0.5 * (full(1, 2) + full(2, 1)), 0.5 * (xx - yy), zz};
  return t;
}

/// Cartesian 6-component layout [T_xx, T_xy, T_xz, T_yy, T_yz, T_zz].
inline Traceless5 to_traceless5(const std::array<double, 6> &cart) {
  Mat3 m;
  m << cart[0], cart[1], cart[2], cart[1], cart[3], cart[4], cart[2], cart[4], cart[5];
  return to_traceless5(m);
}

inline Mat3 to_full(const Traceless5 &t) {
  Mat3 m;
  const double xx = t.an() - 0.5 * t.zz();
  const double yy = -t.an() - 0.5 * t.zz();
  m << xx, t.xy(), t.xz(), t.xy(), yy, t.yz(), t.xz(), t.yz(), t.zz();
  return m;
}

inline double dot5(const Traceless5 &a, const Traceless5 &b) {
  double s = 0.0;
  for (int i = 0; i < 5; ++i)
    s += kFrobeniusWeights[i] * a.c[i] * b.c[i];
  return s;
}

inline double frob_norm5(const Traceless5 &t) { return std::sqrt(dot5(t, t)); }

/// Unit-norm gyration tensor of a unit vector.
inline Traceless5 gyration_tensor(const Vec3 &r, double unit_tol = 1e-9) {
  if (std::abs(r.norm() - 1.0) > unit_tol)
    throw ValidationError("gyration_tensor: input is not a unit vector");
  const double s = std::sqrt(1.5);
  Traceless5 g;
  g.c = {s * r.x() * r.y(), s * r.x() * r.z(), s * r.y() * r.z(),
         s * 0.5 * (r.x() * r.x() - r.y() * r.y()), s * (r.z() * r.z() - 1.0 / 3.0)};
  return g;
}

/// Proper rotation matrix; construction validates orthogonality and det = +1.
class Rotation {
public:
  Rotation() : m_(Mat3::Identity()) {}
  explicit Rotation(const Mat3 &m, double tol = 1e-12) : m_(m) {
    if ((m * m.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
      throw ValidationError("Rotation: matrix is not orthogonal");
    if (std::abs(m.determinant() - 1.0) > tol)
      throw ValidationError("Rotation: determinant is not +1");
  }

  static Rotation from_quaternion(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    w /= n, x /= n, y /= n, z /= n;
    Mat3 m;
    m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    Rotation r;
    r.m_ = m;
    return r;
  }

  const Mat3 &matrix() const { return m_; }

  friend Rotation operator*(const Rotation &a, const Rotation &b) {
    Rotation r;
    r.m_ = a.m_ * b.m_;
    return r;
  }

private:
  Mat3 m_;
};

inline Vec3 rotate_vec(const Rotation &R, const Vec3 &v) { return R.matrix() * v; }

inline Traceless5 rotate5(const Rotation &R, const Traceless5 &t) {
  const Mat3 &m = R.matrix();
  return to_traceless5(Mat3(m * to_full(t) * m.transpose()), 1e-6);
}

/// Tr(A^T B) in the 5-vector convention. Both inputs must be unit norm.
inline double cos_gyration(const Traceless5 &a, const Traceless5 &b, double tol = 1e-6) {
  if (std::abs(frob_norm5(a) - 1.0) > tol || std::abs(frob_norm5(b) - 1.0) > tol)
    throw ValidationError("cos_gyration: inputs must have unit Frobenius norm");
  return std::clamp(dot5(a, b), -1.0, 1.0);
}

/// DimeNet-style radial basis with cosine envelope, n = 1..n_max.
inline std::vector<double> rbf_basis(double r, double cutoff, int n_max) {
  if (r < 0.0)
    throw ValidationError("rbf_basis: negative distance");
  if (r > cutoff)
    throw ValidationError("rbf_basis: distance beyond cutoff");
  require(n_max >= 1, "rbf_basis: n_max must be >= 1");
  std::vector<double> out(n_max);
  const double pref = std::sqrt(2.0 / cutoff);
  const double env = 0.5 * (1.0 + std::cos(std::numbers::pi * r / cutoff));
  for (int n = 1; n <= n_max; ++n) {
    const double k = n * std::numbers::pi / cutoff;
    // sin(kr)/r has the removable limit k at r = 0
    const double sinc = r > 1e-12 ? std::sin(k * r) / r : k;
    out[n - 1] = pref * sinc * env;
  }
  return out;
}

inline std::vector<double> legendre_basis(double x, int degree) {
  require(degree >= 0, "legendre_basis: negative degree");
  x = std::clamp(x, -1.0, 1.0);
  std::vector<double> p(degree + 1);
  p[0] = 1.0;
  if (degree >= 1)
    p[1] = x;
  for (int n = 1; n < degree; ++n)
    p[n + 1] = ((2 * n + 1) * x * p[n] - n * p[n - 1]) / (n + 1);
  return p;
}

/// Haar-uniform rotation (Shoemake's subgroup algorithm on unit quaternions).
inline Rotation sample_rotation(Rng &rng) {
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  return Rotation::from_quaternion(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2),
                                   b * std::sin(t3));
}

} // namespace qta
