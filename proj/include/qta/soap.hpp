#pragma once

// Smooth Overlap of Atomic Positions power spectrum.
//
// Density: per species, a sum of Gaussians (width sigma) on every atom within
// the cutoff, weighted by a cosine cutoff function; the centre atom is included.
// Radial basis: Gaussian-type orbitals exp(-a_n r^2) orthonormalised on
// [0, cutoff] with weight r^2 (symmetric Lowdin). Angular integrals are done
// analytically through modified spherical Bessel functions; the remaining
// radial integral is Gauss-Legendre quadrature.

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/spherical_harmonic.hpp>

#include "qta/error.hpp"
#include "qta/molecule.hpp"

namespace qta {

struct SoapParams {
  double cutoff = 8.0; // Bohr
  int n_max = 8;
  int l_max = 6;
  double sigma = 0.7; // Bohr

  void validate() const {
    require(cutoff > 0, "SoapParams: cutoff must be > 0");
    require(n_max >= 1, "SoapParams: n_max must be >= 1");
    require(l_max >= 0, "SoapParams: l_max must be >= 0");
    require(sigma > 0, "SoapParams: sigma must be > 0");
  }
};

/// Number of power-spectrum features for the given parameters.
inline std::size_t soap_dimension(const SoapParams &p, std::size_t n_species) {
  const std::size_t m = n_species * static_cast<std::size_t>(p.n_max);
  return m * (m + 1) / 2 * static_cast<std::size_t>(p.l_max + 1);
}

/// e^{-x} i_l(x) for l = 0..l_max, with i_l the modified spherical Bessel
/// function of the first kind.
inline std::vector<double> scaled_sph_bessel_i(int l_max, double x) {
  require(x >= 0, "scaled_sph_bessel_i: x must be >= 0");
  std::vector<double> out(static_cast<std::size_t>(l_max + 1), 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return out;
  }
  if (x < 30.0) {
    // i_l(x) = x^l / (2l+1)!! * sum_k (x^2/2)^k / (k! (2l+3)(2l+5)...(2l+2k+1))
    const double half_x2 = 0.5 * x * x;
    double lead = std::exp(-x); // e^{-x} x^l / (2l+1)!!
    for (int l = 0; l <= l_max; ++l) {
      if (l > 0)
        lead *= x / (2.0 * l + 1.0);
      double term = 1.0, sum = 1.0;
      for (int k = 1; k < 1000; ++k) {
        term *= half_x2 / (k * (2.0 * l + 2.0 * k + 1.0));
        sum += term;
        if (term < 1e-17 * sum)
          break;
      }
      out[static_cast<std::size_t>(l)] = lead * sum;
    }
    return out;
  }
  const double e2 = std::exp(-2.0 * x);
  const double s = 0.5 * (1.0 - e2); // e^{-x} sinh x
  const double c = 0.5 * (1.0 + e2); // e^{-x} cosh x
  out[0] = s / x;
  if (l_max >= 1)
    out[1] = (x * c - s) / (x * x);
  for (int l = 1; l < l_max; ++l)
    out[static_cast<std::size_t>(l + 1)] =
        out[static_cast<std::size_t>(l - 1)] - (2.0 * l + 1.0) / x * out[static_cast<std::size_t>(l)];
  return out;
}

/// Real spherical harmonics Y_lm for l = 0..l_max, m = -l..l, stored at l*l + l + m.
/// Orthonormal on the unit sphere. `u` must be non-zero.
inline std::vector<double> real_sph_harm(int l_max, const Vec3 &u) {
  const double r = u.norm();
  require(r > 0, "real_sph_harm: zero vector");
  const double theta = std::acos(std::clamp(u.z() / r, -1.0, 1.0));
  const double phi = std::atan2(u.y(), u.x());
  std::vector<double> out(static_cast<std::size_t>((l_max + 1) * (l_max + 1)));
  for (int l = 0; l <= l_max; ++l) {
    const std::size_t base = static_cast<std::size_t>(l * l + l);
    out[base] = boost::math::spherical_harmonic_r(static_cast<unsigned>(l), 0, theta, phi);
    for (int m = 1; m <= l; ++m) {
      const double sign = (m % 2) ? -1.0 : 1.0;
      const auto y = boost::math::spherical_harmonic(static_cast<unsigned>(l), m, theta, phi);
      out[base + static_cast<std::size_t>(m)] = sign * std::sqrt(2.0) * y.real();
      out[base - static_cast<std::size_t>(m)] = sign * std::sqrt(2.0) * y.imag();
    }
  }
  return out;
}

inline double soap_cutoff_weight(double r, double rc) {
  return r >= rc ? 0.0 : 0.5 * (std::cos(M_PI * r / rc) + 1.0);
}

/// Expansion coefficients c[s][n][l*l+l+m] for one centre.
using SoapCoefficients = std::vector<std::vector<std::vector<double>>>;

class SoapCalculator {
public:
  SoapCalculator(SoapParams p, std::vector<Element> species) : p_(p), species_(std::move(species)) {
    p_.validate();
    require(!species_.empty(), "SoapCalculator: empty species list");
    build_quadrature();
    build_basis();
  }

  const SoapParams &params() const { return p_; }
  const std::vector<Element> &species() const { return species_; }
  std::size_t dimension() const { return soap_dimension(p_, species_.size()); }

  /// Orthonormalisation matrix: g_n = sum_k W(n,k) exp(-alpha_k r^2).
  const Eigen::MatrixXd &basis_weights() const { return W_; }
  const std::vector<double> &alphas() const { return alpha_; }

  /// Orthonormal radial basis function g_n evaluated at r.
  double radial(int n, double r) const {
    double v = 0;
    for (int k = 0; k < p_.n_max; ++k)
      v += W_(n, k) * std::exp(-alpha_[static_cast<std::size_t>(k)] * r * r);
    return v;
  }

  SoapCoefficients coefficients(const MoleculeRecord &mol, std::size_t centre) const {
    require(centre < mol.size(), "soap: atom index out of range");
    const int nl = (p_.l_max + 1) * (p_.l_max + 1);
    SoapCoefficients c(species_.size(),
                       std::vector<std::vector<double>>(static_cast<std::size_t>(p_.n_max),
                                                        std::vector<double>(static_cast<std::size_t>(nl), 0.0)));
    const double inv2s2 = 1.0 / (2.0 * p_.sigma * p_.sigma);
    const double inv_s2 = 1.0 / (p_.sigma * p_.sigma);
    const std::size_t nq = nodes_.size();
    std::vector<double> radial_int(static_cast<std::size_t>(p_.n_max));
    std::vector<double> prim(static_cast<std::size_t>(p_.n_max));
    for (std::size_t j = 0; j < mol.size(); ++j) {
      const Vec3 d = mol.positions[j] - mol.positions[centre];
      const double rj = d.norm();
      if (rj >= p_.cutoff)
        continue;
      const auto sit = std::find(species_.begin(), species_.end(), mol.elements[j]);
      if (sit == species_.end())
        continue;
      const std::size_t s = static_cast<std::size_t>(sit - species_.begin());
      const double w = 4.0 * M_PI * soap_cutoff_weight(rj, p_.cutoff);
      const bool at_centre = rj < 1e-12;
      const int l_top = at_centre ? 0 : p_.l_max;
      std::vector<double> ylm;
      if (at_centre)
        ylm.assign(1, 0.5 / std::sqrt(M_PI));
      else
        ylm = real_sph_harm(p_.l_max, d);
      // radial integrals for each l over the primitive Gaussians
      std::vector<std::vector<double>> per_l(static_cast<std::size_t>(l_top + 1),
                                             std::vector<double>(static_cast<std::size_t>(p_.n_max), 0.0));
      for (std::size_t q = 0; q < nq; ++q) {
        const double r = nodes_[q];
        const double gauss = std::exp(-(r - rj) * (r - rj) * inv2s2);
        if (gauss < 1e-300)
          continue;
        const auto bes = scaled_sph_bessel_i(l_top, r * rj * inv_s2);
        const double base = weights_[q] * r * r * gauss;
        for (int l = 0; l <= l_top; ++l) {
          const double f = base * bes[static_cast<std::size_t>(l)];
          auto &acc = per_l[static_cast<std::size_t>(l)];
          for (int k = 0; k < p_.n_max; ++k)
            acc[static_cast<std::size_t>(k)] += f * prim_[q][static_cast<std::size_t>(k)];
        }
      }
      for (int l = 0; l <= l_top; ++l) {
        const auto &acc = per_l[static_cast<std::size_t>(l)];
        for (int n = 0; n < p_.n_max; ++n) {
          double v = 0;
          for (int k = 0; k < p_.n_max; ++k)
            v += W_(n, k) * acc[static_cast<std::size_t>(k)];
          auto &cn = c[s][static_cast<std::size_t>(n)];
          for (int m = -l; m <= l; ++m) {
            const std::size_t idx = static_cast<std::size_t>(l * l + l + m);
            cn[idx] += w * v * ylm[idx];
          }
        }
      }
    }
    return c;
  }

  /// Power spectrum over the combined (species, radial) index I <= J, with
  /// off-diagonal pairs scaled by sqrt(2) so Euclidean distances match the
  /// full symmetric spectrum.
  std::vector<double> descriptor(const MoleculeRecord &mol, std::size_t centre) const {
    const auto c = coefficients(mol, centre);
    const std::size_t nmax = static_cast<std::size_t>(p_.n_max);
    const std::size_t M = species_.size() * nmax;
    std::vector<double> out;
    out.reserve(dimension());
    for (std::size_t I = 0; I < M; ++I) {
      const auto &ci = c[I / nmax][I % nmax];
      for (std::size_t J = I; J < M; ++J) {
        const auto &cj = c[J / nmax][J % nmax];
        const double scale = I == J ? 1.0 : std::sqrt(2.0);
        for (int l = 0; l <= p_.l_max; ++l) {
          double v = 0;
          for (int m = -l; m <= l; ++m) {
            const std::size_t idx = static_cast<std::size_t>(l * l + l + m);
            v += ci[idx] * cj[idx];
          }
          out.push_back(scale * v);
        }
      }
    }
    return out;
  }

private:
  void build_quadrature() {
    using rule = boost::math::quadrature::gauss<double, 20>;
    const auto &xa = rule::abscissa();
    const auto &wa = rule::weights();
    const int panels = std::max(4, static_cast<int>(std::ceil(p_.cutoff / (0.5 * p_.sigma))));
    const double h = p_.cutoff / panels;
    for (int k = 0; k < panels; ++k) {
      const double mid = (k + 0.5) * h;
      for (std::size_t i = 0; i < xa.size(); ++i) {
        const double off = 0.5 * h * xa[i];
        const double wt = 0.5 * h * wa[i];
        nodes_.push_back(mid + off);
        weights_.push_back(wt);
        if (xa[i] != 0.0) {
          nodes_.push_back(mid - off);
          weights_.push_back(wt);
        }
      }
    }
  }

  void build_basis() {
    const int n = p_.n_max;
    alpha_.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      const double rk = p_.cutoff * (k + 1) / n;
      alpha_[static_cast<std::size_t>(k)] = -std::log(1e-3) / (rk * rk);
    }
    prim_.assign(nodes_.size(), std::vector<double>(static_cast<std::size_t>(n)));
    for (std::size_t q = 0; q < nodes_.size(); ++q)
      for (int k = 0; k < n; ++k)
        prim_[q][static_cast<std::size_t>(k)] =
            std::exp(-alpha_[static_cast<std::size_t>(k)] * nodes_[q] * nodes_[q]);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t q = 0; q < nodes_.size(); ++q) {
      const double wr2 = weights_[q] * nodes_[q] * nodes_[q];
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          S(a, b) += wr2 * prim_[q][static_cast<std::size_t>(a)] * prim_[q][static_cast<std::size_t>(b)];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0)
      throw NumericError("soap: radial overlap matrix is not positive definite");
    W_ = es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
  }

  SoapParams p_;
  std::vector<Element> species_;
  std::vector<double> nodes_, weights_, alpha_;
  std::vector<std::vector<double>> prim_;
  Eigen::MatrixXd W_;
};

inline std::vector<double> soap_descriptor(const MoleculeRecord &mol, std::size_t atom_index,
                                           const SoapParams &p,
                                           const std::vector<Element> &species_list) {
  return SoapCalculator(p, species_list).descriptor(mol, atom_index);
}

} // namespace qta
