#pragma once

// Voigt convention used everywhere in this project:
//   component order   (11, 22, 33, 12, 13, 23)
//   strain vectors    engineering shear (gamma = 2*eps), i.e. [E11,E22,E33,2E12,2E13,2E23]
//   stress vectors    plain components  [S11,S22,S33,S12,S13,S23]
// 2D meshes are plane strain: the constitutive layer always works in the full
// 6-component space; the in-plane components are (0,1,3).

#include <Eigen/Dense>

#include <array>

namespace poro {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline constexpr std::array<int, 3> kPlaneComps = {0, 1, 3};

// Active Voigt components for a model dimension (3 in 2D, 6 in 3D).
inline int voigt_count(int dim) { return dim == 2 ? 3 : 6; }
inline int voigt_component(int dim, int i) {
  return dim == 2 ? kPlaneComps[static_cast<std::size_t>(i)] : i;
}

inline double trace(const Vec6& t) { return t[0] + t[1] + t[2]; }

inline Vec6 deviator(const Vec6& stress) {
  Vec6 d = stress;
  const double p = trace(stress) / 3.0;
  d[0] -= p;
  d[1] -= p;
  d[2] -= p;
  return d;
}

// Tensor double contraction of two stress-like Voigt vectors.
inline double contract_stress(const Vec6& a, const Vec6& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] +
         2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5]);
}

// Work density S : E with an engineering-shear strain vector.
inline double contract_work(const Vec6& stress, const Vec6& eng_strain) {
  return stress.dot(eng_strain);
}

inline double von_mises(const Vec6& stress) {
  const Vec6 s = deviator(stress);
  return std::sqrt(1.5 * contract_stress(s, s));
}

// Max absolute *tensor* component of an engineering-shear strain vector.
inline double strain_max_abs(const Vec6& eng_strain) {
  double m = 0.0;
  for (int i = 0; i < 3; ++i) m = std::max(m, std::abs(eng_strain[i]));
  for (int i = 3; i < 6; ++i) m = std::max(m, 0.5 * std::abs(eng_strain[i]));
  return m;
}

// Equivalent (von Mises) strain measure sqrt(2/3 e':e') of an
// engineering-shear strain vector.
inline double eq_strain(const Vec6& eng_strain) {
  Vec6 t = eng_strain;
  const double m = trace(t) / 3.0;
  t[0] -= m;
  t[1] -= m;
  t[2] -= m;
  const double dd = t[0] * t[0] + t[1] * t[1] + t[2] * t[2] +
                    0.5 * (t[3] * t[3] + t[4] * t[4] + t[5] * t[5]);
  return std::sqrt(2.0 / 3.0 * dd);
}

// Isotropic elasticity: C = lambda 1x1 + 2 mu I (maps engineering strain to
// stress, so the shear diagonal carries G, not 2G).
inline Mat6 isotropic_elastic(double young, double poisson) {
  const double lam =
      young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
  const double mu = young / (2.0 * (1.0 + poisson));
  Mat6 c = Mat6::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c(i, j) = lam + (i == j ? 2.0 * mu : 0.0);
  for (int i = 3; i < 6; ++i) c(i, i) = mu;
  return c;
}

// Deviatoric projector P such that 2G * P * eng_strain = deviatoric stress.
inline Mat6 deviatoric_projector() {
  Mat6 p = Mat6::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) p(i, j) = (i == j ? 2.0 / 3.0 : -1.0 / 3.0);
  for (int i = 3; i < 6; ++i) p(i, i) = 0.5;
  return p;
}

} // namespace poro
