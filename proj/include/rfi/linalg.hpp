#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace rfi {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

struct dimension_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct value_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw dimension_error(what);
}
inline void require_value(bool ok, const std::string& what) {
  if (!ok) throw value_error(what);
}

/// Eigenpairs of a symmetric PSD matrix, eigenvalues descending.
template <typename Scalar>
struct SpectrumT {
  VectorX<Scalar> eigenvalues;   // length m, descending
  MatrixX<Scalar> eigenvectors;  // m x m, column i pairs with eigenvalues[i]

  Eigen::Index size() const { return eigenvalues.size(); }
};

using Spectrum = SpectrumT<double>;

/// Uncentered second moment (1/n) Phi Phi^T of column-stacked features.
template <typename Derived>
MatrixX<typename Derived::Scalar> feature_covariance(
    const Eigen::MatrixBase<Derived>& phi) {
  using S = typename Derived::Scalar;
  require_dims(phi.rows() > 0 && phi.cols() > 0, "feature_covariance: empty matrix");
  require_value(phi.allFinite(), "feature_covariance: non-finite entries");
  MatrixX<S> cov = (phi * phi.transpose()) / S(phi.cols());
  // force exact symmetry
  return ((cov + cov.transpose()) / S(2)).eval();
}

/// Symmetric eigendecomposition, eigenvalues descending. Inputs that are
/// non-symmetric within 1e-10 * ||A||_max are symmetrized by averaging;
/// beyond that tolerance it is an error. Sign convention: each eigenvector's
/// largest-magnitude entry is positive (ties resolved at the lowest index).
template <typename Derived>
SpectrumT<typename Derived::Scalar> sym_eig(const Eigen::MatrixBase<Derived>& a) {
  using S = typename Derived::Scalar;
  require_dims(a.rows() == a.cols(), "sym_eig: matrix must be square");
  require_value(a.allFinite(), "sym_eig: non-finite entries");
  const S scale = a.cwiseAbs().maxCoeff();
  const S asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > S(1e-10) * std::max(scale, S(1)))
    throw value_error("sym_eig: input is not symmetric");

  MatrixX<S> sym = ((a + a.transpose()) / S(2)).eval();
  Eigen::SelfAdjointEigenSolver<MatrixX<S>> solver(sym);
  if (solver.info() != Eigen::Success)
    throw numerical_error("sym_eig: eigendecomposition failed");

  const Eigen::Index m = sym.rows();
  SpectrumT<S> spec;
  spec.eigenvalues.resize(m);
  spec.eigenvectors.resize(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index src = m - 1 - i;  // solver sorts ascending
    spec.eigenvalues[i] = solver.eigenvalues()[src];
    VectorX<S> u = solver.eigenvectors().col(src);
    Eigen::Index pivot = 0;
    u.cwiseAbs().maxCoeff(&pivot);
    if (u[pivot] < S(0)) u = -u;
    spec.eigenvectors.col(i) = u;
  }
  return spec;
}

/// Orthogonal projection of the columns of v onto span(u_sub),
/// i.e. u_sub u_sub^T v for u_sub with orthonormal columns.
template <typename DerivedU, typename DerivedV>
MatrixX<typename DerivedU::Scalar> project_subspace(
    const Eigen::MatrixBase<DerivedU>& u_sub,
    const Eigen::MatrixBase<DerivedV>& v) {
  using S = typename DerivedU::Scalar;
  require_dims(u_sub.rows() == v.rows(), "project_subspace: row mismatch");
  const Eigen::Index k = u_sub.cols();
  const MatrixX<S> gram = u_sub.transpose() * u_sub;
  const S dev = (gram - MatrixX<S>::Identity(k, k)).cwiseAbs().maxCoeff();
  require_value(dev <= S(1e-8), "project_subspace: columns not orthonormal");
  return u_sub * (u_sub.transpose() * v);
}

/// Largest singular value.
inline double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(m).singularValues()[0];
}

}  // namespace rfi
