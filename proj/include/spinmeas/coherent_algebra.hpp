#pragma once

// Closed-form algebra of normalized coherent states |g> = D(g)|0>.
//
//   <g|h>          = exp(-|g|^2/2 - |h|^2/2 + conj(g) h)
//   <g|a|h>        = h <g|h>
//   <g|a^dag|h>    = conj(g) <g|h>
//   <g|a^dag a|h>  = conj(g) h <g|h>
//
// Multimode overlaps are products over modes, evaluated as a single
// exponential of the summed exponents so they never underflow early.

#include <cmath>
#include <complex>

#include <Eigen/Dense>

#include "spinmeas/types.hpp"

namespace spinmeas {

template <typename T>
std::complex<T> overlap(const std::complex<T>& g, const std::complex<T>& h) {
    return std::exp(-T(0.5) * std::norm(g) - T(0.5) * std::norm(h) + std::conj(g) * h);
}

// Exponent of the multimode overlap; exp() of this is <a|b>.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar log_multimode_overlap(const Eigen::MatrixBase<DerivedA>& a,
                                                const Eigen::MatrixBase<DerivedB>& b) {
    if (a.size() != b.size()) {
        throw DimensionError("multimode_overlap: configurations differ in mode count");
    }
    using Scalar = typename DerivedA::Scalar;
    using Real = typename Eigen::NumTraits<Scalar>::Real;
    return -Real(0.5) * a.squaredNorm() - Real(0.5) * b.squaredNorm() + a.dot(b);
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar multimode_overlap(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
    return std::exp(log_multimode_overlap(a, b));
}

// Bath-operator matrix elements between two multimode coherent states.
// All three are absolute (they already carry the overlap factor).
template <typename Scalar>
struct HElementSet {
    Scalar overlap;      // <a|b>
    Scalar bath_energy;  // <a| sum_n w_n a_n^dag a_n |b>
    Scalar coupling;     // <a| sum_n g_n (a_n^dag + a_n) |b>
};

template <typename DerivedA, typename DerivedB, typename DerivedW, typename DerivedG>
HElementSet<typename DerivedA::Scalar> matrix_elements(const Eigen::MatrixBase<DerivedA>& a,
                                                       const Eigen::MatrixBase<DerivedB>& b,
                                                       const Eigen::MatrixBase<DerivedW>& omegas,
                                                       const Eigen::MatrixBase<DerivedG>& gs) {
    if (a.size() != b.size() || a.size() != omegas.size() || a.size() != gs.size()) {
        throw DimensionError("matrix_elements: mode count mismatch");
    }
    using Scalar = typename DerivedA::Scalar;
    const Scalar s = multimode_overlap(a, b);
    const auto ac = a.conjugate();
    const Scalar energy = (ac.array() * b.array() * omegas.array().template cast<Scalar>()).sum();
    const Scalar force = ((ac + b).array() * gs.array().template cast<Scalar>()).sum();
    return {s, s * energy, s * force};
}

// Gram matrix of M configurations stored row-wise (M x N).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> gram_matrix(
    const Eigen::MatrixBase<Derived>& configs) {
    using Scalar = typename Derived::Scalar;
    using Real = typename Eigen::NumTraits<Scalar>::Real;
    const Eigen::Index m = configs.rows();
    const Eigen::Matrix<Real, Eigen::Dynamic, 1> half = Real(0.5) * configs.rowwise().squaredNorm();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> z = configs.conjugate() * configs.transpose();
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) {
            z(i, j) = std::exp(z(i, j) - half(i) - half(j));
        }
        z(j, j) = Scalar(1);
    }
    return z;
}

}  // namespace spinmeas
