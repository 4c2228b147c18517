// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "qadapt/error.hpp"

namespace qadapt {

namespace {

Matrix orthonormal_basis(const Matrix& y) {
    Eigen::HouseholderQR<Matrix> qr(y);
    return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

// Leading singular values of q^T m from the small Gram matrix; only used to
// watch convergence.
Vector ritz_values(const Matrix& q, const Matrix& m, int r) {
    const Matrix b = q.transpose() * m;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(b * b.transpose(), Eigen::EigenvaluesOnly);
    const Vector ev = eig.eigenvalues().reverse();
    Vector s(r);
    for (int i = 0; i < r; ++i) s(i) = std::sqrt(std::max(0.0, ev(i)));
    return s;
}

} // namespace

TruncatedSvd truncated_svd(const Matrix& m, int r, const SvdOptions& opts) {
    const auto min_dim = static_cast<int>(std::min(m.rows(), m.cols()));
    if (r < 0 || r > min_dim)
        throw InvalidArgument(fmt::format("truncated_svd: rank {} outside [0, {}]", r, min_dim));
    if (!m.allFinite()) throw InvalidArgument("truncated_svd: matrix contains non-finite values");

    TruncatedSvd out;
    if (r == 0) {
        out.u = Matrix::Zero(m.rows(), 0);
        out.s = Vector::Zero(0);
        out.v = Matrix::Zero(m.cols(), 0);
        return out;
    }

    const int k = std::min(min_dim, r + opts.oversample);
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> gauss;
    Matrix omega(m.cols(), k);
    for (Eigen::Index j = 0; j < omega.cols(); ++j)
        for (Eigen::Index i = 0; i < omega.rows(); ++i) omega(i, j) = gauss(rng);

    Matrix q = orthonormal_basis(m * omega);
    const bool full_subspace = (k == min_dim);
    if (!full_subspace) {
        Vector prev = ritz_values(q, m, r);
        bool converged = false;
        double change = 0.0;
        int it = 0;
        for (; it < opts.max_iterations; ++it) {
            q = orthonormal_basis(m * orthonormal_basis(m.transpose() * q));
            if (it + 1 < opts.min_iterations) continue;
            const Vector cur = ritz_values(q, m, r);
            const double scale = std::max(cur(0), std::numeric_limits<double>::min());
            change = (cur - prev).cwiseAbs().maxCoeff() / scale;
            prev = cur;
            if (change <= opts.tolerance) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            throw NumericError(fmt::format(
                "truncated_svd: no convergence after {} iterations ({}x{}, r={}, subspace {}, last relative change {:.3e})",
                it, m.rows(), m.cols(), r, k, change));
        }
    }

    const Matrix b = q.transpose() * m;
    Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.u = q * svd.matrixU().leftCols(r);
    out.s = svd.singularValues().head(r);
    out.v = svd.matrixV().leftCols(r);
    return out;
}

} // namespace qadapt
