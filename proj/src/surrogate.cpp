// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/surrogate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "qadapt/error.hpp"

namespace qadapt {

namespace {

constexpr double kMaxJitter = 1e-4;

Matrix sq_distances(const Matrix& x) {
    const Eigen::Index m = x.rows();
    Matrix d(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        d(i, i) = 0.0;
        for (Eigen::Index j = 0; j < i; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).squaredNorm();
    }
    return d;
}

struct Factor {
    Matrix l;
    double jitter = 0.0;
};

// Cholesky of k, adding diagonal jitter from 1e-8 up to 1e-4 when needed.
bool try_factor(const Matrix& k, Factor& out) {
    for (double jitter = 0.0; jitter <= kMaxJitter; jitter = jitter == 0.0 ? 1e-8 : jitter * 10.0) {
        Matrix a = k;
        a.diagonal().array() += jitter;
        Eigen::LLT<Matrix> llt(a);
        if (llt.info() != Eigen::Success) continue;
        Matrix l = llt.matrixL();
        if (!l.allFinite() || (l.diagonal().array() <= 0.0).any()) continue;
        out.l = std::move(l);
        out.jitter = jitter;
        return true;
    }
    return false;
}

// (L L^T)^-1 b
Matrix chol_solve(const Matrix& l, const Matrix& b) {
    return l.transpose().triangularView<Eigen::Upper>().solve(l.triangularView<Eigen::Lower>().solve(b));
}

struct Likelihood {
    double value;
    std::array<double, 3> grad;  // wrt log signal_var, log lengthscale, log noise_var
};

bool likelihood(const Matrix& d2, const Vector& y, const GpHyper& h, Likelihood& out) {
    const Eigen::Index m = y.size();
    const Matrix kf = (d2.array() * (-0.5 / (h.lengthscale * h.lengthscale))).exp().matrix() * h.signal_var;
    Matrix k = kf;
    k.diagonal().array() += h.noise_var;
    Factor f;
    if (!try_factor(k, f)) return false;
    const Vector alpha = chol_solve(f.l, y);
    const Matrix kinv = chol_solve(f.l, Matrix::Identity(m, m));
    out.value = -0.5 * y.dot(alpha) - f.l.diagonal().array().log().sum() -
                0.5 * static_cast<double>(m) * std::log(2.0 * std::numbers::pi);
    const Matrix w = alpha * alpha.transpose() - kinv;
    out.grad[0] = 0.5 * (w.array() * kf.array()).sum();
    out.grad[1] = 0.5 * (w.array() * kf.array() * d2.array()).sum() / (h.lengthscale * h.lengthscale);
    out.grad[2] = 0.5 * h.noise_var * w.trace();
    return std::isfinite(out.value);
}

GpHyper from_log(const std::array<double, 3>& p) {
    return {std::exp(p[0]), std::exp(p[1]), std::exp(p[2])};
}

GpHyper optimize(const Matrix& d2, const Vector& y, const GpOptions& opts, double& best_value) {
    static constexpr double kLengths[] = {0.5, 0.1, 2.0, 0.25, 1.0};
    static constexpr double kNoises[] = {1e-2, 1e-3, 1e-1, 1e-4, 1e-2};
    const std::array<double, 3> lo = {std::log(1e-6), std::log(1e-3), std::log(opts.min_noise_var)};
    const std::array<double, 3> hi = {std::log(1e4), std::log(1e2), std::log(10.0)};
    GpHyper best{};
    best_value = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < opts.starts; ++s) {
        std::array<double, 3> p = {0.0, std::log(kLengths[s % 5] * (1.0 + s / 5)),
                                   std::log(std::max(kNoises[s % 5], opts.min_noise_var))};
        std::array<double, 3> m{}, v{};
        for (int t = 1; t <= opts.steps + 1; ++t) {
            Likelihood lk;
            if (!likelihood(d2, y, from_log(p), lk)) break;
            if (lk.value > best_value) {
                best_value = lk.value;
                best = from_log(p);
            }
            if (t > opts.steps) break;
            for (int k = 0; k < 3; ++k) {
                m[k] = 0.9 * m[k] + 0.1 * lk.grad[k];
                v[k] = 0.999 * v[k] + 0.001 * lk.grad[k] * lk.grad[k];
                const double mh = m[k] / (1.0 - std::pow(0.9, t));
                const double vh = v[k] / (1.0 - std::pow(0.999, t));
                p[k] = std::clamp(p[k] + opts.learning_rate * mh / (std::sqrt(vh) + 1e-8), lo[k], hi[k]);
            }
        }
    }
    if (!std::isfinite(best_value))
        throw NumericError("gp_fit: covariance not factorizable at any starting point");
    return best;
}

} // namespace

GpModel gp_fit(const Matrix& x, const Vector& y, const GpOptions& opts) {
    if (x.rows() < 1) throw InvalidArgument("gp_fit: need at least one observation");
    if (x.rows() != y.size())
        throw InvalidArgument(fmt::format("gp_fit: {} inputs but {} targets", x.rows(), y.size()));
    if (!y.allFinite()) throw InvalidArgument("gp_fit: targets must be finite");
    if (!x.allFinite() || (x.array() < 0.0).any() || (x.array() > 1.0).any())
        throw InvalidArgument("gp_fit: inputs must lie in the unit cube");
    if (opts.starts < 1 || opts.steps < 0) throw InvalidArgument("gp_fit: bad optimizer budget");

    GpModel model;
    model.train_x = x;
    model.train_y = y;
    const double n = static_cast<double>(y.size());
    model.y_mean = y.mean();
    const double sd = std::sqrt((y.array() - model.y_mean).square().sum() / n);
    model.y_scale = sd > 1e-12 * std::max(1.0, std::abs(model.y_mean)) ? sd : 1.0;
    const Vector ys = (y.array() - model.y_mean) / model.y_scale;

    const Matrix d2 = sq_distances(x);
    double lml = 0.0;
    model.hyper = opts.fixed ? *opts.fixed : optimize(d2, ys, opts, lml);

    const GpHyper& h = model.hyper;
    if (!(h.signal_var > 0.0) || !(h.lengthscale > 0.0) || !(h.noise_var >= 0.0))
        throw InvalidArgument("gp_fit: hyperparameters must be positive");
    Matrix k = (d2.array() * (-0.5 / (h.lengthscale * h.lengthscale))).exp().matrix() * h.signal_var;
    k.diagonal().array() += h.noise_var;
    Factor f;
    if (!try_factor(k, f))
        throw NumericError(fmt::format("gp_fit: Cholesky failed with jitter up to {} (m={}, noise={})", kMaxJitter,
                                       x.rows(), h.noise_var));
    model.chol = std::move(f.l);
    model.jitter = f.jitter;
    model.alpha = chol_solve(model.chol, ys);
    model.log_marginal_likelihood = -0.5 * ys.dot(model.alpha) - model.chol.diagonal().array().log().sum() -
                                    0.5 * n * std::log(2.0 * std::numbers::pi);
    return model;
}

GpPrediction gp_predict(const GpModel& model, const Vector& x) {
    const GpHyper& h = model.hyper;
    const Vector d2 = (model.train_x.rowwise() - x.transpose()).rowwise().squaredNorm();
    const Vector ks = (d2.array() * (-0.5 / (h.lengthscale * h.lengthscale))).exp().matrix() * h.signal_var;
    const double mu = ks.dot(model.alpha);
    const Vector v = model.chol.triangularView<Eigen::Lower>().solve(ks);
    const double var = std::max(0.0, h.signal_var - v.squaredNorm());
    return {model.y_mean + model.y_scale * mu, model.y_scale * model.y_scale * var};
}

std::vector<GpPrediction> gp_predict_batch(const GpModel& model, const Matrix& xs) {
    std::vector<GpPrediction> out;
    out.reserve(static_cast<std::size_t>(xs.rows()));
    for (Eigen::Index i = 0; i < xs.rows(); ++i) out.push_back(gp_predict(model, xs.row(i).transpose()));
    return out;
}

double ehvi(double mean, double var, double f2_known, std::span<const ObjectivePoint> front, RefPoint ref) {
    if (var < 0.0 || std::isnan(var)) throw InvalidArgument(fmt::format("ehvi: negative variance {}", var));
    const std::vector<HviStep> steps = hvi_profile(front, f2_known, ref);
    if (steps.empty()) return 0.0;
    const double sd = std::sqrt(var);
    double total = 0.0;
    if (sd == 0.0) {
        for (const auto& s : steps) total += s.drop * std::max(0.0, s.at - mean);
        return total;
    }
    // E[max(0, a - f1)] = (a - mu) Phi(z) + sd phi(z), z = (a - mu) / sd.
    static const boost::math::normal_distribution<double> std_normal;
    for (const auto& s : steps) {
        const double z = (s.at - mean) / sd;
        total += s.drop * ((s.at - mean) * boost::math::cdf(std_normal, z) + sd * boost::math::pdf(std_normal, z));
    }
    return std::max(0.0, total);
}

} // namespace qadapt
