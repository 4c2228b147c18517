// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <optional>
#include <span>

#include "qadapt/nfquant.hpp"
#include "qadapt/pareto.hpp"

namespace qadapt {

// RBF kernel hyperparameters on the standardized target scale.
struct GpHyper {
    double signal_var = 1.0;
    double lengthscale = 0.5;
    double noise_var = 1e-2;
};

struct GpOptions {
    int starts = 5;
    int steps = 100;
    double learning_rate = 0.05;  // Adam step on log-parameters
    double min_noise_var = 1e-8;
    // When set, no likelihood optimization is done.
    std::optional<GpHyper> fixed;
};

struct GpModel {
    Matrix train_x;  // m x N
    Vector train_y;  // raw targets
    double y_mean = 0.0;
    double y_scale = 1.0;
    GpHyper hyper;
    double jitter = 0.0;  // extra diagonal needed for the factorization
    double log_marginal_likelihood = 0.0;
    Matrix chol;  // lower factor of K + (noise + jitter) I
    Vector alpha; // (K + noise I)^-1 y_standardized

    int size() const { return static_cast<int>(train_x.rows()); }
    int dims() const { return static_cast<int>(train_x.cols()); }
};

GpModel gp_fit(const Matrix& x, const Vector& y, const GpOptions& opts = {});

struct GpPrediction {
    double mean;
    double var;  // latent variance, raw scale, >= 0
};

GpPrediction gp_predict(const GpModel& model, const Vector& x);
// One row per query.
std::vector<GpPrediction> gp_predict_batch(const GpModel& model, const Matrix& xs);

// Expected HVI of (f1, f2_known) with f1 ~ Normal(mean, var), against a
// normalized front. Closed form per staircase piece.
double ehvi(double mean, double var, double f2_known, std::span<const ObjectivePoint> front, RefPoint ref = {});

} // namespace qadapt
