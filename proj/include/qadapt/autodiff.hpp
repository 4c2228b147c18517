// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <functional>
#include <initializer_list>
#include <vector>

#include "qadapt/nfquant.hpp"

namespace qadapt::ad {

// Handle into a Tape.
struct Var {
    int id = -1;
};

// Minimal reverse-mode tape over dense fp64 matrices. Nodes are appended in
// evaluation order; backward() walks them in reverse.
class Tape {
public:
    Var leaf(const Matrix& value, bool requires_grad = false);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var add_row(Var a, Var row);  // row (1 x n) broadcast over a's rows
    Var tanh(Var a);
    Var scale(Var a, double s);
    Var add_identity(Var a);      // a + I, a square
    Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);  // row-major order
    Var concat_cols(std::initializer_list<Var> parts);
    Var gather_row(Var table, Eigen::Index row);
    Var mse(Var pred, const Matrix& target);  // mean over all entries, 1 x 1

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

    void backward(Var scalar);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        std::function<void(std::vector<Node>&)> back;
    };

    Var push(Matrix value, bool requires_grad, std::function<void(std::vector<Node>&)> back);
    bool needs(Var v) const { return nodes_[v.id].requires_grad; }

    std::vector<Node> nodes_;
};

} // namespace qadapt::ad
