// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/autodiff.hpp"

#include <fmt/format.h>

#include "qadapt/error.hpp"

namespace qadapt::ad {

namespace {

void accumulate(Matrix& grad, const Matrix& g) {
    if (grad.size() == 0) grad = g;
    else grad += g;
}

} // namespace

Var Tape::push(Matrix value, bool requires_grad, std::function<void(std::vector<Node>&)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Matrix& value, bool requires_grad) {
    return push(value, requires_grad, {});
}

Var Tape::matmul(Var a, Var b) {
    if (value(a).cols() != value(b).rows())
        throw InvalidArgument(fmt::format("matmul: {}x{} times {}x{}", value(a).rows(), value(a).cols(),
                                          value(b).rows(), value(b).cols()));
    const int out = static_cast<int>(nodes_.size());
    return push(value(a) * value(b), needs(a) || needs(b), [a, b, out](std::vector<Node>& n) {
        const Matrix& g = n[out].grad;
        if (n[a.id].requires_grad) accumulate(n[a.id].grad, g * n[b.id].value.transpose());
        if (n[b.id].requires_grad) accumulate(n[b.id].grad, n[a.id].value.transpose() * g);
    });
}

Var Tape::add(Var a, Var b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
        throw InvalidArgument("add: shape mismatch");
    const int out = static_cast<int>(nodes_.size());
    return push(value(a) + value(b), needs(a) || needs(b), [a, b, out](std::vector<Node>& n) {
        if (n[a.id].requires_grad) accumulate(n[a.id].grad, n[out].grad);
        if (n[b.id].requires_grad) accumulate(n[b.id].grad, n[out].grad);
    });
}

Var Tape::add_row(Var a, Var row) {
    if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
        throw InvalidArgument("add_row: bias must be 1 x cols");
    const int out = static_cast<int>(nodes_.size());
    Matrix v = value(a).rowwise() + value(row).row(0);
    return push(std::move(v), needs(a) || needs(row), [a, row, out](std::vector<Node>& n) {
        if (n[a.id].requires_grad) accumulate(n[a.id].grad, n[out].grad);
        if (n[row.id].requires_grad) accumulate(n[row.id].grad, n[out].grad.colwise().sum());
    });
}

Var Tape::tanh(Var a) {
    const int out = static_cast<int>(nodes_.size());
    return push(value(a).array().tanh().matrix(), needs(a), [a, out](std::vector<Node>& n) {
        const Matrix& y = n[out].value;
        accumulate(n[a.id].grad, (n[out].grad.array() * (1.0 - y.array().square())).matrix());
    });
}

Var Tape::scale(Var a, double s) {
    const int out = static_cast<int>(nodes_.size());
    return push(value(a) * s, needs(a), [a, s, out](std::vector<Node>& n) { accumulate(n[a.id].grad, n[out].grad * s); });
}

Var Tape::add_identity(Var a) {
    if (value(a).rows() != value(a).cols()) throw InvalidArgument("add_identity: matrix is not square");
    const int out = static_cast<int>(nodes_.size());
    Matrix v = value(a);
    v.diagonal().array() += 1.0;
    return push(std::move(v), needs(a), [a, out](std::vector<Node>& n) { accumulate(n[a.id].grad, n[out].grad); });
}

Var Tape::reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
    const Matrix& src = value(a);
    if (rows * cols != src.size()) throw InvalidArgument("reshape: element count changes");
    Matrix v(rows, cols);
    for (Eigen::Index k = 0; k < src.size(); ++k) v(k / cols, k % cols) = src(k / src.cols(), k % src.cols());
    const int out = static_cast<int>(nodes_.size());
    return push(std::move(v), needs(a), [a, out](std::vector<Node>& n) {
        const Matrix& g = n[out].grad;
        const Matrix& s = n[a.id].value;
        Matrix back(s.rows(), s.cols());
        for (Eigen::Index k = 0; k < g.size(); ++k) back(k / s.cols(), k % s.cols()) = g(k / g.cols(), k % g.cols());
        accumulate(n[a.id].grad, back);
    });
}

Var Tape::concat_cols(std::initializer_list<Var> parts) {
    std::vector<Var> ps(parts);
    if (ps.empty()) throw InvalidArgument("concat_cols: nothing to concatenate");
    const Eigen::Index rows = value(ps[0]).rows();
    Eigen::Index cols = 0;
    bool req = false;
    for (Var p : ps) {
        if (value(p).rows() != rows) throw InvalidArgument("concat_cols: row counts differ");
        cols += value(p).cols();
        req = req || needs(p);
    }
    Matrix v(rows, cols);
    Eigen::Index at = 0;
    for (Var p : ps) {
        v.middleCols(at, value(p).cols()) = value(p);
        at += value(p).cols();
    }
    const int out = static_cast<int>(nodes_.size());
    return push(std::move(v), req, [ps, out](std::vector<Node>& n) {
        Eigen::Index off = 0;
        for (Var p : ps) {
            const Eigen::Index c = n[p.id].value.cols();
            if (n[p.id].requires_grad) accumulate(n[p.id].grad, n[out].grad.middleCols(off, c));
            off += c;
        }
    });
}

Var Tape::gather_row(Var table, Eigen::Index row) {
    if (row < 0 || row >= value(table).rows()) throw InvalidArgument("gather_row: row out of range");
    const int out = static_cast<int>(nodes_.size());
    return push(value(table).row(row), needs(table), [table, row, out](std::vector<Node>& n) {
        Matrix g = Matrix::Zero(n[table.id].value.rows(), n[table.id].value.cols());
        g.row(row) = n[out].grad;
        accumulate(n[table.id].grad, g);
    });
}

Var Tape::mse(Var pred, const Matrix& target) {
    if (value(pred).rows() != target.rows() || value(pred).cols() != target.cols())
        throw InvalidArgument(fmt::format("mse: prediction {}x{} vs target {}x{}", value(pred).rows(),
                                          value(pred).cols(), target.rows(), target.cols()));
    const Matrix diff = value(pred) - target;
    const double count = static_cast<double>(diff.size());
    Matrix v(1, 1);
    v(0, 0) = diff.squaredNorm() / count;
    const int out = static_cast<int>(nodes_.size());
    return push(std::move(v), needs(pred), [pred, diff, count, out](std::vector<Node>& n) {
        accumulate(n[pred.id].grad, diff * (2.0 * n[out].grad(0, 0) / count));
    });
}

void Tape::backward(Var scalar) {
    if (value(scalar).size() != 1) throw InvalidArgument("backward: output is not a scalar");
    for (auto& node : nodes_) node.grad.resize(0, 0);
    nodes_[scalar.id].grad = Matrix::Ones(1, 1);
    for (int k = scalar.id; k >= 0; --k) {
        Node& node = nodes_[k];
        if (!node.requires_grad) continue;
        if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
        if (node.back) node.back(nodes_);
    }
}

} // namespace qadapt::ad
