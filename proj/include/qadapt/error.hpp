// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>
#include <string>

namespace qadapt {

// Bad input to a library call. Maps to CLI exit code 2.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A budget or window that no lattice configuration can meet. Exit code 3.
class Infeasible : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Factorization / convergence failures. Exit code 4.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace qadapt
