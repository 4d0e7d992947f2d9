// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include <stdexcept>
#include <string>

namespace freqdis {

    /// Base of every error raised by the library.
    class Error : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Tensor shapes or image dimensions that do not fit an operation.
    class DimensionError : public Error {
    public:
        using Error::Error;
    };

    /// Invalid hyperparameter or configuration value.
    class ConfigError : public Error {
    public:
        using Error::Error;
    };

    /// API misuse (non-scalar loss, missing gradients, out-of-range step).
    class UsageError : public Error {
    public:
        using Error::Error;
    };

    /// A pluggable component violated its interface contract.
    class ContractError : public Error {
    public:
        using Error::Error;
    };

    /// NaN or Inf produced by a forward operation.
    class NumericError : public Error {
    public:
        using Error::Error;
    };

    /// File could not be read, written or parsed.
    class IoError : public Error {
    public:
        using Error::Error;
    };

} // namespace freqdis
