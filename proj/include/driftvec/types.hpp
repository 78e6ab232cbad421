#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace driftvec {

/// Row-major dense matrix; row i holds the embedding of word (or context) i.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using WordId = std::uint32_t;

/// Runtime failure inside the library (numerical breakdown, I/O).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input or configuration. The command-line tool maps this to exit code 2.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace driftvec
