#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace wpe_gs {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

// Microphones are indexed from 0 internally; microphone 0 is the reference.
// Reports print them 1-based.
using MicIndex = std::size_t;
inline constexpr MicIndex kReferenceMic = 0;

// Bad configuration or violated precondition reachable from user input.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Input data could not be read or has the wrong shape/format.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every frequency bin of a problem was numerically degenerate.
class DegenerateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what)
{
    if (!cond) throw ConfigError(what);
}

}  // namespace wpe_gs
