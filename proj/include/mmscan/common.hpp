#pragma once

#include <stdexcept>
#include <string>

namespace mmscan {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed arguments or configuration (bad sizes, out-of-range parameters).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Input data admits no unique solution (rank-deficient, no parallax, ...).
/// CLI maps this family to exit code 2.
class DegenerateInput : public Error {
public:
    using Error::Error;
};

class PointBehindCamera : public DegenerateInput {
public:
    PointBehindCamera() : DegenerateInput("point has non-positive depth in camera frame") {}
};

class DegenerateRays : public DegenerateInput {
public:
    using DegenerateInput::DegenerateInput;
};

class IllConditioned : public DegenerateInput {
public:
    using DegenerateInput::DegenerateInput;
};

class AmbiguousTarget : public DegenerateInput {
public:
    using DegenerateInput::DegenerateInput;
};

class UnderconstrainedMotion : public DegenerateInput {
public:
    using DegenerateInput::DegenerateInput;
};

/// An iterative solver failed to reach its convergence criteria.
/// CLI maps this to exit code 3.
class NonConvergence : public Error {
public:
    using Error::Error;
};

/// File or stream level failure.
class IoError : public Error {
public:
    using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace mmscan
