#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

// Row i holds vertex i. Row-major so a row is contiguous xyz.
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

using Face = std::array<int, 3>;

inline constexpr double kGravity = 9.81;
inline const Vec3 kGravityVector{0.0, -kGravity, 0.0};

// Error hierarchy. Every failure the library reports is one of these.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TopologyError : Error { using Error::Error; };
struct NonManifoldError : TopologyError { using TopologyError::TopologyError; };
struct WeightError : Error { using Error::Error; };
struct DegenerateError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct NumericsError : Error { using Error::Error; };
struct CheckpointError : Error { using Error::Error; };
struct AssetError : Error { using Error::Error; };

struct SolverError : Error {
    SolverError(const std::string& what, long frame = -1)
        : Error(frame >= 0 ? what + " (frame " + std::to_string(frame) + ")" : what),
          frame(frame) {}
    long frame;
};

}  // namespace ncs
