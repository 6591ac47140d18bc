#pragma once

#include <Eigen/Dense>

namespace hybridgait {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Generalized position/velocity pair in stance-pinned coordinates.
struct JointState {
  Vec q;
  Vec qd;
};

// Row indices of the task-coordinate vector produced by the model.
// Positions are in meters relative to the stance sole frame, angles in rad.
namespace task {
constexpr int kBaseX = 0;
constexpr int kBaseY = 1;
constexpr int kBaseZ = 2;
constexpr int kBaseRoll = 3;
constexpr int kBasePitch = 4;
constexpr int kSwingX = 5;
constexpr int kSwingY = 6;
constexpr int kSwingZ = 7;
constexpr int kSwingRoll = 8;
constexpr int kSwingPitch = 9;
constexpr int kCount = 10;
}  // namespace task

}  // namespace hybridgait
