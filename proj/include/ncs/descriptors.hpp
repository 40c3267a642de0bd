#pragma once

#include "ncs/body.hpp"
#include "ncs/common.hpp"

#include <span>
#include <vector>

namespace ncs {

using StaticDesc = Eigen::Matrix<double, Eigen::Dynamic, 9, Eigen::RowMajor>;
using DynamicDesc = Eigen::Matrix<double, Eigen::Dynamic, 12, Eigen::RowMajor>;

// Unposed is the default. Global keeps world-frame rotations and accelerations
// and exists only for descriptor ablations.
enum class DescriptorVariant { Unposed, Global };

struct DescriptorFrame {
    StaticDesc static_desc;    // K x 9: 6D local rotation | unposed gravity direction
    DynamicDesc dynamic_desc;  // K x 12: d(static)/dt | unposed joint acceleration (m/s^2)
};

// First two columns of a rotation matrix, column-major: (R00 R10 R20 R01 R11 R21).
Eigen::Matrix<double, 6, 1> rotation_6d(const Mat3& r);

// Rotation with its twist about the vertical (gravity) axis removed.
Quat remove_heading(const Quat& q);

// Over all K_total joints. The root's local rotation has its heading removed so
// the descriptor is invariant to rotations about gravity.
StaticDesc static_descriptor_full(const Pose& pose, const Skeleton& skel,
                                  DescriptorVariant variant = DescriptorVariant::Unposed);
StaticDesc static_descriptor(const Pose& pose, const Skeleton& skel,
                             DescriptorVariant variant = DescriptorVariant::Unposed);

// window = {pose_{t-2}, pose_{t-1}, pose_t} at uniform spacing dt.
DynamicDesc dynamic_descriptor_full(std::span<const Pose, 3> window, double dt, const Skeleton& skel,
                                    DescriptorVariant variant = DescriptorVariant::Unposed);
DynamicDesc dynamic_descriptor(std::span<const Pose, 3> window, double dt, const Skeleton& skel,
                               DescriptorVariant variant = DescriptorVariant::Unposed);

// Keeps the rows of active joints, in order.
template <typename Derived>
Eigen::Matrix<double, Eigen::Dynamic, Derived::ColsAtCompileTime, Eigen::RowMajor> prune_joints(
    const Eigen::MatrixBase<Derived>& desc, const std::vector<bool>& mask) {
    if (static_cast<Eigen::Index>(mask.size()) != desc.rows())
        throw ConfigError("joint mask length does not match descriptor rows");
    int count = 0;
    for (bool m : mask) count += m ? 1 : 0;
    if (count == 0) throw ConfigError("joint mask selects no joints");
    Eigen::Matrix<double, Eigen::Dynamic, Derived::ColsAtCompileTime, Eigen::RowMajor> out(count,
                                                                                           desc.cols());
    int r = 0;
    for (Eigen::Index j = 0; j < desc.rows(); ++j)
        if (mask[j]) out.row(r++) = desc.row(j);
    return out;
}

// Descriptors for every frame of a pose list. Frame i differentiates against
// frames i-1 and i-2, clamped to frame 0 (the body is taken to be still before
// the first frame). Output is pruned to active joints.
std::vector<DescriptorFrame> describe_frames(std::span<const Pose> poses, double dt,
                                             const Skeleton& skel,
                                             DescriptorVariant variant = DescriptorVariant::Unposed);

Quat reflect_rotation(const Quat& q, int axis);

// Swaps left/right joints and reflects rotations and root translation across the
// sagittal plane of the skeleton.
Pose mirror_pose(const Pose& pose, const Skeleton& skel);

}  // namespace ncs
