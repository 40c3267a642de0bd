#include "ncs/descriptors.hpp"

#include <algorithm>
#include <cmath>

namespace ncs {

Eigen::Matrix<double, 6, 1> rotation_6d(const Mat3& r) {
    Eigen::Matrix<double, 6, 1> out;
    out << r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1);
    return out;
}

Quat remove_heading(const Quat& q) {
    const double w = q.w(), y = q.y();
    const double len = std::sqrt(w * w + y * y);
    if (len < 1e-12) return q;  // pure 180-degree swing: heading undefined
    const Quat twist(w / len, 0.0, y / len, 0.0);
    return twist.conjugate() * q;
}

StaticDesc static_descriptor_full(const Pose& pose, const Skeleton& skel, DescriptorVariant variant) {
    pose.validate(skel.num_joints());
    const auto globals = forward_kinematics(skel, pose);
    const int k = skel.num_joints();
    StaticDesc out(k, 9);
    const Vec3 g_hat = kGravityVector / kGravity;
    for (int j = 0; j < k; ++j) {
        const Mat3& rg = globals[j].rotation;
        if (variant == DescriptorVariant::Global) {
            out.row(j).head<6>() = rotation_6d(rg).transpose();
            out.row(j).tail<3>() = g_hat.transpose();
            continue;
        }
        Quat local = skel.rest_rotations[j] * pose.rotations[j];
        if (skel.parents[j] < 0) local = remove_heading(local);
        out.row(j).head<6>() = rotation_6d(local.toRotationMatrix()).transpose();
        out.row(j).tail<3>() = (rg.transpose() * g_hat).transpose();
    }
    return out;
}

StaticDesc static_descriptor(const Pose& pose, const Skeleton& skel, DescriptorVariant variant) {
    return prune_joints(static_descriptor_full(pose, skel, variant), skel.active);
}

DynamicDesc dynamic_descriptor_full(std::span<const Pose, 3> window, double dt, const Skeleton& skel,
                                    DescriptorVariant variant) {
    if (!(dt > 0.0)) throw ConfigError("descriptor time step must be > 0");
    const StaticDesc s_prev = static_descriptor_full(window[1], skel, variant);
    const StaticDesc s_now = static_descriptor_full(window[2], skel, variant);
    const auto g0 = forward_kinematics(skel, window[0]);
    const auto g1 = forward_kinematics(skel, window[1]);
    const auto g2 = forward_kinematics(skel, window[2]);
    const int k = skel.num_joints();
    DynamicDesc out(k, 12);
    const double inv_dt2 = 1.0 / (dt * dt);
    for (int j = 0; j < k; ++j) {
        out.row(j).head<9>() = (s_now.row(j) - s_prev.row(j)) / dt;
        const Vec3 acc =
            (g2[j].translation - 2.0 * g1[j].translation + g0[j].translation) * inv_dt2;
        const Vec3 a = variant == DescriptorVariant::Global ? acc : Vec3(g2[j].rotation.transpose() * acc);
        out.row(j).tail<3>() = a.transpose();
    }
    return out;
}

DynamicDesc dynamic_descriptor(std::span<const Pose, 3> window, double dt, const Skeleton& skel,
                               DescriptorVariant variant) {
    return prune_joints(dynamic_descriptor_full(window, dt, skel, variant), skel.active);
}

std::vector<DescriptorFrame> describe_frames(std::span<const Pose> poses, double dt,
                                             const Skeleton& skel, DescriptorVariant variant) {
    if (!(dt > 0.0)) throw ConfigError("descriptor time step must be > 0");
    const int n = static_cast<int>(poses.size());
    const int k = skel.num_joints();
    // One FK + static descriptor per frame, then finite differences.
    std::vector<StaticDesc> stat(n);
    std::vector<std::vector<RigidTransform>> globals(n);
    for (int i = 0; i < n; ++i) {
        stat[i] = static_descriptor_full(poses[i], skel, variant);
        globals[i] = forward_kinematics(skel, poses[i]);
    }
    std::vector<DescriptorFrame> out(n);
    const double inv_dt2 = 1.0 / (dt * dt);
    for (int i = 0; i < n; ++i) {
        const int i1 = std::max(i - 1, 0), i2 = std::max(i - 2, 0);
        DynamicDesc dyn(k, 12);
        for (int j = 0; j < k; ++j) {
            dyn.row(j).head<9>() = (stat[i].row(j) - stat[i1].row(j)) / dt;
            const Vec3 acc = (globals[i][j].translation - 2.0 * globals[i1][j].translation +
                              globals[i2][j].translation) *
                             inv_dt2;
            const Vec3 a = variant == DescriptorVariant::Global
                               ? acc
                               : Vec3(globals[i][j].rotation.transpose() * acc);
            dyn.row(j).tail<3>() = a.transpose();
        }
        out[i].static_desc = prune_joints(stat[i], skel.active);
        out[i].dynamic_desc = prune_joints(dyn, skel.active);
    }
    return out;
}

Quat reflect_rotation(const Quat& q, int axis) {
    // S R S with S = diag(+-1) flips the two vector components off the axis.
    Quat out = q;
    for (int a = 0; a < 3; ++a)
        if (a != axis) out.vec()[a] = -out.vec()[a];
    return out;
}

Pose mirror_pose(const Pose& pose, const Skeleton& skel) {
    const int k = skel.num_joints();
    Pose out;
    out.rotations.resize(k);
    for (int j = 0; j < k; ++j) out.rotations[j] = reflect_rotation(pose.rotations[skel.mirror[j]], skel.mirror_axis);
    out.root_translation = pose.root_translation;
    out.root_translation[skel.mirror_axis] = -out.root_translation[skel.mirror_axis];
    return out;
}

}  // namespace ncs
