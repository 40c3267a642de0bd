#include "doctest.h"
#include "support.hpp"

#include "ncs/descriptors.hpp"
#include "ncs/synth.hpp"

#include <array>
#include <numbers>
#include <random>

using namespace ncs;

namespace {

constexpr double kPi = std::numbers::pi;

Quat random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Quat q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    return q;
}

// Pelvis with mirrored left/right legs; sagittal plane x = 0.
Skeleton symmetric_skeleton() {
    Skeleton s;
    add_joint(s, "pelvis", -1, Vec3(0, 1, 0));
    add_joint(s, "spine", 0, Vec3(0, 0.3, 0));
    const int lh = add_joint(s, "l_hip", 0, Vec3(0.1, -0.05, 0));
    const int lk = add_joint(s, "l_knee", lh, Vec3(0.02, -0.4, 0.01));
    const int rh = add_joint(s, "r_hip", 0, Vec3(-0.1, -0.05, 0));
    const int rk = add_joint(s, "r_knee", rh, Vec3(-0.02, -0.4, 0.01));
    s.mirror[lh] = rh;
    s.mirror[rh] = lh;
    s.mirror[lk] = rk;
    s.mirror[rk] = lk;
    s.mirror_axis = 0;
    s.validate();
    return s;
}

Pose random_pose(const Skeleton& s, std::mt19937_64& rng) {
    Pose p = Pose::identity(s.num_joints());
    for (auto& q : p.rotations) q = random_rotation(rng);
    p.root_translation = Vec3::Random();
    return p;
}

}  // namespace

TEST_CASE("static descriptor examples") {
    Skeleton s;
    add_joint(s, "a", -1, Vec3::Zero());
    add_joint(s, "b", 0, Vec3(0, 1, 0));
    const StaticDesc d = static_descriptor(Pose::identity(2), s);
    REQUIRE(d.rows() == 2);
    for (int j = 0; j < 2; ++j) {
        Eigen::Matrix<double, 1, 9> expected;
        expected << 1, 0, 0, 0, 1, 0, 0, -1, 0;
        CHECK(d.row(j) == expected);
    }
    Pose p = Pose::identity(2);
    p.rotations[1] = Quat(Eigen::AngleAxisd(kPi / 2, Vec3::UnitX()));
    const StaticDesc r = static_descriptor(p, s);
    CHECK((r.row(1).tail<3>() - Eigen::RowVector3d(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("gravity direction reconstructs for random poses") {
    const Skeleton s = symmetric_skeleton();
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Pose p = random_pose(s, rng);
        const StaticDesc d = static_descriptor(p, s);
        const auto g = forward_kinematics(s, p);
        for (int j = 0; j < s.num_joints(); ++j) {
            const Vec3 gh = d.row(j).tail<3>().transpose();
            CHECK(gh.norm() == doctest::Approx(1.0).epsilon(1e-6));
            CHECK((g[j].rotation * gh - Vec3(0, -1, 0)).norm() < 1e-9);
        }
    }
}

TEST_CASE("6D part ignores quaternion sign") {
    const Skeleton s = symmetric_skeleton();
    std::mt19937_64 rng(2);
    Pose p = random_pose(s, rng);
    Pose q = p;
    for (auto& r : q.rotations) r.coeffs() = -r.coeffs();
    CHECK((static_descriptor(p, s) - static_descriptor(q, s)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("dynamic descriptor examples") {
    const Skeleton s = symmetric_skeleton();
    std::mt19937_64 rng(3);
    const Pose p = random_pose(s, rng);
    const std::array<Pose, 3> still{p, p, p};
    const DynamicDesc zero = dynamic_descriptor(std::span<const Pose, 3>(still), 1.0 / 30, s);
    CHECK(zero.cwiseAbs().maxCoeff() == 0.0);

    Pose a = Pose::identity(s.num_joints()), b = a, c = a;
    b.root_translation = Vec3(0.1, 0.2, -0.1);
    c.root_translation = 2.0 * b.root_translation;
    const std::array<Pose, 3> moving{a, b, c};
    const DynamicDesc v = dynamic_descriptor(std::span<const Pose, 3>(moving), 0.1, s);
    CHECK(v.rightCols<3>().cwiseAbs().maxCoeff() < 1e-12);

    // p(t) = 1/2 a t^2 along -y: acceleration columns (0, -a, 0).
    const double acc = 3.0, dt = 0.05;
    std::array<Pose, 3> falling{a, a, a};
    for (int k = 0; k < 3; ++k) falling[k].root_translation = Vec3(0, -0.5 * acc * std::pow(k * dt, 2), 0);
    const DynamicDesc f = dynamic_descriptor(std::span<const Pose, 3>(falling), dt, s);
    for (int j = 0; j < s.num_joints(); ++j)
        CHECK((f.row(j).tail<3>() - Eigen::RowVector3d(0, -acc, 0)).norm() < 1e-9);
    CHECK_THROWS_AS(dynamic_descriptor(std::span<const Pose, 3>(still), 0.0, s), ConfigError);
}

TEST_CASE("prune joints") {
    Skeleton s = symmetric_skeleton();
    std::mt19937_64 rng(4);
    const Pose p = random_pose(s, rng);
    const StaticDesc full = static_descriptor_full(p, s);
    CHECK(prune_joints(full, std::vector<bool>(6, true)) == full);
    std::vector<bool> mask{true, false, true, false, true, false};
    s.active = mask;
    const StaticDesc pruned = static_descriptor(p, s);
    CHECK(pruned.rows() == 3);
    CHECK(pruned.row(1) == full.row(2));
    CHECK_THROWS_AS(prune_joints(full, std::vector<bool>(6, false)), ConfigError);
    CHECK_THROWS_AS(prune_joints(full, std::vector<bool>(5, true)), ConfigError);

    // 14 of 52.
    Skeleton big;
    add_joint(big, "j0", -1, Vec3::Zero());
    for (int j = 1; j < 52; ++j) add_joint(big, "j" + std::to_string(j), j - 1, Vec3(0, 0.1, 0));
    for (int j = 14; j < 52; ++j) big.active[j] = false;
    CHECK(static_descriptor(Pose::identity(52), big).rows() == 14);

    // Pruning commutes with computing.
    const std::array<Pose, 3> w{random_pose(s, rng), random_pose(s, rng), random_pose(s, rng)};
    const DynamicDesc dyn_full = dynamic_descriptor_full(std::span<const Pose, 3>(w), 0.1, s);
    CHECK(prune_joints(dyn_full, s.active) == dynamic_descriptor(std::span<const Pose, 3>(w), 0.1, s));
}

TEST_CASE("describe_frames clamps history and matches the three-frame form") {
    const Skeleton s = synth::pendulum_skeleton();
    const PoseSequence seq = synth::pendulum_motion(s, "mixed", 12, 30.0, 8);
    const auto frames = describe_frames(seq.frames, 1.0 / 30, s);
    CHECK(frames[0].dynamic_desc.cwiseAbs().maxCoeff() == 0.0);
    for (int t = 2; t < 12; ++t) {
        const std::array<Pose, 3> w{seq.frames[t - 2], seq.frames[t - 1], seq.frames[t]};
        CHECK((frames[t].dynamic_desc - dynamic_descriptor(std::span<const Pose, 3>(w), 1.0 / 30, s))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
        CHECK(frames[t].static_desc == static_descriptor(seq.frames[t], s));
    }
}

TEST_CASE("descriptors are invariant to rotating the motion about gravity") {
    const Skeleton s = synth::pendulum_skeleton();
    for (const char* action : synth::kActions) {
        const PoseSequence seq = synth::pendulum_motion(s, action, 40, 30.0, 12);
        for (double angle : {0.7, -2.1, kPi}) {
            const Quat yaw(Eigen::AngleAxisd(angle, Vec3::UnitY()));
            std::vector<Pose> turned = seq.frames;
            for (auto& p : turned) {
                p.rotations[0] = yaw * p.rotations[0];
                p.root_translation = yaw * p.root_translation;
            }
            const auto a = describe_frames(seq.frames, 1.0 / 30, s);
            const auto b = describe_frames(turned, 1.0 / 30, s);
            double worst = 0.0;
            for (std::size_t t = 0; t < a.size(); ++t) {
                worst = std::max(worst, (a[t].static_desc - b[t].static_desc).cwiseAbs().maxCoeff());
                worst = std::max(worst, (a[t].dynamic_desc - b[t].dynamic_desc).cwiseAbs().maxCoeff());
            }
            INFO(action << " angle " << angle);
            CHECK(worst < 1e-6);
        }
    }
}

TEST_CASE("mirror pose") {
    const Skeleton s = symmetric_skeleton();
    const Pose id = Pose::identity(s.num_joints());
    const Pose mid = mirror_pose(id, s);
    for (int j = 0; j < s.num_joints(); ++j) CHECK(mid.rotations[j].coeffs() == id.rotations[j].coeffs());

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Pose p = random_pose(s, rng);
        const Pose twice = mirror_pose(mirror_pose(p, s), s);
        for (int j = 0; j < s.num_joints(); ++j)
            CHECK((twice.rotations[j].coeffs() - p.rotations[j].coeffs()).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((twice.root_translation - p.root_translation).norm() < 1e-12);

        // Reflected joint positions of a symmetric skeleton.
        const Pose m = mirror_pose(p, s);
        CHECK_NOTHROW(m.validate(s.num_joints()));
        const auto g = forward_kinematics(s, p);
        const auto gm = forward_kinematics(s, m);
        for (int j = 0; j < s.num_joints(); ++j) {
            Vec3 reflected = g[s.mirror[j]].translation;
            reflected.x() = -reflected.x();
            CHECK((gm[j].translation - reflected).norm() < 1e-9);
        }
    }
}
