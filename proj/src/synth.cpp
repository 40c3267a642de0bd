#include "ncs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace ncs::synth {

namespace {

constexpr double kPi = std::numbers::pi;

Quat about(const Vec3& axis, double angle) { return Quat(Eigen::AngleAxisd(angle, axis)); }

std::vector<WeightRow> single_joint(std::size_t n, const std::string& joint) {
    return std::vector<WeightRow>(n, WeightRow{{joint, 1.0}});
}

}  // namespace

ObjData grid(int nx, int nz, double width, double depth) {
    if (nx < 2 || nz < 2) throw ConfigError("grid needs at least 2 x 2 vertices");
    ObjData obj;
    std::vector<Vec2> uv;
    for (int k = 0; k < nz; ++k)
        for (int i = 0; i < nx; ++i) {
            const double x = width * i / (nx - 1), z = depth * k / (nz - 1);
            obj.vertices.emplace_back(x, 0.0, z);
            uv.emplace_back(x, z);
        }
    auto id = [nx](int i, int k) { return k * nx + i; };
    for (int k = 0; k + 1 < nz; ++k)
        for (int i = 0; i + 1 < nx; ++i) {
            const Face f1{id(i, k), id(i, k + 1), id(i + 1, k)};
            const Face f2{id(i + 1, k), id(i, k + 1), id(i + 1, k + 1)};
            for (const Face& f : {f1, f2}) {
                obj.faces.push_back(f);
                obj.face_uvs.push_back({uv[f[0]], uv[f[1]], uv[f[2]]});
            }
        }
    return obj;
}

ObjData tube(int around, int along, double radius, double length) {
    if (around < 3 || along < 2) throw ConfigError("tube needs around >= 3 and along >= 2");
    ObjData obj;
    for (int k = 0; k < along; ++k) {
        const double z = -0.5 * length + length * k / (along - 1);
        for (int i = 0; i < around; ++i) {
            const double a = 2.0 * kPi * i / around;
            obj.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), z);
        }
    }
    auto id = [around](int i, int k) { return k * around + (i % around); };
    for (int k = 0; k + 1 < along; ++k)
        for (int i = 0; i < around; ++i) {
            obj.faces.push_back({id(i, k), id(i + 1, k), id(i + 1, k + 1)});
            obj.faces.push_back({id(i, k), id(i + 1, k + 1), id(i, k + 1)});
        }
    return obj;
}

ObjData capped_cylinder(int around, int along, double radius, double length) {
    ObjData obj = tube(around, along, radius, length);
    const int bottom = static_cast<int>(obj.vertices.size());
    obj.vertices.emplace_back(0.0, 0.0, -0.5 * length);
    const int top = bottom + 1;
    obj.vertices.emplace_back(0.0, 0.0, 0.5 * length);
    const int last = (along - 1) * around;
    for (int i = 0; i < around; ++i) {
        const int j = (i + 1) % around;
        obj.faces.push_back({bottom, j, i});
        obj.faces.push_back({top, last + i, last + j});
    }
    return obj;
}

Skeleton pendulum_skeleton() {
    Skeleton skel;
    const int root = add_joint(skel, "root", -1, Vec3::Zero());
    const int pivot = add_joint(skel, "pivot", root, Vec3(0.0, 1.0, 0.0));
    const int arm = add_joint(skel, "arm", pivot, Vec3(0.0, -0.3, 0.0));
    add_joint(skel, "bar", arm, Vec3(0.0, -0.3, 0.0));
    skel.mirror_axis = 0;
    skel.validate();
    return skel;
}

BodyModel pendulum_body(const PendulumOptions& opts) {
    Skeleton skel = pendulum_skeleton();
    ObjData obj = capped_cylinder(24, 11, opts.bar_radius, opts.bar_length);
    const Vec3 bar = rest_globals(skel)[skel.index_of("bar")].translation;
    for (Vec3& v : obj.vertices) v += bar;
    const auto n = obj.vertices.size();
    return make_body(std::move(skel), std::move(obj), single_joint(n, "bar"));
}

GarmentMesh pendulum_garment(const FabricParams& fabric, const PendulumOptions& opts) {
    ObjData obj = tube(opts.loop_around, opts.loop_along, opts.loop_radius, opts.loop_length);
    const Skeleton skel = pendulum_skeleton();
    const Vec3 bar = rest_globals(skel)[skel.index_of("bar")].translation;
    // Top of the loop sits `clearance` above the bar.
    const Vec3 centre = bar + Vec3(0.0, opts.bar_radius + opts.clearance - opts.loop_radius, 0.0);
    for (Vec3& v : obj.vertices) v += centre;
    const auto n = obj.vertices.size();
    return make_garment(std::move(obj), single_joint(n, "bar"), fabric);
}

Scene pendulum_scene(const FabricParams& fabric, const PendulumOptions& opts) {
    return make_scene(pendulum_body(opts), pendulum_garment(fabric, opts));
}

Scene dense_scene(int target_dofs, const FabricParams& fabric) {
    PendulumOptions opts;
    const int vertices = (target_dofs + 2) / 3;
    opts.loop_along = std::max(2, static_cast<int>(std::lround(std::sqrt(vertices / 2.0))));
    opts.loop_around = std::max(3, (vertices + opts.loop_along - 1) / opts.loop_along);
    return pendulum_scene(fabric, opts);
}

PoseSequence pendulum_motion(const Skeleton& skel, const std::string& action, int frames, double fps,
                             std::uint64_t seed) {
    if (frames < 1 || !(fps > 0.0)) throw ConfigError("motion needs frames >= 1 and fps > 0");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const int root = skel.index_of("root"), pivot = skel.index_of("pivot"), arm = skel.index_of("arm");
    const Vec3 y = Vec3::UnitY(), z = Vec3::UnitZ();
    const double heading = uniform(-kPi, kPi);
    const double amp = uniform(0.3, 0.9) * (unit(rng) < 0.5 ? -1.0 : 1.0), freq = uniform(0.4, 1.0);
    const double spin_rate = uniform(2.0, 6.0) * (unit(rng) < 0.5 ? -1.0 : 1.0);
    const double hop_speed = uniform(0.8, 1.5);
    const double tilt = uniform(-0.9, 0.9), bend = uniform(-0.4, 0.4);
    const double hold = 0.4;  // s held at the release angle before swinging
    const double arm_amp = uniform(0.1, 0.4);

    PoseSequence seq;
    seq.fps = fps;
    seq.action = action;
    seq.name = action + "_" + std::to_string(seed);
    for (int i = 0; i < frames; ++i) {
        const double t = i / fps;
        Pose pose = Pose::identity(skel.num_joints());
        double yaw = heading, swing = 0.0, arm_angle = 0.0;
        if (action == "swing" || action == "mixed")
            swing = amp * std::cos(2.0 * kPi * freq * std::max(0.0, t - hold));
        if (action == "spin" || action == "mixed") {
            // Angular speed ramps up over the first second.
            const double ramp = std::min(t, 1.0);
            yaw += spin_rate * (t < 1.0 ? 0.5 * ramp * ramp : t - 0.5);
        }
        if (action == "mixed") arm_angle = arm_amp * std::sin(2.0 * kPi * 1.3 * freq * std::max(0.0, t - hold));
        if (action == "jump") {
            const double period = 2.0 * hop_speed / kGravity;
            const double rest = 0.5;
            const double tau = t < rest ? 0.0 : std::fmod(t - rest, period + rest);
            if (t >= rest && tau < period)
                pose.root_translation.y() = hop_speed * tau - 0.5 * kGravity * tau * tau;
        }
        if (action == "still") {
            swing = tilt;
            arm_angle = bend;
        }
        pose.rotations[root] = about(y, yaw);
        pose.rotations[pivot] = about(z, swing);
        pose.rotations[arm] = about(z, arm_angle);
        pose.canonicalize();
        seq.frames.push_back(std::move(pose));
    }
    return seq;
}

std::vector<PoseSequence> pendulum_dataset(const Skeleton& skel, int total_frames, int frames_per_sequence,
                                           double fps, std::uint64_t seed) {
    if (frames_per_sequence < 3) throw ConfigError("sequences need at least 3 frames");
    std::vector<PoseSequence> out;
    int covered = 0;
    for (int i = 0; covered < total_frames; ++i) {
        const std::string action = kActions[i % std::size(kActions)];
        out.push_back(pendulum_motion(skel, action, frames_per_sequence, fps, seed * 1000003ULL + i));
        covered += frames_per_sequence;
    }
    return out;
}

}  // namespace ncs::synth
