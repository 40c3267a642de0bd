#include "doctest.h"
#include "support.hpp"

#include "ncs/oracle.hpp"
#include "ncs/synth.hpp"

#include <cmath>

using namespace ncs;

namespace {

FabricParams inert() {
    FabricParams f;
    f.k_stretch = f.k_shear = f.k_bend = f.k_collision = 0.0;
    f.lame_mu = f.lame_lambda = 0.0;
    return f;
}

// Strip along x whose triangulation is mirror-symmetric about x = width / 2.
ClothModel symmetric_strip(int nx, int nz, double width, double depth) {
    ObjData obj = synth::grid(nx, nz, width, depth);
    obj.faces.clear();
    obj.face_uvs.clear();
    auto id = [nx](int i, int k) { return k * nx + i; };
    for (int k = 0; k + 1 < nz; ++k)
        for (int i = 0; i + 1 < nx; ++i) {
            if (2 * i < nx - 1) {
                obj.faces.push_back({id(i, k), id(i, k + 1), id(i + 1, k)});
                obj.faces.push_back({id(i + 1, k), id(i, k + 1), id(i + 1, k + 1)});
            } else {
                obj.faces.push_back({id(i, k), id(i, k + 1), id(i + 1, k + 1)});
                obj.faces.push_back({id(i, k), id(i + 1, k + 1), id(i + 1, k)});
            }
        }
    return ClothModel::build(make_garment(std::move(obj), {}, {}));
}

// 5 x 5 swatch held along its z = 0 edge.
struct HangingSwatch {
    ClothModel cloth = ClothModel::build(test::swatch(5, 5, 0.5));
    SolverConfig cfg;
    HangingSwatch() {
        for (int i = 0; i < 5; ++i) cfg.pinned.push_back(i);
    }
};

}  // namespace

TEST_CASE("free particles follow the ballistic update") {
    const ClothModel cloth = ClothModel::build(test::swatch(3, 3, 0.2, inert()));
    const double dt = 1.0 / 30.0;
    const Positions rest = cloth.mesh.vertices;
    for (auto method : {SolverMethod::GradientDescent, SolverMethod::Lbfgs}) {
        SolverConfig cfg;
        cfg.method = method;
        const auto step = step_dynamic(cloth, nullptr, rest, rest, dt, cfg);
        const Positions drop = step.x - rest;
        CHECK(drop.col(1).maxCoeff() == doctest::Approx(-kGravity * dt * dt).epsilon(1e-12));
        CHECK(std::abs(drop(0, 1) + 1.0900e-2) < 1e-6);

        // Moving history.
        Positions prev = rest;
        prev.col(0).array() += 0.03;
        prev.col(1).array() += 0.01;
        const auto moving = step_dynamic(cloth, nullptr, prev, rest, dt, cfg);
        Positions expected = 2.0 * prev - rest;
        expected.col(1).array() -= kGravity * dt * dt;
        CHECK((moving.x - expected).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("switching the potential off returns the inertial guess") {
    const ClothModel cloth = ClothModel::build(test::swatch(4, 4, 0.3));
    std::mt19937_64 rng(1);
    const Positions x2 = test::jitter(cloth.mesh.vertices, 0.01, rng);
    const Positions x1 = test::jitter(cloth.mesh.vertices, 0.01, rng);
    SolverConfig cfg;
    cfg.energy_scale = 0.0;
    const auto r = step_dynamic(cloth, nullptr, x1, x2, 1.0 / 30, cfg);
    CHECK((r.x - (2.0 * x1 - x2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.stats.converged);
}

TEST_CASE("step matches a long-run gradient-descent minimisation") {
    HangingSwatch s;
    const double dt = 1.0 / 30.0;
    Positions x2 = s.cloth.mesh.vertices, x1 = x2;
    for (int frame = 0; frame < 3; ++frame) {
        const auto step = step_dynamic(s.cloth, nullptr, x1, x2, dt, s.cfg);
        SolverConfig brute = s.cfg;
        brute.method = SolverMethod::GradientDescent;
        brute.max_iterations = 200000;
        brute.tolerance = 1e-10;
        const auto exact = step_dynamic(s.cloth, nullptr, x1, x2, dt, brute);
        INFO("frame " << frame);
        CHECK(step.stats.converged);
        CHECK((step.x - exact.x).cwiseAbs().maxCoeff() < 1e-6);
        x2 = x1;
        x1 = step.x;
    }
}

TEST_CASE("incremental potential never ends above the inertial guess") {
    HangingSwatch s;
    const double dt = 1.0 / 30.0;
    Positions x2 = s.cloth.mesh.vertices, x1 = x2;
    for (int frame = 0; frame < 60; ++frame) {
        const auto step = step_dynamic(s.cloth, nullptr, x1, x2, dt, s.cfg);
        Positions proj = 2.0 * x1 - x2;
        for (int v : s.cfg.pinned) proj.row(v) = x1.row(v);
        const double h_step = incremental_objective(step.x, proj, s.cloth, nullptr, dt, s.cfg, nullptr);
        const double h_proj = incremental_objective(proj, proj, s.cloth, nullptr, dt, s.cfg, nullptr);
        CHECK(h_step <= h_proj);
        for (int v : s.cfg.pinned) CHECK(step.x.row(v) == s.cloth.mesh.vertices.row(v));
        x2 = x1;
        x1 = step.x;
    }
}

TEST_CASE("incremental objective gradient is the force residual") {
    HangingSwatch s;
    std::mt19937_64 rng(3);
    const Positions proj = test::jitter(s.cloth.mesh.vertices, 0.02, rng);
    const Positions x = test::jitter(proj, 0.02, rng);
    Positions g = Positions::Zero(x.rows(), 3);
    incremental_objective(x, proj, s.cloth, nullptr, 1.0 / 30, s.cfg, &g);
    const auto fd = test::finite_difference(
        [&](const Positions& p) { return incremental_objective(p, proj, s.cloth, nullptr, 1.0 / 30, s.cfg, nullptr); },
        x);
    CHECK(test::relative_error(g, fd) < 1e-6);
}

TEST_CASE("pinned strip sags symmetrically") {
    const ClothModel strip = symmetric_strip(11, 3, 1.0, 0.2);
    SolverConfig cfg;
    for (int k = 0; k < 3; ++k) {
        cfg.pinned.push_back(k * 11);
        cfg.pinned.push_back(k * 11 + 10);
    }
    const auto r = minimize_static(strip, nullptr, strip.mesh.vertices, cfg);
    CHECK(r.stats.converged);
    double asym = 0.0;
    for (int k = 0; k < 3; ++k)
        for (int i = 0; i < 11; ++i) {
            const Vec3 a = r.x.row(k * 11 + i).transpose();
            const Vec3 b = r.x.row(k * 11 + 10 - i).transpose();
            asym = std::max({asym, std::abs(a.y() - b.y()), std::abs(a.z() - b.z()), std::abs(a.x() + b.x() - 1.0)});
        }
    CHECK(asym < 1e-4);
    CHECK(r.x(5, 1) < -1e-3);
}

TEST_CASE("static solve without gravity keeps the rest shape") {
    const ClothModel cloth = ClothModel::build(test::swatch(4, 4, 0.3));
    SolverConfig cfg;
    cfg.gravity = false;
    const auto r = minimize_static(cloth, nullptr, cloth.mesh.vertices, cfg);
    CHECK(r.stats.iterations == 0);
    CHECK(r.x == cloth.mesh.vertices);
    CHECK(static_energy(r.x, cloth, nullptr, nullptr, false) == 0.0);
}

TEST_CASE("drape lowers energy monotonically and is deterministic") {
    const Scene scene = synth::pendulum_scene({});
    const Pose pose = Pose::identity(scene.skeleton().num_joints());
    const auto a = drape_static(scene, pose, {});
    CHECK(a.stats.converged);
    for (std::size_t i = 1; i < a.stats.history.size(); ++i) CHECK(a.stats.history[i] <= a.stats.history[i - 1]);
    CHECK(a.report.metrics.gravity < 0.0);
    CHECK(a.report.metrics.collision_pct == 0.0);
    const auto b = drape_static(scene, pose, {});
    CHECK(a.state.x == b.state.x);

    SolverConfig gd;
    gd.method = SolverMethod::GradientDescent;
    gd.max_iterations = 300;
    const auto c = drape_static(scene, pose, gd);
    for (std::size_t i = 1; i < c.stats.history.size(); ++i) CHECK(c.stats.history[i] <= c.stats.history[i - 1]);
}

TEST_CASE("constant-pose simulation stays at the drape") {
    const Scene scene = synth::pendulum_scene({});
    PoseSequence seq = synth::pendulum_motion(scene.skeleton(), "still", 12, 30.0, 4);
    const auto sim = simulate_sequence(scene, seq, {});
    CHECK(sim.states.size() == seq.frames.size());
    CHECK(sim.reports.size() == seq.frames.size());
    const auto drape = drape_static(scene, seq.frames[0], {});
    for (const auto& s : sim.states) CHECK((s.x - drape.state.x).cwiseAbs().maxCoeff() < 1e-5);
    CHECK(sim.reports.back().metrics.inertia < 1e-8);
}

TEST_CASE("cloth trails the bar while it accelerates") {
    const Scene scene = synth::pendulum_scene({});
    PoseSequence seq;
    seq.fps = 30.0;
    const double acc = 3.0;
    for (int i = 0; i < 10; ++i) {
        Pose p = Pose::identity(scene.skeleton().num_joints());
        const double t = std::max(0, i - 2) / 30.0;
        p.root_translation.x() = 0.5 * acc * t * t;
        seq.frames.push_back(p);
    }
    const auto sim = simulate_sequence(scene, seq, {});
    const int bar = scene.skeleton().index_of("bar");
    auto lag = [&](int frame) {
        const double cloth_x = sim.states[frame].x.col(0).mean();
        return forward_kinematics(scene.skeleton(), seq.frames[frame])[bar].translation.x() - cloth_x;
    };
    const double base = lag(0);
    for (int frame = 4; frame < 10; ++frame) CHECK(lag(frame) > base);
}

TEST_CASE("solver errors") {
    const ClothModel cloth = ClothModel::build(test::swatch(3, 3, 0.2));
    Positions bad = cloth.mesh.vertices;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(step_dynamic(cloth, nullptr, bad, cloth.mesh.vertices, 1.0 / 30, {}), SolverError);
    CHECK_THROWS_AS(step_dynamic(cloth, nullptr, cloth.mesh.vertices, cloth.mesh.vertices, 0.0, {}), ConfigError);
    SolverConfig cfg;
    cfg.pinned = {99};
    CHECK_THROWS_AS(minimize_static(cloth, nullptr, cloth.mesh.vertices, cfg), ConfigError);
    cfg = {};
    cfg.tolerance = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(parse_solver_method("newton"), ConfigError);

    const SolverError e("diverged", 17);
    CHECK(e.frame == 17);
    CHECK(std::string(e.what()).find("frame 17") != std::string::npos);
}
