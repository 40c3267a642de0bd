#include "doctest.h"
#include "support.hpp"

#include "ncs/energy.hpp"
#include "ncs/synth.hpp"

#include <cmath>
#include <numbers>

using namespace ncs;
using ncs::test::finite_difference;
using ncs::test::relative_error;

namespace {

ClothModel single_edge_cloth() {
    // One triangle whose first edge has rest length 1.
    ObjData obj;
    obj.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    obj.faces = {Face{0, 1, 2}};
    return ClothModel::build(make_garment(std::move(obj), {}, {}));
}

// Two faces sharing edge (0,1) of length 1, each of area 0.5, lying flat.
ClothModel hinge_cloth() {
    ObjData obj;
    obj.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, -1, 0)};
    obj.faces = {Face{0, 1, 2}, Face{1, 0, 3}};
    return ClothModel::build(make_garment(std::move(obj), {}, {}));
}

// Unit-area right triangle with uv equal to its xy coordinates.
ClothModel unit_face_cloth() {
    ObjData obj;
    const double s = std::sqrt(2.0);
    obj.vertices = {Vec3(0, 0, 0), Vec3(s, 0, 0), Vec3(0, s, 0)};
    obj.faces = {Face{0, 1, 2}};
    obj.face_uvs = {{Vec2(0, 0), Vec2(s, 0), Vec2(0, s)}};
    return ClothModel::build(make_garment(std::move(obj), {}, {}));
}

ClothModel swatch_cloth(int n = 5, double size = 0.1, FabricParams fabric = {}) {
    return ClothModel::build(test::swatch(n, n, size, fabric));
}

BodyCollider drum() {
    ObjData obj = synth::capped_cylinder(24, 5, 0.1, 0.4);
    return BodyCollider(test::to_positions(obj.vertices), obj.faces);
}

// Swatch resting across the top of drum(), jittered so some vertices penetrate.
Positions swatch_over_drum(const ClothModel& cloth, std::mt19937_64& rng) {
    Positions x = cloth.mesh.vertices;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x(i, 0) -= 0.05;
        x(i, 2) -= 0.05;
        x(i, 1) = 0.1 + 0.002;
    }
    return test::jitter(x, 0.006, rng);
}

}  // namespace

TEST_CASE("mass-spring energy examples") {
    const ClothModel cloth = single_edge_cloth();
    const auto rest = e_mass_spring(cloth.mesh.vertices, cloth, 10.0);
    CHECK(rest.energy == 0.0);
    CHECK(rest.gradient.cwiseAbs().maxCoeff() == 0.0);

    Positions x = cloth.mesh.vertices;
    // Stretch edge (0,1) to 1.1 while keeping the other edges at rest length is not
    // possible, so evaluate the single-edge sum directly.
    Topology one_edge;
    one_edge.edges = {{0, 1}};
    RestState rest_state;
    rest_state.edge_lengths = {1.0};
    x.row(1) = Vec3(1.1, 0, 0).transpose();
    Positions grad = Positions::Zero(3, 3);
    const double e = mass_spring_energy(x, one_edge, rest_state, 10.0, &grad);
    CHECK(e == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(grad(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(grad(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("mass-spring ignores zero-length edges in the gradient") {
    const ClothModel cloth = single_edge_cloth();
    Positions x = cloth.mesh.vertices;
    x.row(1) = x.row(0);
    const auto r = e_mass_spring(x, cloth, 10.0);
    CHECK(std::isfinite(r.energy));
    CHECK(r.gradient.allFinite());
}

TEST_CASE("Baraff-Witkin energy examples") {
    const ClothModel cloth = unit_face_cloth();
    CHECK(e_baraff_witkin_sq(cloth.mesh.vertices, cloth, 10.0, 0.5).energy == 0.0);
    Positions x = cloth.mesh.vertices;
    x.col(0) *= 1.1;
    const auto r = e_baraff_witkin_sq(x, cloth, 10.0, 0.0);
    CHECK(r.energy == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("StVK energy examples") {
    const ClothModel cloth = unit_face_cloth();
    const double mu = 10.0, lambda = 20.0;
    CHECK(e_stvk(cloth.mesh.vertices, cloth, mu, lambda).energy == 0.0);
    const double s = 1.1;
    const Positions x = s * cloth.mesh.vertices;
    const double g = (s * s - 1.0) / 2.0;
    const double expected = 1.0 * (2.0 * mu + 2.0 * lambda) * g * g;
    CHECK(e_stvk(x, cloth, mu, lambda).energy == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("bending energy examples") {
    const ClothModel cloth = hinge_cloth();
    REQUIRE(cloth.topology.dihedrals.size() == 1);
    CHECK(cloth.rest.dihedral_scale[0] == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(e_bending(cloth.mesh.vertices, cloth, 1e-4).energy == 0.0);

    Positions x = cloth.mesh.vertices;
    x.row(3) = Vec3(0, 0, -1).transpose();
    const auto r = e_bending(x, cloth, 1e-4);
    const double half_pi = std::numbers::pi / 2.0;
    CHECK(r.energy == doctest::Approx(1e-4 * 0.125 * half_pi * half_pi).epsilon(1e-12));
    CHECK(r.energy == doctest::Approx(3.084e-5).epsilon(1e-3));
}

TEST_CASE("bending gradient matches finite differences on a folded hinge") {
    const ClothModel cloth = hinge_cloth();
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Positions x = cloth.mesh.vertices;
        x.row(3) = Vec3(0, 0.3, -0.8).transpose();
        x = test::jitter(x, 0.2, rng);
        const auto r = e_bending(x, cloth, 1e-4);
        const auto fd = finite_difference(
            [&](const Positions& p) { return bending_energy(p, cloth.topology, cloth.rest, 1e-4, nullptr); }, x);
        CHECK(relative_error(r.gradient, fd) < 1e-5);
    }
}

TEST_CASE("bending skips collapsed faces and counts them") {
    const ClothModel cloth = hinge_cloth();
    Positions x = cloth.mesh.vertices;
    x.row(2) = Vec3(0.5, 0, 0).transpose();  // face_a collapses onto the edge
    int skipped = 0;
    Positions grad = Positions::Zero(4, 3);
    bending_energy(x, cloth.topology, cloth.rest, 1e-4, &grad, &skipped);
    CHECK(skipped == 1);
    CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("collision energy examples") {
    const BodyCollider body = drum();
    const ClothModel cloth = single_edge_cloth();
    Positions x(3, 3);
    x << 0.0, 0.5, 0.0, 0.1, 0.5, 0.0, 0.0, 0.6, 0.0;
    double pct = -1.0;
    auto r = e_collision(x, body, 10.0, 0.004, &pct);
    CHECK(r.energy == 0.0);
    CHECK(r.gradient.cwiseAbs().maxCoeff() == 0.0);
    CHECK(pct == 0.0);

    // Vertex 0 sits 2 mm below the flat end cap at z = 0.2.
    x.row(0) = Vec3(0.0, 0.0, 0.198).transpose();
    r = e_collision(x, body, 10.0, 0.004, &pct);
    CHECK(r.energy == doctest::Approx(10.0 * 0.006 * 0.006).epsilon(1e-9));
    CHECK(pct == doctest::Approx(100.0 / 3.0));
    const Vec3 g = r.gradient.row(0).transpose();
    const Vec3 normal = body.query_brute_force(Vec3(0.0, 0.0, 0.198)).normal;
    // Descent direction pushes outward.
    CHECK((-g).dot(normal) > 0.0);
    CHECK((-g).normalized().dot(Vec3::UnitZ()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("collision energy vanishes exactly when every vertex clears eps") {
    const BodyCollider body = drum();
    const ClothModel cloth = swatch_cloth();
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const Positions x = swatch_over_drum(cloth, rng);
        bool all_clear = true;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            all_clear = all_clear && body.query(x.row(i).transpose()).distance >= 0.004;
        CHECK((e_collision(x, body, 10.0, 0.004).energy == 0.0) == all_clear);
    }
}

TEST_CASE("gravity energy examples") {
    Positions x = Positions::Zero(2, 3);
    CHECK(e_gravity(x, {1.0, 2.0}).energy == 0.0);
    Positions one(1, 3);
    one << 0.3, 1.0, -0.2;
    const auto r = e_gravity(one, {1.0});
    CHECK(r.energy == doctest::Approx(9.81).epsilon(1e-14));
    CHECK(r.gradient(0, 0) == 0.0);
    CHECK(r.gradient(0, 1) == doctest::Approx(9.81));
    CHECK(r.gradient(0, 2) == 0.0);
    // The force, minus the gradient, points down.
    CHECK(-r.gradient(0, 1) < 0.0);
}

TEST_CASE("inertia energy examples") {
    const std::vector<double> m{0.01};
    Positions x2(1, 3), x1(1, 3), x0(1, 3);
    x2 << 0, 0, 0;
    x1 << 0.1, 0, 0;
    x0 << 0.2, 0, 0;
    CHECK(e_inertia(x0, x1, x2, m, 1.0 / 30.0).energy == doctest::Approx(0.0).scale(1.0));
    x0(0, 1) = 0.01;
    CHECK(e_inertia(x0, x1, x2, m, 1.0 / 30.0).energy == doctest::Approx(4.5e-4).epsilon(1e-9));
    CHECK_THROWS_AS(e_inertia(x0, x1, x2, m, 0.0), ConfigError);
    CHECK_THROWS_AS(e_inertia(x0, x1, x2, m, -1.0), ConfigError);
}

TEST_CASE("inertia is invariant to adding a constant velocity to the history") {
    std::mt19937_64 rng(5);
    const ClothModel cloth = swatch_cloth();
    const Positions x2 = test::jitter(cloth.mesh.vertices, 0.01, rng);
    const Positions x1 = test::jitter(cloth.mesh.vertices, 0.01, rng);
    const Positions x0 = test::jitter(cloth.mesh.vertices, 0.01, rng);
    const double base = e_inertia(x0, x1, x2, cloth.masses, 1.0 / 30.0).energy;
    const Eigen::RowVector3d v(0.3, -0.2, 0.1);
    Positions y2 = x2, y1 = x1, y0 = x0;
    y1.rowwise() += v;
    y0.rowwise() += 2.0 * v;
    CHECK(e_inertia(y0, y1, y2, cloth.masses, 1.0 / 30.0).energy == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("every material model is exactly zero at rest") {
    for (auto model : {MaterialModel::MassSpring, MaterialModel::BaraffWitkinSq, MaterialModel::StVK}) {
        FabricParams fab;
        fab.material = model;
        const ClothModel cloth = swatch_cloth(5, 0.1, fab);
        Positions grad = Positions::Zero(cloth.num_vertices(), 3);
        CHECK(cloth_energy(cloth.mesh.vertices, cloth, &grad) == 0.0);
        CHECK(grad.cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("term gradients match central differences on random configurations") {
    const BodyCollider body = drum();
    const ClothModel cloth = swatch_cloth();
    const FabricParams& fab = cloth.fabric();
    std::mt19937_64 rng(2024);
    const double dt = 1.0 / 30.0;
    double worst[7] = {};
    for (int trial = 0; trial < 20; ++trial) {
        const Positions x = swatch_over_drum(cloth, rng);
        const Positions x1 = test::jitter(x, 0.01, rng);
        const Positions x2 = test::jitter(x, 0.01, rng);
        const std::function<double(const Positions&, Positions*)> terms[7] = {
            [&](const Positions& p, Positions* g) {
                return mass_spring_energy(p, cloth.topology, cloth.rest, fab.k_stretch, g);
            },
            [&](const Positions& p, Positions* g) {
                return baraff_witkin_sq_energy(p, cloth.mesh.faces, cloth.rest, fab.k_stretch, fab.k_shear, g);
            },
            [&](const Positions& p, Positions* g) {
                return stvk_energy(p, cloth.mesh.faces, cloth.rest, fab.lame_mu, fab.lame_lambda, g);
            },
            [&](const Positions& p, Positions* g) {
                return bending_energy(p, cloth.topology, cloth.rest, fab.k_bend, g);
            },
            [&](const Positions& p, Positions* g) {
                return collision_energy(p, body, fab.k_collision, fab.collision_eps, g);
            },
            [&](const Positions& p, Positions* g) { return gravity_energy(p, cloth.masses, g); },
            [&](const Positions& p, Positions* g) { return inertia_energy(p, x1, x2, cloth.masses, dt, g); },
        };
        for (int k = 0; k < 7; ++k) {
            Positions g = Positions::Zero(x.rows(), 3);
            terms[k](x, &g);
            const auto fd = finite_difference([&](const Positions& p) { return terms[k](p, nullptr); }, x);
            worst[k] = std::max(worst[k], relative_error(g, fd));
        }
    }
    for (int k = 0; k < 7; ++k) {
        INFO("term " << k);
        CHECK(worst[k] < 1e-5);
    }
}

TEST_CASE("total loss composition") {
    const ClothModel cloth = swatch_cloth();
    ClothState state;
    state.x = cloth.mesh.vertices;
    state.x.col(1).array() += 0.5;
    const auto r = total_loss(state, nullptr, cloth, {});
    CHECK(r.total == doctest::Approx(r.energies.gravity).epsilon(1e-14));
    CHECK(r.energies.cloth == 0.0);
    CHECK(r.energies.bending == 0.0);

    // Constant-velocity history adds nothing in dynamic mode.
    const Eigen::RowVector3d v(0.01, 0.0, -0.02);
    state.x_prev = state.x;
    state.x_prev->rowwise() -= v;
    state.x_prev2 = state.x;
    state.x_prev2->rowwise() -= 2.0 * v;
    LossOptions dyn;
    dyn.mode = LossMode::Dynamic;
    const auto d = total_loss(state, nullptr, cloth, dyn);
    CHECK(d.total == doctest::Approx(r.total).epsilon(1e-12));
    CHECK(d.energies.inertia == doctest::Approx(0.0).scale(1.0));

    ClothState bare;
    bare.x = state.x;
    CHECK_THROWS_AS(total_loss(bare, nullptr, cloth, dyn), ConfigError);
}

TEST_CASE("total loss gradient matches central differences") {
    const BodyCollider body = drum();
    const ClothModel cloth = swatch_cloth();
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        ClothState s;
        s.x = swatch_over_drum(cloth, rng);
        s.x_prev = test::jitter(s.x, 0.01, rng);
        s.x_prev2 = test::jitter(s.x, 0.01, rng);
        LossOptions opts;
        opts.mode = LossMode::Dynamic;
        const auto r = total_loss(s, &body, cloth, opts);
        const auto fd = finite_difference(
            [&](const Positions& p) {
                ClothState q = s;
                q.x = p;
                LossOptions o = opts;
                o.with_gradient = false;
                return total_loss(q, &body, cloth, o).total;
            },
            s.x);
        CHECK(relative_error(r.gradient, fd) < 1e-5);
        CHECK(r.metrics.collision_pct >= 0.0);
        CHECK(r.metrics.collision_pct <= 100.0);
    }
}

TEST_CASE("rigid translation leaves internal terms unchanged and shifts gravity exactly") {
    const ClothModel cloth = swatch_cloth();
    std::mt19937_64 rng(9);
    const Positions x = test::jitter(cloth.mesh.vertices, 0.01, rng);
    Positions y = x;
    const Eigen::RowVector3d shift(0.2, 0.35, -0.1);
    y.rowwise() += shift;
    const FabricParams& fab = cloth.fabric();
    CHECK(mass_spring_energy(y, cloth.topology, cloth.rest, fab.k_stretch, nullptr) ==
          doctest::Approx(mass_spring_energy(x, cloth.topology, cloth.rest, fab.k_stretch, nullptr)).epsilon(1e-9));
    CHECK(bending_energy(y, cloth.topology, cloth.rest, fab.k_bend, nullptr) ==
          doctest::Approx(bending_energy(x, cloth.topology, cloth.rest, fab.k_bend, nullptr)).epsilon(1e-9));
    CHECK(stvk_energy(y, cloth.mesh.faces, cloth.rest, 10, 20, nullptr) ==
          doctest::Approx(stvk_energy(x, cloth.mesh.faces, cloth.rest, 10, 20, nullptr)).epsilon(1e-9));
    const double dg = gravity_energy(y, cloth.masses, nullptr) - gravity_energy(x, cloth.masses, nullptr);
    CHECK(dg == doctest::Approx(cloth.total_mass * kGravity * 0.35).epsilon(1e-9));
}

TEST_CASE("wrap_angle range") {
    const double pi = std::numbers::pi;
    CHECK(wrap_angle(pi) == doctest::Approx(pi));
    CHECK(wrap_angle(-pi) == doctest::Approx(pi));
    CHECK(wrap_angle(3.0 * pi / 2.0) == doctest::Approx(-pi / 2.0));
    CHECK(wrap_angle(0.25) == 0.25);
}

TEST_CASE("metrics at rest") {
    const ClothModel cloth = swatch_cloth();
    CHECK(strain_metric(cloth.mesh.vertices, cloth) == doctest::Approx(0.0).scale(1.0));
    CHECK(bending_metric(cloth.mesh.vertices, cloth) == 0.0);
    // 1 mm stretch on every edge along x reads as 1 mm mean on those edges.
    Positions x = 1.1 * cloth.mesh.vertices;
    CHECK(strain_metric(x, cloth) > 0.0);
}
