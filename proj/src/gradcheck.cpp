#include "ncs/gradcheck.hpp"

#include "ncs/energy.hpp"
#include "ncs/synth.hpp"

#include <algorithm>
#include <functional>
#include <random>

namespace ncs {

namespace {

Positions to_positions(const std::vector<Vec3>& v) {
    Positions p(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return p;
}

Positions jitter(const Positions& x, double amount, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-amount, amount);
    Positions out = x;
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += u(rng);
    return out;
}

double relative_error(const Positions& a, const Positions& b) {
    const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
    return scale < 1e-300 ? 0.0 : (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

double GradcheckReport::worst() const { return *std::max_element(max_rel_error.begin(), max_rel_error.end()); }

GradcheckReport gradient_check(std::uint64_t seed, int configurations, double h) {
    ObjData grid = synth::grid(5, 5, 0.1, 0.1);
    const auto n = grid.vertices.size();
    const ClothModel cloth = ClothModel::build(
        make_garment(std::move(grid), std::vector<WeightRow>(n, WeightRow{{"root", 1.0}}), {}));
    const ObjData drum = synth::capped_cylinder(24, 5, 0.1, 0.4);
    const BodyCollider body(to_positions(drum.vertices), drum.faces);
    const FabricParams& fab = cloth.fabric();
    const double dt = 1.0 / 30.0;
    std::mt19937_64 rng(seed);

    GradcheckReport report;
    report.configurations = configurations;
    report.vertices = cloth.num_vertices();
    for (int c = 0; c < configurations; ++c) {
        // Across the top of the cylinder, jittered so some vertices penetrate.
        Positions x = cloth.mesh.vertices;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            x(i, 0) -= 0.05;
            x(i, 2) -= 0.05;
            x(i, 1) = 0.102;
        }
        x = jitter(x, 0.006, rng);
        const Positions x1 = jitter(x, 0.01, rng), x2 = jitter(x, 0.01, rng);
        const std::array<std::function<double(const Positions&, Positions*)>, kEnergyTerms> terms = {
            [&](const Positions& p, Positions* g) {
                return mass_spring_energy(p, cloth.topology, cloth.rest, fab.k_stretch, g);
            },
            [&](const Positions& p, Positions* g) {
                return baraff_witkin_sq_energy(p, cloth.mesh.faces, cloth.rest, fab.k_stretch, fab.k_shear, g);
            },
            [&](const Positions& p, Positions* g) {
                return stvk_energy(p, cloth.mesh.faces, cloth.rest, fab.lame_mu, fab.lame_lambda, g);
            },
            [&](const Positions& p, Positions* g) { return bending_energy(p, cloth.topology, cloth.rest, fab.k_bend, g); },
            [&](const Positions& p, Positions* g) {
                return collision_energy(p, body, fab.k_collision, fab.collision_eps, g);
            },
            [&](const Positions& p, Positions* g) { return gravity_energy(p, cloth.masses, g); },
            [&](const Positions& p, Positions* g) { return inertia_energy(p, x1, x2, cloth.masses, dt, g); },
        };
        for (int k = 0; k < kEnergyTerms; ++k) {
            Positions g = Positions::Zero(x.rows(), 3);
            terms[k](x, &g);
            Positions fd(x.rows(), 3);
            Positions xp = x;
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                const double saved = xp.data()[i];
                xp.data()[i] = saved + h;
                const double fp = terms[k](xp, nullptr);
                xp.data()[i] = saved - h;
                const double fm = terms[k](xp, nullptr);
                xp.data()[i] = saved;
                fd.data()[i] = (fp - fm) / (2.0 * h);
            }
            report.max_rel_error[k] = std::max(report.max_rel_error[k], relative_error(g, fd));
        }
    }
    return report;
}

}  // namespace ncs
