#include "ncs/energy.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

namespace ncs {

namespace {

inline Vec3 row(const Positions& x, int i) { return x.row(i).transpose(); }

inline void add_row(Positions* grad, int i, const Vec3& g) {
    if (grad) grad->row(i) += g.transpose();
}

Positions zeros_like(const Positions& x) { return Positions::Zero(x.rows(), 3); }

using Mat32 = Eigen::Matrix<double, 3, 2>;

Mat32 edge_matrix(const Positions& x, const Face& f) {
    Mat32 ds;
    ds.col(0) = row(x, f[1]) - row(x, f[0]);
    ds.col(1) = row(x, f[2]) - row(x, f[0]);
    return ds;
}

// Green strain 1/2 (F^T F - I), evaluated as 1/2 Dm^-T (Ds^T Ds - Dm^T Dm) Dm^-1 so it
// is exactly zero at rest.
Mat2 green_strain(const Mat32& ds, const Mat2& dm_inv, const Mat2& metric) {
    return 0.5 * dm_inv.transpose() * (ds.transpose() * ds - metric) * dm_inv;
}

// Scatters dE/dF back onto the three face vertices.
void scatter_face_gradient(Positions* grad, const Face& f, const Mat32& dE_dF, const Mat2& dm_inv) {
    if (!grad) return;
    const Mat32 g = dE_dF * dm_inv.transpose();
    add_row(grad, f[1], g.col(0));
    add_row(grad, f[2], g.col(1));
    add_row(grad, f[0], -(g.col(0) + g.col(1)));
}

}  // namespace

double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a > std::numbers::pi) a -= two_pi;
    if (a <= -std::numbers::pi) a += two_pi;
    return a;
}

ClothModel ClothModel::build(GarmentMesh mesh) {
    ClothModel c;
    c.topology = build_topology(mesh);
    c.rest = compute_rest_state(mesh, c.topology);
    c.masses = lump_masses(mesh);
    c.total_mass = 0.0;
    for (double m : c.masses) c.total_mass += m;
    c.mesh = std::move(mesh);
    return c;
}

double mass_spring_energy(const Positions& x, const Topology& topo, const RestState& rest, double k,
                          Positions* grad) {
    double energy = 0.0;
    for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        const auto [i, j] = topo.edges[e];
        const Vec3 d = row(x, i) - row(x, j);
        const double len = d.norm();
        const double stretch = len - rest.edge_lengths[e];
        energy += 0.5 * k * stretch * stretch;
        if (grad && len > 0.0) {
            const Vec3 g = (k * stretch / len) * d;
            add_row(grad, i, g);
            add_row(grad, j, -g);
        }
    }
    return energy;
}

double baraff_witkin_sq_energy(const Positions& x, const std::vector<Face>& faces,
                               const RestState& rest, double k_stretch, double k_shear,
                               Positions* grad) {
    double energy = 0.0;
    for (std::size_t fi = 0; fi < faces.size(); ++fi) {
        const double a = rest.material_areas[fi];
        const Mat2& dm_inv = rest.uv_frames[fi];
        const Mat32 ds = edge_matrix(x, faces[fi]);
        // C = F^T F: squared lengths of w_u, w_v on the diagonal, w_u . w_v off it.
        const Mat2 c = Mat2::Identity() + 2.0 * green_strain(ds, dm_inv, rest.material_metrics[fi]);
        const double lu = std::sqrt(std::max(c(0, 0), 0.0)), lv = std::sqrt(std::max(c(1, 1), 0.0));
        const double su = lu - 1.0, sv = lv - 1.0;
        const double shear = c(0, 1);
        energy += 0.5 * k_stretch * a * (su * su + sv * sv) + 0.5 * k_shear * a * shear * shear;
        if (!grad) continue;
        Mat2 de_dc;
        de_dc(0, 0) = lu > 0.0 ? 0.5 * k_stretch * a * su / lu : 0.0;
        de_dc(1, 1) = lv > 0.0 ? 0.5 * k_stretch * a * sv / lv : 0.0;
        de_dc(0, 1) = de_dc(1, 0) = 0.5 * k_shear * a * shear;
        scatter_face_gradient(grad, faces[fi], 2.0 * (ds * dm_inv) * de_dc, dm_inv);
    }
    return energy;
}

double stvk_energy(const Positions& x, const std::vector<Face>& faces, const RestState& rest,
                   double mu, double lambda, Positions* grad) {
    double energy = 0.0;
    for (std::size_t fi = 0; fi < faces.size(); ++fi) {
        const double a = rest.material_areas[fi];
        const Mat2& dm_inv = rest.uv_frames[fi];
        const Mat32 ds = edge_matrix(x, faces[fi]);
        const Mat2 green = green_strain(ds, dm_inv, rest.material_metrics[fi]);
        const double tr = green.trace();
        energy += a * (mu * green.squaredNorm() + 0.5 * lambda * tr * tr);
        if (!grad) continue;
        const Mat2 pk2 = 2.0 * mu * green + lambda * tr * Mat2::Identity();
        scatter_face_gradient(grad, faces[fi], a * (ds * dm_inv) * pk2, dm_inv);
    }
    return energy;
}

double bending_energy(const Positions& x, const Topology& topo, const RestState& rest, double k_b,
                      Positions* grad, int* skipped) {
    constexpr double branch_guard = std::numbers::pi - 1e-3;
    double energy = 0.0;
    int skip = 0;
    for (std::size_t di = 0; di < topo.dihedrals.size(); ++di) {
        const Dihedral& d = topo.dihedrals[di];
        const Vec3 x0 = row(x, d.v0), x1 = row(x, d.v1), xa = row(x, d.opp_a), xb = row(x, d.opp_b);
        const Vec3 e = x1 - x0;
        const Vec3 na = e.cross(xa - x0);
        const Vec3 nb = (xb - x0).cross(e);
        const double na2 = na.squaredNorm(), nb2 = nb.squaredNorm();
        if (0.5 * std::sqrt(na2) < kDegenerateArea || 0.5 * std::sqrt(nb2) < kDegenerateArea) {
            ++skip;
            continue;
        }
        const double l = e.norm();
        const double phi = std::atan2(na.cross(nb).dot(e) / l, na.dot(nb));
        const double diff = wrap_angle(phi - rest.rest_dihedrals[di]);
        const double scale = k_b * rest.dihedral_scale[di];
        energy += scale * diff * diff;
        if (!grad || std::abs(diff) > branch_guard) continue;

        const double coeff = 2.0 * scale * diff;
        const Vec3 dphi_a = -l * na / na2;
        const Vec3 dphi_b = -l * nb / nb2;
        const double ta = (xa - x0).dot(e) / (l * l);
        const double tb = (xb - x0).dot(e) / (l * l);
        add_row(grad, d.opp_a, coeff * dphi_a);
        add_row(grad, d.opp_b, coeff * dphi_b);
        add_row(grad, d.v0, coeff * (-(1.0 - ta) * dphi_a - (1.0 - tb) * dphi_b));
        add_row(grad, d.v1, coeff * (-ta * dphi_a - tb * dphi_b));
    }
    if (skipped) *skipped = skip;
    return energy;
}

double collision_energy(const Positions& x, const BodyCollider& body, double k_c, double eps,
                        Positions* grad, double* inside_pct) {
    double energy = 0.0;
    int inside = 0;
    const int n = static_cast<int>(x.rows());
    for (int i = 0; i < n; ++i) {
        const SignedDistance sd = body.query(row(x, i));
        if (sd.distance < 0.0) ++inside;
        const double pen = std::min(sd.distance - eps, 0.0);
        if (pen == 0.0) continue;
        energy += k_c * pen * pen;
        add_row(grad, i, (2.0 * k_c * pen) * sd.gradient);
    }
    if (inside_pct) *inside_pct = n > 0 ? 100.0 * inside / n : 0.0;
    return energy;
}

double gravity_energy(const Positions& x, const std::vector<double>& masses, Positions* grad) {
    double energy = 0.0;
    for (int i = 0; i < static_cast<int>(x.rows()); ++i) {
        energy -= masses[i] * row(x, i).dot(kGravityVector);
        add_row(grad, i, -masses[i] * kGravityVector);
    }
    return energy;
}

double inertia_energy(const Positions& x_t, const Positions& x_prev, const Positions& x_prev2,
                      const std::vector<double>& masses, double dt, Positions* grad) {
    if (!(dt > 0.0)) throw ConfigError("inertia time step must be > 0");
    const double inv_dt2 = 1.0 / (dt * dt);
    double energy = 0.0;
    for (int i = 0; i < static_cast<int>(x_t.rows()); ++i) {
        const Vec3 dev = row(x_t, i) - (2.0 * row(x_prev, i) - row(x_prev2, i));
        energy += 0.5 * masses[i] * inv_dt2 * dev.squaredNorm();
        add_row(grad, i, masses[i] * inv_dt2 * dev);
    }
    return energy;
}

TermResult e_mass_spring(const Positions& x, const ClothModel& cloth, double k_stretch) {
    TermResult r{0.0, zeros_like(x)};
    r.energy = mass_spring_energy(x, cloth.topology, cloth.rest, k_stretch, &r.gradient);
    return r;
}

TermResult e_baraff_witkin_sq(const Positions& x, const ClothModel& cloth, double k_stretch,
                              double k_shear) {
    TermResult r{0.0, zeros_like(x)};
    r.energy = baraff_witkin_sq_energy(x, cloth.mesh.faces, cloth.rest, k_stretch, k_shear, &r.gradient);
    return r;
}

TermResult e_stvk(const Positions& x, const ClothModel& cloth, double mu, double lambda) {
    TermResult r{0.0, zeros_like(x)};
    r.energy = stvk_energy(x, cloth.mesh.faces, cloth.rest, mu, lambda, &r.gradient);
    return r;
}

TermResult e_bending(const Positions& x, const ClothModel& cloth, double k_b) {
    TermResult r{0.0, zeros_like(x)};
    r.energy = bending_energy(x, cloth.topology, cloth.rest, k_b, &r.gradient);
    return r;
}

TermResult e_collision(const Positions& x, const BodyCollider& body, double k_c, double eps,
                       double* inside_pct) {
    TermResult r{0.0, zeros_like(x)};
    r.energy = collision_energy(x, body, k_c, eps, &r.gradient, inside_pct);
    return r;
}

TermResult e_gravity(const Positions& x, const std::vector<double>& masses) {
    TermResult r{0.0, zeros_like(x)};
    r.energy = gravity_energy(x, masses, &r.gradient);
    return r;
}

TermResult e_inertia(const Positions& x_t, const Positions& x_prev, const Positions& x_prev2,
                     const std::vector<double>& masses, double dt) {
    TermResult r{0.0, zeros_like(x_t)};
    r.energy = inertia_energy(x_t, x_prev, x_prev2, masses, dt, &r.gradient);
    return r;
}

double cloth_energy(const Positions& x, const ClothModel& cloth, Positions* grad) {
    const FabricParams& fab = cloth.fabric();
    switch (fab.material) {
        case MaterialModel::MassSpring:
            return mass_spring_energy(x, cloth.topology, cloth.rest, fab.k_stretch, grad);
        case MaterialModel::BaraffWitkinSq:
            return baraff_witkin_sq_energy(x, cloth.mesh.faces, cloth.rest, fab.k_stretch,
                                           fab.k_shear, grad);
        case MaterialModel::StVK:
            return stvk_energy(x, cloth.mesh.faces, cloth.rest, fab.lame_mu, fab.lame_lambda, grad);
    }
    return 0.0;
}

double static_energy(const Positions& x, const ClothModel& cloth, const BodyCollider* body,
                     Positions* grad, bool gravity) {
    const FabricParams& fab = cloth.fabric();
    double e = cloth_energy(x, cloth, grad);
    e += bending_energy(x, cloth.topology, cloth.rest, fab.k_bend, grad);
    if (body && !body->empty())
        e += collision_energy(x, *body, fab.k_collision, fab.collision_eps, grad);
    if (gravity) e += gravity_energy(x, cloth.masses, grad);
    return e;
}

double strain_metric(const Positions& x, const ClothModel& cloth) {
    if (cloth.fabric().material == MaterialModel::MassSpring) {
        const auto& edges = cloth.topology.edges;
        if (edges.empty()) return 0.0;
        double sum = 0.0;
        for (std::size_t e = 0; e < edges.size(); ++e)
            sum += std::abs((row(x, edges[e][0]) - row(x, edges[e][1])).norm() -
                            cloth.rest.edge_lengths[e]);
        return 1000.0 * sum / static_cast<double>(edges.size());
    }
    const auto& faces = cloth.mesh.faces;
    if (faces.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t fi = 0; fi < faces.size(); ++fi) {
        const Mat2 c = Mat2::Identity() + 2.0 * green_strain(edge_matrix(x, faces[fi]), cloth.rest.uv_frames[fi],
                                                             cloth.rest.material_metrics[fi]);
        const Eigen::SelfAdjointEigenSolver<Mat2> eig(c, Eigen::EigenvaluesOnly);
        const Vec2 stretches = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        sum += 0.5 * (std::abs(stretches[0] - 1.0) + std::abs(stretches[1] - 1.0));
    }
    return 1000.0 * sum / static_cast<double>(faces.size());
}

double bending_metric(const Positions& x, const ClothModel& cloth) {
    const auto& dihedrals = cloth.topology.dihedrals;
    if (dihedrals.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t di = 0; di < dihedrals.size(); ++di) {
        const Dihedral& d = dihedrals[di];
        const double phi = signed_dihedral(row(x, d.v0), row(x, d.v1), row(x, d.opp_a), row(x, d.opp_b));
        sum += std::abs(wrap_angle(phi - cloth.rest.rest_dihedrals[di]));
    }
    return sum / static_cast<double>(dihedrals.size());
}

Metrics& Metrics::operator+=(const Metrics& o) {
    strain += o.strain;
    bending += o.bending;
    collision_pct += o.collision_pct;
    gravity += o.gravity;
    inertia += o.inertia;
    return *this;
}

Metrics Metrics::operator/(double s) const {
    return {strain / s, bending / s, collision_pct / s, gravity / s, inertia / s};
}

EnergyReport total_loss(const ClothState& state, const BodyCollider* body, const ClothModel& cloth,
                        const LossOptions& options) {
    const Positions& x = state.x;
    if (x.rows() != cloth.num_vertices())
        throw ShapeError("cloth state has " + std::to_string(x.rows()) + " vertices, garment has " +
                         std::to_string(cloth.num_vertices()));
    const FabricParams& fab = cloth.fabric();
    EnergyReport report;
    report.gradient = zeros_like(x);
    Positions* grad = options.with_gradient ? &report.gradient : nullptr;

    report.energies.cloth = cloth_energy(x, cloth, grad);
    report.energies.bending =
        bending_energy(x, cloth.topology, cloth.rest, fab.k_bend, grad, &report.skipped_bending);
    if (body && !body->empty())
        report.energies.collision = collision_energy(x, *body, fab.k_collision, fab.collision_eps, grad,
                                                     &report.metrics.collision_pct);
    report.energies.gravity = gravity_energy(x, cloth.masses, grad);

    const bool have_history = state.x_prev && state.x_prev2;
    if (options.mode == LossMode::Dynamic) {
        if (!have_history) throw ConfigError("dynamic loss needs x_{t-1} and x_{t-2}");
        report.energies.inertia =
            inertia_energy(x, *state.x_prev, *state.x_prev2, cloth.masses, options.dt, grad);
        report.metrics.inertia = report.energies.inertia;
    } else if (have_history) {
        report.metrics.inertia =
            inertia_energy(x, *state.x_prev, *state.x_prev2, cloth.masses, options.dt, nullptr);
    }

    const TermEnergies& e = report.energies;
    report.total = e.cloth + e.bending + e.collision + e.gravity +
                   (options.mode == LossMode::Dynamic ? e.inertia : 0.0);
    report.metrics.strain = strain_metric(x, cloth);
    report.metrics.bending = bending_metric(x, cloth);
    report.metrics.gravity =
        cloth.total_mass > 0.0 ? (e.gravity - options.gravity_reference) / cloth.total_mass : 0.0;
    if (!std::isfinite(report.total)) {
        const std::pair<const char*, double> terms[] = {{"cloth", e.cloth},         {"bending", e.bending},
                                                        {"collision", e.collision}, {"gravity", e.gravity},
                                                        {"inertia", e.inertia}};
        for (const auto& [name, value] : terms)
            if (!std::isfinite(value)) throw NumericsError(std::string("non-finite ") + name + " energy");
        throw NumericsError("non-finite total energy");
    }
    return report;
}

}  // namespace ncs
