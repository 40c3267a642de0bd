#pragma once

#include "ncs/body.hpp"
#include "ncs/common.hpp"
#include "ncs/mesh.hpp"

#include <optional>
#include <vector>

namespace ncs {

// Everything about the garment that stays fixed while it moves.
struct ClothModel {
    GarmentMesh mesh;
    Topology topology;
    RestState rest;
    std::vector<double> masses;
    double total_mass = 0.0;

    static ClothModel build(GarmentMesh mesh);
    int num_vertices() const { return mesh.num_vertices(); }
    const FabricParams& fabric() const { return mesh.fabric; }
};

struct ClothState {
    Positions x;
    std::optional<Positions> x_prev;   // x_{t-1}
    std::optional<Positions> x_prev2;  // x_{t-2}
};

struct TermResult {
    double energy = 0.0;
    Positions gradient;
};

// The accumulate form adds the term's gradient into *grad (when non-null) and
// returns the energy. The TermResult form is a convenience wrapper.
double mass_spring_energy(const Positions& x, const Topology& topo, const RestState& rest, double k,
                          Positions* grad);
double baraff_witkin_sq_energy(const Positions& x, const std::vector<Face>& faces,
                               const RestState& rest, double k_stretch, double k_shear,
                               Positions* grad);
double stvk_energy(const Positions& x, const std::vector<Face>& faces, const RestState& rest,
                   double mu, double lambda, Positions* grad);
// skipped (optional) counts dihedrals ignored because a face collapsed.
double bending_energy(const Positions& x, const Topology& topo, const RestState& rest, double k_b,
                      Positions* grad, int* skipped = nullptr);
// inside_pct (optional) receives the percentage of vertices with d < 0.
double collision_energy(const Positions& x, const BodyCollider& body, double k_c, double eps,
                        Positions* grad, double* inside_pct = nullptr);
double gravity_energy(const Positions& x, const std::vector<double>& masses, Positions* grad);
// Gradient is taken with respect to x_t only; the history is constant.
double inertia_energy(const Positions& x_t, const Positions& x_prev, const Positions& x_prev2,
                      const std::vector<double>& masses, double dt, Positions* grad);

TermResult e_mass_spring(const Positions& x, const ClothModel& cloth, double k_stretch);
TermResult e_baraff_witkin_sq(const Positions& x, const ClothModel& cloth, double k_stretch,
                              double k_shear);
TermResult e_stvk(const Positions& x, const ClothModel& cloth, double mu, double lambda);
TermResult e_bending(const Positions& x, const ClothModel& cloth, double k_b);
TermResult e_collision(const Positions& x, const BodyCollider& body, double k_c, double eps,
                       double* inside_pct = nullptr);
TermResult e_gravity(const Positions& x, const std::vector<double>& masses);
TermResult e_inertia(const Positions& x_t, const Positions& x_prev, const Positions& x_prev2,
                     const std::vector<double>& masses, double dt);

// Material term selected by the fabric's model.
double cloth_energy(const Positions& x, const ClothModel& cloth, Positions* grad);

// cloth + bending + collision (when body is non-null) + gravity (when enabled).
double static_energy(const Positions& x, const ClothModel& cloth, const BodyCollider* body,
                     Positions* grad, bool gravity = true);

// Mean |len - rest| in mm for mass-spring; mean principal-stretch deviation x1000
// for the continuum models.
double strain_metric(const Positions& x, const ClothModel& cloth);
// Mean |phi - phi_rest| in radians.
double bending_metric(const Positions& x, const ClothModel& cloth);

enum class LossMode { Static, Dynamic };

struct TermEnergies {
    double cloth = 0.0, bending = 0.0, collision = 0.0, gravity = 0.0, inertia = 0.0;
};

struct Metrics {
    double strain = 0.0;         // mm or x1000 stretch
    double bending = 0.0;        // rad
    double collision_pct = 0.0;  // % of vertices inside the body
    double gravity = 0.0;        // J/kg relative to the reference configuration
    double inertia = 0.0;        // inertia energy value

    Metrics& operator+=(const Metrics& o);
    Metrics operator/(double s) const;
};

struct EnergyReport {
    TermEnergies energies;
    double total = 0.0;
    Positions gradient;   // d total / d x_t
    Metrics metrics;
    int skipped_bending = 0;
};

struct LossOptions {
    LossMode mode = LossMode::Static;
    double dt = 1.0 / 30.0;
    // Gravity energy of the reference configuration; the gravity metric is
    // (E_gravity - reference) / total mass. Zero when unset.
    double gravity_reference = 0.0;
    bool with_gradient = true;
};

// body may be null (no collider). Dynamic mode needs state.x_prev and state.x_prev2.
EnergyReport total_loss(const ClothState& state, const BodyCollider* body, const ClothModel& cloth,
                        const LossOptions& options);

// Wraps a dihedral deviation into (-pi, pi].
double wrap_angle(double a);

}  // namespace ncs
