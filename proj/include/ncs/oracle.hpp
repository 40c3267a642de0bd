#pragma once

#include "ncs/energy.hpp"
#include "ncs/scene.hpp"

#include <vector>

namespace ncs {

enum class SolverMethod { GradientDescent, Lbfgs };

SolverMethod parse_solver_method(const std::string& name);

struct SolverConfig {
    SolverMethod method = SolverMethod::Lbfgs;
    int max_iterations = 2000;
    double tolerance = 1e-6;       // N, infinity norm of the force residual
    double armijo_c = 1e-4;
    double shrink = 0.5;
    int divergence_window = 50;
    int lbfgs_history = 10;
    double max_displacement = 0.01;  // m, per vertex per iteration; keeps steps from tunnelling
    bool gravity = true;
    double energy_scale = 1.0;     // 0 switches the potential off (pure inertia)
    std::vector<int> pinned;       // vertices held at their starting position

    void validate() const;
};

struct SolveStats {
    int iterations = 0;
    double objective = 0.0;
    double residual = 0.0;   // N
    bool converged = false;
    std::vector<double> history;  // objective after every accepted step, starting value first
};

struct SolveResult {
    Positions x;
    SolveStats stats;
};

// Minimizes E(x) from x0.
SolveResult minimize_static(const ClothModel& cloth, const BodyCollider* body, Positions x0,
                            const SolverConfig& cfg);

// Minimizes h(x) = 1/2 (x - x_proj)^T M (x - x_proj) + dt^2 E(x), x_proj = 2 x_prev - x_prev2,
// starting from x_proj.
SolveResult step_dynamic(const ClothModel& cloth, const BodyCollider* body, const Positions& x_prev,
                         const Positions& x_prev2, double dt, const SolverConfig& cfg);

// h(x) divided by dt^2, in joules. The force residual is added into grad (optional).
double incremental_objective(const Positions& x, const Positions& x_proj, const ClothModel& cloth,
                             const BodyCollider* body, double dt, const SolverConfig& cfg,
                             Positions* grad);

struct DrapeResult {
    ClothState state;
    EnergyReport report;
    SolveStats stats;
};

// Skins the garment to the pose and relaxes it against the posed body.
DrapeResult drape_static(const Scene& scene, const Pose& pose, const SolverConfig& cfg);

struct SimulationResult {
    std::vector<ClothState> states;
    std::vector<EnergyReport> reports;
    std::vector<SolveStats> stats;
};

// The sequence must already be sampled at the simulation rate. Frames 0 and 1 are the
// static drape of frame 0; SolverError carries the failing frame index.
SimulationResult simulate_sequence(const Scene& scene, const PoseSequence& seq, const SolverConfig& cfg);

}  // namespace ncs
