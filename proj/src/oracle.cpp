#include "ncs/oracle.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <limits>

namespace ncs {

namespace {

using Vector = Eigen::VectorXd;
using Objective = std::function<double(const Positions&, Positions*)>;

// Pseudo time step used to scale the mass preconditioner of static solves.
constexpr double kStaticPseudoStep = 1.0 / 30.0;
constexpr double kMinStep = 1e-20;

Eigen::Map<Vector> flat(Positions& x) { return {x.data(), x.size()}; }

struct Minimizer {
    Objective f;
    Vector precond;   // per DOF, 0 on pinned DOFs
    const SolverConfig& cfg;
    double max_step;

    SolveResult run(Positions x) const {
        SolveResult out;
        Positions g = Positions::Zero(x.rows(), 3);
        double fx = f(x, &g);
        if (!std::isfinite(fx)) throw SolverError("non-finite objective at the initial guess");
        out.stats.history.push_back(fx);

        std::deque<std::pair<Vector, Vector>> memory;  // (s, y)
        double alpha_prev = max_step;
        int rising = 0;
        for (int it = 0;; ++it) {
            const Vector gm = flat(g).cwiseProduct(mask());
            const double residual = gm.size() ? gm.cwiseAbs().maxCoeff() : 0.0;
            out.stats.residual = residual;
            out.stats.iterations = it;
            if (residual < cfg.tolerance) {
                out.stats.converged = true;
                break;
            }
            if (it >= cfg.max_iterations) break;

            Vector d = direction(gm, memory);
            double slope = gm.dot(d);
            bool lbfgs_step = !memory.empty();
            if (!(slope < 0.0)) {
                d = -precond.cwiseProduct(gm);
                slope = gm.dot(d);
                lbfgs_step = false;
                memory.clear();
            }
            double alpha = lbfgs_step ? 1.0 : std::min(max_step, 2.0 * alpha_prev);
            const double reach = max_vertex_step(d);
            if (alpha * reach > cfg.max_displacement) alpha = cfg.max_displacement / reach;
            Positions x_new = x;
            Positions g_new = Positions::Zero(x.rows(), 3);
            double f_new = 0.0;
            bool accepted = false;
            while (alpha >= kMinStep) {
                flat(x_new) = flat(x) + alpha * d;
                g_new.setZero();
                f_new = f(x_new, &g_new);
                if (std::isfinite(f_new) && f_new <= fx + cfg.armijo_c * alpha * slope) {
                    accepted = true;
                    break;
                }
                alpha *= cfg.shrink;
            }
            if (!accepted) break;  // line search stalled at round-off level
            if (!lbfgs_step) alpha_prev = alpha;

            if (cfg.method == SolverMethod::Lbfgs) {
                Vector s = flat(x_new) - flat(x);
                Vector y = (flat(g_new) - flat(g)).cwiseProduct(mask());
                if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
                    memory.emplace_back(std::move(s), std::move(y));
                    if (static_cast<int>(memory.size()) > cfg.lbfgs_history) memory.pop_front();
                }
            }
            rising = f_new > fx ? rising + 1 : 0;
            if (rising >= cfg.divergence_window)
                throw SolverError("objective increased over " + std::to_string(rising) +
                                  " consecutive steps");
            x.swap(x_new);
            g.swap(g_new);
            fx = f_new;
            out.stats.history.push_back(fx);
        }
        out.stats.objective = fx;
        out.x = std::move(x);
        return out;
    }

    static double max_vertex_step(const Vector& d) {
        double out = 0.0;
        for (Eigen::Index i = 0; i + 2 < d.size(); i += 3) out = std::max(out, d.segment<3>(i).norm());
        return out;
    }

    Vector mask() const {
        Vector m = Vector::Ones(precond.size());
        for (int v : cfg.pinned)
            for (int c = 0; c < 3; ++c) m[3 * v + c] = 0.0;
        return m;
    }

    Vector direction(const Vector& g, const std::deque<std::pair<Vector, Vector>>& memory) const {
        if (memory.empty()) return -precond.cwiseProduct(g);
        const int m = static_cast<int>(memory.size());
        std::vector<double> a(m), rho(m);
        Vector q = g;
        for (int i = m - 1; i >= 0; --i) {
            const auto& [s, y] = memory[i];
            rho[i] = 1.0 / y.dot(s);
            a[i] = rho[i] * s.dot(q);
            q -= a[i] * y;
        }
        const auto& [s_last, y_last] = memory.back();
        const double gamma = s_last.dot(y_last) / y_last.dot(precond.cwiseProduct(y_last));
        Vector r = gamma * precond.cwiseProduct(q);
        for (int i = 0; i < m; ++i) {
            const auto& [s, y] = memory[i];
            const double b = rho[i] * y.dot(r);
            r += (a[i] - b) * s;
        }
        return -r;
    }
};

Vector mass_preconditioner(const ClothModel& cloth, double step, const SolverConfig& cfg) {
    const int n = cloth.num_vertices();
    Vector p(3 * n);
    for (int i = 0; i < n; ++i) {
        const double m = cloth.masses[i];
        p.segment<3>(3 * i).setConstant(m > 0.0 ? step * step / m : 0.0);
    }
    for (int v : cfg.pinned) p.segment<3>(3 * v).setZero();
    return p;
}

void check_pins(const SolverConfig& cfg, int n) {
    for (int v : cfg.pinned)
        if (v < 0 || v >= n) throw ConfigError("pinned vertex " + std::to_string(v) + " out of range");
}

}  // namespace

SolverMethod parse_solver_method(const std::string& name) {
    if (name == "gradient_descent") return SolverMethod::GradientDescent;
    if (name == "lbfgs") return SolverMethod::Lbfgs;
    throw ConfigError("unknown solver method '" + name + "'");
}

void SolverConfig::validate() const {
    if (max_iterations < 0) throw ConfigError("solver.max_iterations must be >= 0");
    if (!(tolerance > 0.0)) throw ConfigError("solver.tolerance must be > 0");
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ConfigError("solver.armijo_c must be in (0, 1)");
    if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("solver.shrink must be in (0, 1)");
    if (divergence_window < 1) throw ConfigError("solver.divergence_window must be >= 1");
    if (lbfgs_history < 1) throw ConfigError("solver.lbfgs_history must be >= 1");
    if (!(max_displacement > 0.0)) throw ConfigError("solver.max_displacement must be > 0");
    if (!(energy_scale >= 0.0)) throw ConfigError("solver.energy_scale must be >= 0");
}

SolveResult minimize_static(const ClothModel& cloth, const BodyCollider* body, Positions x0,
                            const SolverConfig& cfg) {
    cfg.validate();
    check_pins(cfg, cloth.num_vertices());
    if (x0.rows() != cloth.num_vertices()) throw ShapeError("initial guess has the wrong vertex count");
    const Objective f = [&](const Positions& x, Positions* grad) {
        if (cfg.energy_scale == 1.0) return static_energy(x, cloth, body, grad, cfg.gravity);
        Positions g = Positions::Zero(x.rows(), 3);
        const double e = static_energy(x, cloth, body, grad ? &g : nullptr, cfg.gravity);
        if (grad) *grad += cfg.energy_scale * g;
        return cfg.energy_scale * e;
    };
    const Minimizer solver{f, mass_preconditioner(cloth, kStaticPseudoStep, cfg), cfg,
                           std::numeric_limits<double>::max()};
    return solver.run(std::move(x0));
}

double incremental_objective(const Positions& x, const Positions& x_proj, const ClothModel& cloth,
                             const BodyCollider* body, double dt, const SolverConfig& cfg,
                             Positions* grad) {
    const double inv_dt2 = 1.0 / (dt * dt);
    double value = 0.0;
    for (int i = 0; i < static_cast<int>(x.rows()); ++i) {
        const Vec3 dev = (x.row(i) - x_proj.row(i)).transpose();
        value += 0.5 * cloth.masses[i] * inv_dt2 * dev.squaredNorm();
        if (grad) grad->row(i) += (cloth.masses[i] * inv_dt2) * dev.transpose();
    }
    if (cfg.energy_scale == 0.0) return value;
    if (cfg.energy_scale == 1.0) return value + static_energy(x, cloth, body, grad, cfg.gravity);
    Positions g = Positions::Zero(x.rows(), 3);
    const double e = static_energy(x, cloth, body, grad ? &g : nullptr, cfg.gravity);
    if (grad) *grad += cfg.energy_scale * g;
    return value + cfg.energy_scale * e;
}

SolveResult step_dynamic(const ClothModel& cloth, const BodyCollider* body, const Positions& x_prev,
                         const Positions& x_prev2, double dt, const SolverConfig& cfg) {
    cfg.validate();
    if (!(dt > 0.0)) throw ConfigError("time step must be > 0");
    const int n = cloth.num_vertices();
    check_pins(cfg, n);
    if (x_prev.rows() != n || x_prev2.rows() != n) throw ShapeError("history has the wrong vertex count");
    Positions x_proj = 2.0 * x_prev - x_prev2;
    for (int v : cfg.pinned) x_proj.row(v) = x_prev.row(v);
    const Objective f = [&](const Positions& x, Positions* grad) {
        return incremental_objective(x, x_proj, cloth, body, dt, cfg, grad);
    };
    const Minimizer solver{f, mass_preconditioner(cloth, dt, cfg), cfg, 1.0};
    return solver.run(x_proj);
}

DrapeResult drape_static(const Scene& scene, const Pose& pose, const SolverConfig& cfg) {
    const PosedBody posed = pose_body(scene.body, pose);
    DrapeResult out;
    SolveResult solved = minimize_static(scene.cloth, posed.collider.get(), skin_garment(scene, pose), cfg);
    out.stats = std::move(solved.stats);
    out.state.x = std::move(solved.x);
    LossOptions opts;
    opts.gravity_reference = gravity_reference(scene, pose);
    out.report = total_loss(out.state, posed.collider.get(), scene.cloth, opts);
    return out;
}

SimulationResult simulate_sequence(const Scene& scene, const PoseSequence& seq, const SolverConfig& cfg) {
    if (seq.frames.empty()) throw ConfigError("pose sequence is empty");
    const double dt = 1.0 / seq.fps;
    SimulationResult out;
    const int frames = static_cast<int>(seq.frames.size());
    out.states.reserve(frames);
    out.reports.reserve(frames);

    DrapeResult first;
    try {
        first = drape_static(scene, seq.frames[0], cfg);
    } catch (const SolverError& e) {
        throw SolverError(e.what(), 0);
    }
    LossOptions opts;
    opts.dt = dt;
    opts.with_gradient = false;
    for (int t = 0; t < frames; ++t) {
        const PosedBody posed = pose_body(scene.body, seq.frames[t]);
        ClothState state;
        if (t < 2) {
            state.x = first.state.x;
            out.stats.push_back(first.stats);
        } else {
            const Positions& x1 = out.states[t - 1].x;
            const Positions& x2 = out.states[t - 2].x;
            try {
                SolveResult r = step_dynamic(scene.cloth, posed.collider.get(), x1, x2, dt, cfg);
                state.x = std::move(r.x);
                out.stats.push_back(std::move(r.stats));
            } catch (const SolverError& e) {
                throw SolverError(e.what(), t);
            }
        }
        state.x_prev = out.states.empty() ? state.x : out.states[std::max(t - 1, 0)].x;
        state.x_prev2 = out.states.size() < 2 ? *state.x_prev : out.states[t - 2].x;
        opts.gravity_reference = gravity_reference(scene, seq.frames[t]);
        out.reports.push_back(total_loss(state, posed.collider.get(), scene.cloth, opts));
        state.x_prev.reset();
        state.x_prev2.reset();
        out.states.push_back(std::move(state));
    }
    return out;
}

}  // namespace ncs
