#pragma once

#include "ncs/train.hpp"

#include <optional>
#include <vector>

namespace ncs::test {

// All parameter gradients of params, concatenated in named order; empty slots count as zeros.
inline std::vector<double> gradient_vector(const NetParams& params) {
    std::vector<double> out;
    for (const auto& t : params.parameters()) {
        const Matrix& g = t.node()->grad;
        for (Eigen::Index i = 0; i < t.value().size(); ++i) out.push_back(g.size() ? g.data()[i] : 0.0);
    }
    return out;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_abs(const std::vector<double>& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

// Parameter gradients of the inertia loss alone. With a history network the
// x_{t-1}, x_{t-2} predictions come from it instead, so nothing on those paths
// can reach params.
inline std::vector<double> inertia_gradients(const NetParams& params, const TrainingBatch& batch,
                                             const Scene& scene, double dt, bool stop_history,
                                             const NetParams* history_params = nullptr) {
    params.zero_grad();
    const Positions& rest = scene.cloth.mesh.vertices;
    const Triple tri = decode_triple(params, rest, batch.windows, {stop_history});
    ad::Tensor x_prev = tri.x_prev, x_prev2 = tri.x_prev2;
    std::optional<Triple> hist;
    if (history_params) {
        hist = decode_triple(*history_params, rest, batch.windows, {false});
        x_prev = hist->x_prev;
        x_prev2 = hist->x_prev2;
    }
    std::vector<ItemTerms> items(batch.windows.batch(), ItemTerms{nullptr, 0.0, false, true});
    ad::backward(batch_loss(tri.x_t, x_prev, x_prev2, items, scene.cloth, dt));
    return gradient_vector(params);
}

struct StopGradientProbe {
    double frozen_diff = 0.0;    // standard triple vs history from a frozen copy
    double unstopped_diff = 0.0; // standard triple vs history left in the graph
    double scale = 0.0;          // max |gradient| of the standard triple
};

inline StopGradientProbe probe_stop_gradient(const NetParams& params, const TrainingBatch& batch,
                                             const Scene& scene, double dt) {
    const NetParams frozen = params.clone();
    const auto standard = inertia_gradients(params, batch, scene, dt, true);
    const auto reference = inertia_gradients(params, batch, scene, dt, false, &frozen);
    const auto unstopped = inertia_gradients(params, batch, scene, dt, false);
    return {max_abs_diff(standard, reference), max_abs_diff(standard, unstopped), max_abs(standard)};
}

}  // namespace ncs::test
