#pragma once

#include "ncs/energy.hpp"
#include "ncs/net.hpp"
#include "ncs/synth.hpp"

#include <algorithm>
#include <functional>
#include <random>

namespace ncs::test {

// Central differences over every coordinate.
inline Positions finite_difference(const std::function<double(const Positions&)>& f, const Positions& x,
                                   double h = 1e-6) {
    Positions g(x.rows(), 3);
    Positions xp = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (int c = 0; c < 3; ++c) {
            const double saved = xp(i, c);
            xp(i, c) = saved + h;
            const double fp = f(xp);
            xp(i, c) = saved - h;
            const double fm = f(xp);
            xp(i, c) = saved;
            g(i, c) = (fp - fm) / (2.0 * h);
        }
    return g;
}

// max |a - b| over max(|a|_inf, |b|_inf); 0 when both vanish.
inline double relative_error(const Positions& a, const Positions& b) {
    const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
    if (scale < 1e-300) return 0.0;
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline Positions jitter(const Positions& x, double amount, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-amount, amount);
    Positions out = x;
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += u(rng);
    return out;
}

// nx * nz swatch with uv, uniform weights on a single joint named "root".
inline GarmentMesh swatch(int nx, int nz, double size, const FabricParams& fabric = {}) {
    ObjData obj = synth::grid(nx, nz, size, size);
    const auto n = obj.vertices.size();
    return make_garment(std::move(obj), std::vector<WeightRow>(n, WeightRow{{"root", 1.0}}), fabric);
}

inline Positions to_positions(const std::vector<Vec3>& v) {
    Positions p(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return p;
}

// Narrow network so tests stay fast.
inline NetDims small_dims(int joints, int vertices) {
    NetDims d;
    d.joints = joints;
    d.vertices = vertices;
    d.latent = 8;
    d.static_hidden = 16;
    d.joint_hidden = 6;
    d.dynamic_hidden = 12;
    d.dynamic_input = 7;
    d.decoder_hidden1 = 10;
    d.decoder_hidden2 = 12;
    return d;
}

// Gives the zero-initialised output layer some weight so outputs move.
inline void randomize_decoder_output(NetParams& p, std::uint64_t seed, double s = 0.01) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-s, s);
    Matrix& w = p.decoder[2].weight.value();
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
}

}  // namespace ncs::test
