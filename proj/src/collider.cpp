#include "ncs/body.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace ncs {

namespace {

constexpr int kLeafSize = 4;

double corner_angle(const Vec3& at, const Vec3& p, const Vec3& q) {
    const Vec3 u = p - at, v = q - at;
    return std::atan2(u.cross(v).norm(), u.dot(v));
}

}  // namespace

// Region classification follows the Voronoi-region walk of Ericson,
// Real-Time Collision Detection, 5.1.5.
SurfacePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    SurfacePoint sp;
    auto done = [&](const Vec3& point, Feature f, int local) {
        sp.point = point;
        sp.feature = f;
        sp.local = local;
        sp.dist_sq = (p - point).squaredNorm();
        return sp;
    };
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return done(a, Feature::Vertex, 0);

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return done(b, Feature::Vertex, 1);

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return done(a + v * ab, Feature::Edge, 0);
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return done(c, Feature::Vertex, 2);

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return done(a + w * ac, Feature::Edge, 2);
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return done(b + w * (c - b), Feature::Edge, 1);
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return done(a + ab * v + ac * w, Feature::Face, 0);
}

BodyCollider::BodyCollider(Positions vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
    const int nf = static_cast<int>(faces_.size());
    const auto nv = vertices_.rows();
    auto vtx = [&](int i) -> Vec3 { return vertices_.row(i).transpose(); };

    face_normals_.resize(nf);
    vertex_normals_ = Positions::Zero(nv, 3);
    for (int f = 0; f < nf; ++f) {
        const auto& tri = faces_[f];
        const Vec3 a = vtx(tri[0]), b = vtx(tri[1]), c = vtx(tri[2]);
        const Vec3 n = (b - a).cross(c - a);
        const double len = n.norm();
        face_normals_[f] = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
        const double angles[3] = {corner_angle(a, b, c), corner_angle(b, c, a), corner_angle(c, a, b)};
        for (int k = 0; k < 3; ++k)
            vertex_normals_.row(tri[k]) += angles[k] * face_normals_[f].transpose();
    }
    for (Eigen::Index i = 0; i < nv; ++i) {
        const double len = vertex_normals_.row(i).norm();
        if (len > 0.0) vertex_normals_.row(i) /= len;
    }

    std::map<std::pair<int, int>, Vec3> edge_sum;
    for (int f = 0; f < nf; ++f)
        for (int k = 0; k < 3; ++k) {
            const auto key = std::minmax(faces_[f][k], faces_[f][(k + 1) % 3]);
            auto [it, inserted] = edge_sum.try_emplace({key.first, key.second}, Vec3::Zero());
            it->second += face_normals_[f];
        }
    edge_normals_.resize(nf);
    for (int f = 0; f < nf; ++f)
        for (int k = 0; k < 3; ++k) {
            const auto key = std::minmax(faces_[f][k], faces_[f][(k + 1) % 3]);
            const Vec3& s = edge_sum.at({key.first, key.second});
            const double len = s.norm();
            edge_normals_[f][k] = len > 0.0 ? Vec3(s / len) : face_normals_[f];
        }

    centroids_.resize(nf);
    for (int f = 0; f < nf; ++f)
        centroids_[f] = (vtx(faces_[f][0]) + vtx(faces_[f][1]) + vtx(faces_[f][2])) / 3.0;
    order_.resize(nf);
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * static_cast<std::size_t>(nf) / kLeafSize + 2);
    if (nf > 0) build(0, nf);
}

int BodyCollider::build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    Eigen::AlignedBox3d box;
    Eigen::AlignedBox3d centroid_box;
    for (int i = begin; i < end; ++i) {
        for (int idx : faces_[order_[i]]) box.extend(Vec3(vertices_.row(idx).transpose()));
        centroid_box.extend(centroids_[order_[i]]);
    }
    nodes_[id].box = box;
    if (end - begin <= kLeafSize) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    int axis = 0;
    centroid_box.sizes().maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                         if (centroids_[a][axis] != centroids_[b][axis])
                             return centroids_[a][axis] < centroids_[b][axis];
                         return a < b;
                     });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

Vec3 BodyCollider::pseudo_normal(const SurfacePoint& sp) const {
    switch (sp.feature) {
        case Feature::Face: return face_normals_[sp.face];
        case Feature::Edge: return edge_normals_[sp.face][sp.local];
        case Feature::Vertex: return vertex_normals_.row(faces_[sp.face][sp.local]).transpose();
    }
    return face_normals_[sp.face];
}

SignedDistance BodyCollider::finish(const Vec3& p, const SurfacePoint& sp) const {
    SignedDistance out;
    out.closest = sp.point;
    out.normal = pseudo_normal(sp);
    const Vec3 diff = p - sp.point;
    const double dist = std::sqrt(sp.dist_sq);
    const double sign = diff.dot(out.normal) >= 0.0 ? 1.0 : -1.0;
    out.distance = sign * dist;
    out.gradient = dist > 1e-12 ? Vec3(sign * diff / dist) : out.normal;
    return out;
}

SignedDistance BodyCollider::query_brute_force(const Vec3& p) const {
    if (faces_.empty()) throw ConfigError("signed distance query against an empty body mesh");
    SurfacePoint best;
    best.dist_sq = std::numeric_limits<double>::infinity();
    for (int f = 0; f < static_cast<int>(faces_.size()); ++f) {
        const auto& tri = faces_[f];
        SurfacePoint sp = closest_point_on_triangle(p, vertices_.row(tri[0]).transpose(),
                                                    vertices_.row(tri[1]).transpose(),
                                                    vertices_.row(tri[2]).transpose());
        if (sp.dist_sq < best.dist_sq) {
            sp.face = f;
            best = sp;
        }
    }
    return finish(p, best);
}

SignedDistance BodyCollider::query(const Vec3& p) const {
    if (faces_.empty()) throw ConfigError("signed distance query against an empty body mesh");
    SurfacePoint best;
    best.dist_sq = std::numeric_limits<double>::infinity();
    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[stack[--top]];
        if (node.box.squaredExteriorDistance(p) > best.dist_sq) continue;
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int f = order_[i];
                const auto& tri = faces_[f];
                SurfacePoint sp = closest_point_on_triangle(p, vertices_.row(tri[0]).transpose(),
                                                            vertices_.row(tri[1]).transpose(),
                                                            vertices_.row(tri[2]).transpose());
                if (sp.dist_sq < best.dist_sq || (sp.dist_sq == best.dist_sq && f < best.face)) {
                    sp.face = f;
                    best = sp;
                }
            }
            continue;
        }
        // Visit the nearer child first.
        const double dl = nodes_[node.left].box.squaredExteriorDistance(p);
        const double dr = nodes_[node.right].box.squaredExteriorDistance(p);
        if (dl < dr) {
            stack[top++] = node.right;
            stack[top++] = node.left;
        } else {
            stack[top++] = node.left;
            stack[top++] = node.right;
        }
    }
    return finish(p, best);
}

double signed_distance(const Vec3& p, const BodyCollider& body) { return body.query(p).distance; }

}  // namespace ncs
