#include "ncs/mesh.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace ncs {

namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AssetError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Resolves a 1-based (or negative, relative) OBJ index.
int resolve_index(long idx, std::size_t count, int line_no) {
    long resolved = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
    if (idx == 0 || resolved < 0 || resolved >= static_cast<long>(count))
        throw TopologyError("obj line " + std::to_string(line_no) + ": index out of range");
    return static_cast<int>(resolved);
}

}  // namespace

MaterialModel parse_material(const std::string& name) {
    if (name == "mass_spring") return MaterialModel::MassSpring;
    if (name == "baraff_witkin_sq") return MaterialModel::BaraffWitkinSq;
    if (name == "stvk") return MaterialModel::StVK;
    throw ConfigError("unknown material model '" + name + "'");
}

std::string material_name(MaterialModel model) {
    switch (model) {
        case MaterialModel::MassSpring: return "mass_spring";
        case MaterialModel::BaraffWitkinSq: return "baraff_witkin_sq";
        case MaterialModel::StVK: return "stvk";
    }
    return "mass_spring";
}

void FabricParams::validate() const {
    if (!(density > 0.0)) throw ConfigError("fabric.density must be > 0");
    const std::pair<const char*, double> stiffnesses[] = {
        {"k_stretch", k_stretch}, {"k_shear", k_shear},       {"k_bend", k_bend},
        {"k_collision", k_collision}, {"lame_mu", lame_mu}, {"lame_lambda", lame_lambda}};
    for (const auto& [name, value] : stiffnesses)
        if (!(value >= 0.0)) throw ConfigError(std::string("fabric.") + name + " must be >= 0");
    if (!(collision_eps >= 0.0)) throw ConfigError("fabric.collision_eps must be >= 0");
}

ObjData parse_obj(const std::string& text) {
    ObjData out;
    std::vector<Vec2> texcoords;
    std::vector<std::array<int, 3>> face_vt;
    bool all_faces_have_vt = true;

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z()))
                throw TopologyError("obj line " + std::to_string(line_no) + ": bad vertex");
            out.vertices.push_back(p);
        } else if (tag == "vt") {
            Vec2 t;
            if (!(ls >> t.x() >> t.y()))
                throw TopologyError("obj line " + std::to_string(line_no) + ": bad texcoord");
            texcoords.push_back(t);
        } else if (tag == "f") {
            std::vector<std::string> corners;
            std::string tok;
            while (ls >> tok) corners.push_back(tok);
            if (corners.size() != 3)
                throw TopologyError("obj line " + std::to_string(line_no) + ": face with " +
                                    std::to_string(corners.size()) + " vertices (triangles only)");
            Face f{};
            std::array<int, 3> vt{-1, -1, -1};
            for (int k = 0; k < 3; ++k) {
                const std::string& c = corners[k];
                const auto slash = c.find('/');
                f[k] = resolve_index(std::stol(c.substr(0, slash)), out.vertices.size(), line_no);
                if (slash != std::string::npos) {
                    const auto slash2 = c.find('/', slash + 1);
                    const std::string vt_str = c.substr(slash + 1, slash2 == std::string::npos
                                                                       ? std::string::npos
                                                                       : slash2 - slash - 1);
                    if (!vt_str.empty())
                        vt[k] = resolve_index(std::stol(vt_str), texcoords.size(), line_no);
                }
            }
            if (vt[0] < 0 || vt[1] < 0 || vt[2] < 0) all_faces_have_vt = false;
            out.faces.push_back(f);
            face_vt.push_back(vt);
        }
    }
    if (all_faces_have_vt && !out.faces.empty()) {
        out.face_uvs.reserve(out.faces.size());
        for (const auto& vt : face_vt)
            out.face_uvs.push_back({texcoords[vt[0]], texcoords[vt[1]], texcoords[vt[2]]});
    }
    return out;
}

ObjData read_obj(const std::filesystem::path& path) { return parse_obj(slurp(path)); }

std::string format_obj(const Positions& vertices, const std::vector<Face>& faces) {
    std::string out;
    out.reserve(static_cast<std::size_t>(vertices.rows()) * 40 + faces.size() * 20);
    char buf[128];
    for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
        std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", vertices(i, 0), vertices(i, 1),
                      vertices(i, 2));
        out += buf;
    }
    for (const auto& f : faces) {
        std::snprintf(buf, sizeof buf, "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
        out += buf;
    }
    return out;
}

void write_obj(const std::filesystem::path& path, const Positions& vertices,
               const std::vector<Face>& faces) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw AssetError("cannot write " + path.string());
    out << format_obj(vertices, faces);
}

std::vector<WeightRow> parse_weights(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw WeightError(std::string("weights: ") + e.what());
    }
    if (!doc.is_array()) throw WeightError("weights: expected a JSON array of rows");
    std::vector<WeightRow> rows;
    rows.reserve(doc.size());
    for (const auto& row : doc) {
        if (!row.is_object()) throw WeightError("weights: each row must be an object");
        WeightRow r;
        for (const auto& [name, w] : row.items()) {
            if (!w.is_number()) throw WeightError("weights: non-numeric weight for " + name);
            r.emplace_back(name, w.get<double>());
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<WeightRow> read_weights(const std::filesystem::path& path) {
    return parse_weights(slurp(path));
}

void write_weights(const std::filesystem::path& path, const std::vector<WeightRow>& rows) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json r = nlohmann::json::object();
        for (const auto& [name, w] : row) r[name] = w;
        doc.push_back(std::move(r));
    }
    std::ofstream out(path);
    if (!out) throw AssetError("cannot write " + path.string());
    out << doc.dump() << '\n';
}

void normalize_weight_rows(std::vector<WeightRow>& rows) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double sum = 0.0;
        for (const auto& [name, w] : rows[i]) {
            if (!(w >= 0.0))
                throw WeightError("weight row " + std::to_string(i) + ": negative weight for " + name);
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-3)
            throw WeightError("weight row " + std::to_string(i) + " sums to " + std::to_string(sum));
        for (auto& entry : rows[i]) entry.second /= sum;
    }
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

GarmentMesh make_garment(ObjData obj, std::vector<WeightRow> weights, FabricParams fabric) {
    fabric.validate();
    GarmentMesh mesh;
    const int n = static_cast<int>(obj.vertices.size());
    mesh.vertices.resize(n, 3);
    for (int i = 0; i < n; ++i) mesh.vertices.row(i) = obj.vertices[i].transpose();
    for (const auto& f : obj.faces)
        for (int idx : f)
            if (idx < 0 || idx >= n) throw TopologyError("face index out of range");
    for (std::size_t fi = 0; fi < obj.faces.size(); ++fi) {
        const auto& f = obj.faces[fi];
        if (triangle_area(obj.vertices[f[0]], obj.vertices[f[1]], obj.vertices[f[2]]) < kDegenerateArea)
            throw DegenerateError("face " + std::to_string(fi) + " has zero rest area");
    }
    mesh.faces = std::move(obj.faces);
    mesh.face_uvs = std::move(obj.face_uvs);
    if (!weights.empty()) {
        if (static_cast<int>(weights.size()) != n)
            throw WeightError("weights file has " + std::to_string(weights.size()) +
                              " rows, mesh has " + std::to_string(n) + " vertices");
        normalize_weight_rows(weights);
    }
    mesh.blend_weights = std::move(weights);
    mesh.fabric = fabric;
    return mesh;
}

GarmentMesh load_garment(const std::filesystem::path& obj_path,
                         const std::filesystem::path& weights_path, const FabricParams& fabric) {
    ObjData obj = read_obj(obj_path);
    std::vector<WeightRow> weights;
    if (!weights_path.empty()) weights = read_weights(weights_path);
    return make_garment(std::move(obj), std::move(weights), fabric);
}

Topology build_topology(int num_vertices, const std::vector<Face>& faces) {
    Topology topo;
    // edge key -> (edge index, incident faces)
    std::map<std::pair<int, int>, int> edge_index;
    std::vector<std::vector<int>> edge_faces;
    for (int fi = 0; fi < static_cast<int>(faces.size()); ++fi) {
        const Face& f = faces[fi];
        for (int k = 0; k < 3; ++k) {
            const int a = f[k], b = f[(k + 1) % 3];
            if (a < 0 || b < 0 || a >= num_vertices || b >= num_vertices)
                throw TopologyError("face index out of range");
            const auto key = std::minmax(a, b);
            auto [it, inserted] = edge_index.try_emplace({key.first, key.second},
                                                         static_cast<int>(topo.edges.size()));
            if (inserted) {
                topo.edges.push_back({key.first, key.second});
                edge_faces.emplace_back();
            }
            edge_faces[it->second].push_back(fi);
        }
    }
    for (int e = 0; e < static_cast<int>(topo.edges.size()); ++e) {
        const auto& inc = edge_faces[e];
        if (inc.size() > 2)
            throw NonManifoldError("edge (" + std::to_string(topo.edges[e][0]) + ", " +
                                   std::to_string(topo.edges[e][1]) + ") shared by " +
                                   std::to_string(inc.size()) + " faces");
        if (inc.size() != 2) continue;
        Dihedral d;
        d.edge = e;
        d.face_a = inc[0];
        d.face_b = inc[1];
        const Face& fa = faces[d.face_a];
        const auto [lo, hi] = topo.edges[e];
        for (int k = 0; k < 3; ++k) {
            const int a = fa[k], b = fa[(k + 1) % 3];
            if ((a == lo && b == hi) || (a == hi && b == lo)) {
                d.v0 = a;
                d.v1 = b;
                d.opp_a = fa[(k + 2) % 3];
            }
        }
        for (int idx : faces[d.face_b])
            if (idx != lo && idx != hi) d.opp_b = idx;
        topo.dihedrals.push_back(d);
    }
    return topo;
}

Topology build_topology(const GarmentMesh& mesh) {
    return build_topology(mesh.num_vertices(), mesh.faces);
}

double signed_dihedral(const Vec3& x0, const Vec3& x1, const Vec3& xa, const Vec3& xb) {
    const Vec3 e = x1 - x0;
    const Vec3 na = e.cross(xa - x0);
    const Vec3 nb = (xb - x0).cross(e);
    const double en = e.norm();
    const double s = na.cross(nb).dot(e) / en;
    const double c = na.dot(nb);
    double phi = std::atan2(s, c);
    if (phi <= -std::numbers::pi) phi += 2.0 * std::numbers::pi;
    return phi;
}

RestState compute_rest_state(const GarmentMesh& mesh, const Topology& topo) {
    RestState rest;
    const auto& x = mesh.vertices;
    auto vtx = [&](int i) -> Vec3 { return x.row(i).transpose(); };

    rest.edge_lengths.reserve(topo.edges.size());
    for (const auto& [a, b] : topo.edges) {
        const double l = (vtx(a) - vtx(b)).norm();
        if (!(l > 0.0)) throw DegenerateError("zero-length rest edge");
        rest.edge_lengths.push_back(l);
    }

    const int nf = mesh.num_faces();
    rest.face_areas.resize(nf);
    rest.material_areas.resize(nf);
    rest.uv_frames.resize(nf);
    rest.material_metrics.resize(nf);
    for (int fi = 0; fi < nf; ++fi) {
        const Face& f = mesh.faces[fi];
        const Vec3 p0 = vtx(f[0]), p1 = vtx(f[1]), p2 = vtx(f[2]);
        const double area = triangle_area(p0, p1, p2);
        if (area < kDegenerateArea)
            throw DegenerateError("face " + std::to_string(fi) + " is degenerate");
        rest.face_areas[fi] = area;

        Mat2 dm;
        Mat2 metric;
        if (mesh.has_uvs()) {
            const auto& uv = mesh.face_uvs[fi];
            dm.col(0) = uv[1] - uv[0];
            dm.col(1) = uv[2] - uv[0];
            metric = dm.transpose() * dm;
        } else {
            // Isometric unfold of the rest triangle into its own plane.
            const Vec3 e1 = p1 - p0, e2 = p2 - p0;
            const Vec3 u = e1.normalized();
            const Vec3 v = e1.cross(e2).cross(e1).normalized();
            dm << e1.norm(), e2.dot(u), 0.0, e2.dot(v);
            // Same metric as the unfold, taken from the 3D edges so the rest state is exact.
            metric << e1.dot(e1), e1.dot(e2), e2.dot(e1), e2.dot(e2);
        }
        const double det = dm.determinant();
        if (std::abs(det) * 0.5 < kDegenerateArea)
            throw DegenerateError("face " + std::to_string(fi) + " has a degenerate uv frame");
        rest.material_areas[fi] = std::abs(det) * 0.5;
        rest.uv_frames[fi] = dm.inverse();
        rest.material_metrics[fi] = metric;
    }

    rest.rest_dihedrals.reserve(topo.dihedrals.size());
    rest.dihedral_scale.reserve(topo.dihedrals.size());
    for (const auto& d : topo.dihedrals) {
        rest.rest_dihedrals.push_back(signed_dihedral(vtx(d.v0), vtx(d.v1), vtx(d.opp_a), vtx(d.opp_b)));
        const double l = rest.edge_lengths[d.edge];
        const double a = rest.face_areas[d.face_a] + rest.face_areas[d.face_b];
        rest.dihedral_scale.push_back(l * l / (8.0 * a));
    }
    return rest;
}

std::vector<double> lump_masses(const GarmentMesh& mesh) {
    std::vector<double> masses(mesh.num_vertices(), 0.0);
    const auto& x = mesh.vertices;
    for (const Face& f : mesh.faces) {
        const double area = triangle_area(x.row(f[0]).transpose(), x.row(f[1]).transpose(),
                                          x.row(f[2]).transpose());
        const double share = mesh.fabric.density * area / 3.0;
        for (int idx : f) masses[idx] += share;
    }
    return masses;
}

}  // namespace ncs
