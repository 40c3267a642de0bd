#include "doctest.h"
#include "support.hpp"

#include "ncs/mesh.hpp"
#include "ncs/synth.hpp"

#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

using namespace ncs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("ncs_mesh_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path write(const std::string& name, const std::string& text) const {
        std::ofstream(path / name) << text;
        return path / name;
    }
};

const char* kUnitQuad =
    "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
    "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n"
    "f 1/1 2/2 3/3\nf 1/1 3/3 4/4\n";

std::string uniform_weights(int n) {
    std::string s = "[";
    for (int i = 0; i < n; ++i) s += std::string(i ? "," : "") + "{\"root\": 1.0}";
    return s + "]";
}

// Brute force: every unordered vertex pair that appears on some face side.
std::set<std::pair<int, int>> brute_edges(const std::vector<Face>& faces) {
    std::set<std::pair<int, int>> out;
    for (const Face& f : faces)
        for (int k = 0; k < 3; ++k) out.insert(std::minmax(f[k], f[(k + 1) % 3]));
    return out;
}

int brute_interior_edges(const std::vector<Face>& faces) {
    int interior = 0;
    for (const auto& [a, b] : brute_edges(faces)) {
        int count = 0;
        for (const Face& f : faces) {
            const bool has_a = f[0] == a || f[1] == a || f[2] == a;
            const bool has_b = f[0] == b || f[1] == b || f[2] == b;
            count += has_a && has_b;
        }
        interior += count == 2;
    }
    return interior;
}

}  // namespace

TEST_CASE("load_garment on a unit quad") {
    TempDir dir;
    const auto obj = dir.write("quad.obj", kUnitQuad);
    const auto w = dir.write("w.json", uniform_weights(4));
    const GarmentMesh mesh = load_garment(obj, w, {});
    CHECK(mesh.num_vertices() == 4);
    CHECK(mesh.num_faces() == 2);
    CHECK(mesh.has_uvs());
    CHECK(mesh.blend_weights.size() == 4);
}

TEST_CASE("load_garment rejects quads and bad weights") {
    TempDir dir;
    const auto quad = dir.write("q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
    CHECK_THROWS_AS(load_garment(quad, {}, {}), TopologyError);

    const auto obj = dir.write("quad.obj", kUnitQuad);
    const auto off = dir.write("off.json", "[{\"root\":0.5},{\"root\":1},{\"root\":1},{\"root\":1}]");
    CHECK_THROWS_AS(load_garment(obj, off, {}), WeightError);
    const auto rows = dir.write("rows.json", uniform_weights(3));
    CHECK_THROWS_AS(load_garment(obj, rows, {}), WeightError);

    // Within 1e-3 of one: renormalised.
    const auto near = dir.write("near.json", "[{\"a\":0.6,\"b\":0.4005},{\"a\":1},{\"a\":1},{\"a\":1}]");
    const GarmentMesh mesh = load_garment(obj, near, {});
    double sum = 0.0;
    for (const auto& [name, v] : mesh.blend_weights[0]) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(load_garment(dir.path / "missing.obj", {}, {}), AssetError);
}

TEST_CASE("obj round trip and index forms") {
    const ObjData a = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf -3//1 -2//1 -1//1\n");
    REQUIRE(a.faces.size() == 1);
    CHECK(a.faces[0] == Face{0, 1, 2});
    CHECK(a.face_uvs.empty());
    const Positions p = test::to_positions(a.vertices);
    const ObjData b = parse_obj(format_obj(p, a.faces));
    CHECK(b.faces == a.faces);
    CHECK(test::to_positions(b.vertices) == p);
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nf 1 2 3\n"), TopologyError);
}

TEST_CASE("10x10 grid counts") {
    const ObjData grid = synth::grid(10, 10, 1.0, 1.0);
    const GarmentMesh mesh = make_garment(grid, {}, {});
    CHECK(mesh.num_vertices() == 100);
    CHECK(mesh.num_faces() == 162);
    const Topology topo = build_topology(mesh);
    CHECK(topo.edges.size() == brute_edges(mesh.faces).size());
    CHECK(topo.edges.size() == 261);
    CHECK(static_cast<int>(topo.dihedrals.size()) == brute_interior_edges(mesh.faces));
    CHECK(topo.dihedrals.size() == 225);
}

TEST_CASE("build_topology small cases") {
    const Topology quad = build_topology(4, {Face{0, 1, 2}, Face{0, 2, 3}});
    CHECK(quad.edges.size() == 5);
    CHECK(quad.dihedrals.size() == 1);
    const Topology tri = build_topology(3, {Face{0, 1, 2}});
    CHECK(tri.edges.size() == 3);
    CHECK(tri.dihedrals.empty());
    CHECK_THROWS_AS(build_topology(5, {Face{0, 1, 2}, Face{1, 0, 3}, Face{0, 1, 4}}), NonManifoldError);
}

TEST_CASE("topology invariants and determinism") {
    const GarmentMesh mesh = test::swatch(6, 7, 0.3);
    const Topology a = build_topology(mesh);
    const Topology b = build_topology(mesh);
    CHECK(a.edges == b.edges);
    std::set<std::pair<int, int>> seen;
    for (const auto& e : a.edges) {
        CHECK(e[0] < e[1]);
        CHECK(seen.insert({e[0], e[1]}).second);
    }
    std::set<int> dihedral_edges;
    for (const auto& d : a.dihedrals) CHECK(dihedral_edges.insert(d.edge).second);
}

TEST_CASE("rest state examples") {
    const GarmentMesh flat = make_garment(parse_obj(kUnitQuad), {}, {});
    const Topology topo = build_topology(flat);
    const RestState rest = compute_rest_state(flat, topo);
    REQUIRE(rest.rest_dihedrals.size() == 1);
    CHECK(rest.rest_dihedrals[0] == 0.0);

    ObjData folded;
    folded.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, -1)};
    folded.faces = {Face{0, 1, 2}, Face{1, 0, 3}};
    const GarmentMesh fm = make_garment(folded, {}, {});
    const RestState fr = compute_rest_state(fm, build_topology(fm));
    CHECK(fr.rest_dihedrals[0] == doctest::Approx(std::numbers::pi / 2).epsilon(1e-14));

    ObjData degenerate;
    degenerate.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
    degenerate.faces = {Face{0, 1, 2}};
    CHECK_THROWS_AS(make_garment(degenerate, {}, {}), DegenerateError);
}

TEST_CASE("grid rest quantities match brute force") {
    std::mt19937_64 rng(4);
    GarmentMesh mesh = test::swatch(10, 10, 0.9);
    mesh.vertices = test::jitter(mesh.vertices, 0.02, rng);
    const Topology topo = build_topology(mesh);
    const RestState rest = compute_rest_state(mesh, topo);
    for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        const auto [i, j] = topo.edges[e];
        const double brute = std::sqrt((mesh.vertices.row(i) - mesh.vertices.row(j)).array().square().sum());
        CHECK(std::abs(rest.edge_lengths[e] - brute) < 1e-12);
    }
    for (std::size_t k = 0; k < topo.dihedrals.size(); ++k) {
        const auto& d = topo.dihedrals[k];
        const double l = rest.edge_lengths[d.edge];
        const double a = rest.face_areas[d.face_a] + rest.face_areas[d.face_b];
        CHECK(rest.dihedral_scale[k] == doctest::Approx(l * l / (8 * a)).epsilon(1e-9));
        CHECK(rest.rest_dihedrals[k] > -std::numbers::pi);
        CHECK(rest.rest_dihedrals[k] <= std::numbers::pi);
    }
}

TEST_CASE("signed dihedral flips with winding") {
    const Vec3 x0(0, 0, 0), x1(1, 0, 0), xa(0, 1, 0.2), xb(0.3, -1, 0.5);
    const double phi = signed_dihedral(x0, x1, xa, xb);
    // Reversing face_a's winding reverses the shared edge direction.
    CHECK(signed_dihedral(x1, x0, xa, xb) == doctest::Approx(-phi).epsilon(1e-14));
    // Relabelling the pair (b becomes a) leaves the angle alone.
    CHECK(signed_dihedral(x1, x0, xb, xa) == doctest::Approx(phi).epsilon(1e-14));
    CHECK(signed_dihedral(x0, x1, Vec3(0, 1, 0), Vec3(0.5, -1, 0)) == 0.0);
}

TEST_CASE("lumped masses") {
    GarmentMesh quad = make_garment(parse_obj(kUnitQuad), {}, {});
    const auto m = lump_masses(quad);
    double total = 0.0;
    for (double v : m) total += v;
    CHECK(total == doctest::Approx(0.3).epsilon(1e-12));

    ObjData lonely = parse_obj(kUnitQuad);
    lonely.vertices.emplace_back(5, 5, 5);
    const auto m2 = lump_masses(make_garment(lonely, {}, {}));
    CHECK(m2.back() == 0.0);

    std::mt19937_64 rng(8);
    GarmentMesh grid = test::swatch(10, 10, 0.5);
    grid.vertices = test::jitter(grid.vertices, 0.01, rng);
    const auto mg = lump_masses(grid);
    std::vector<double> brute(grid.num_vertices(), 0.0);
    double area = 0.0;
    for (const Face& f : grid.faces) {
        const double a = triangle_area(grid.vertices.row(f[0]).transpose(), grid.vertices.row(f[1]).transpose(),
                                       grid.vertices.row(f[2]).transpose());
        area += a;
        for (int v : f) brute[v] += grid.fabric.density * a / 3.0;
    }
    double sum = 0.0;
    for (int i = 0; i < grid.num_vertices(); ++i) {
        CHECK(mg[i] == doctest::Approx(brute[i]).epsilon(1e-12));
        sum += mg[i];
    }
    CHECK(sum == doctest::Approx(grid.fabric.density * area).epsilon(1e-9));
}

TEST_CASE("fabric validation and material names") {
    FabricParams f;
    f.density = 0.0;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    f = {};
    f.k_bend = -1.0;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    f = {};
    f.collision_eps = -0.1;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    for (auto m : {MaterialModel::MassSpring, MaterialModel::BaraffWitkinSq, MaterialModel::StVK})
        CHECK(parse_material(material_name(m)) == m);
    CHECK_THROWS_AS(parse_material("rubber"), ConfigError);
}
