#pragma once

#include "ncs/common.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ncs {

enum class MaterialModel { MassSpring, BaraffWitkinSq, StVK };

MaterialModel parse_material(const std::string& name);
std::string material_name(MaterialModel model);

struct FabricParams {
    double density = 0.3;        // kg/m^2
    double k_stretch = 10.0;
    double k_shear = 0.5;
    double k_bend = 5e-5;
    double k_collision = 10.0;
    double collision_eps = 0.004;  // m
    MaterialModel material = MaterialModel::MassSpring;
    double lame_mu = 10.0;
    double lame_lambda = 20.0;

    // Throws ConfigError when density <= 0, a stiffness is negative or eps < 0.
    void validate() const;
};

// Raw triangle soup as read from an OBJ file.
struct ObjData {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    // Per face corner texture coordinates; empty when the file has no usable vt.
    std::vector<std::array<Vec2, 3>> face_uvs;
};

ObjData read_obj(const std::filesystem::path& path);
ObjData parse_obj(const std::string& text);
void write_obj(const std::filesystem::path& path, const Positions& vertices,
               const std::vector<Face>& faces);
std::string format_obj(const Positions& vertices, const std::vector<Face>& faces);

// Sparse per-vertex skinning weights keyed by joint name, as stored on disk.
using WeightRow = std::vector<std::pair<std::string, double>>;

std::vector<WeightRow> read_weights(const std::filesystem::path& path);
std::vector<WeightRow> parse_weights(const std::string& json_text);
void write_weights(const std::filesystem::path& path, const std::vector<WeightRow>& rows);

// Validates row sums. Rows within 1e-3 of unit sum are renormalised; anything
// further off, or any negative weight, throws WeightError.
void normalize_weight_rows(std::vector<WeightRow>& rows);

struct GarmentMesh {
    Positions vertices;                          // rest pose, metres
    std::vector<Face> faces;
    std::vector<std::array<Vec2, 3>> face_uvs;   // material space; empty -> per-face unfold
    std::vector<WeightRow> blend_weights;        // may be empty until transferred
    FabricParams fabric;

    int num_vertices() const { return static_cast<int>(vertices.rows()); }
    int num_faces() const { return static_cast<int>(faces.size()); }
    bool has_uvs() const { return !face_uvs.empty(); }
};

// Builds a garment from in-memory data and checks face indices, triangle areas and weights.
GarmentMesh make_garment(ObjData obj, std::vector<WeightRow> weights, FabricParams fabric);

// weights_path may be empty; the garment then carries no weights and the caller
// is expected to transfer them from the body.
GarmentMesh load_garment(const std::filesystem::path& obj_path,
                         const std::filesystem::path& weights_path, const FabricParams& fabric);

struct Dihedral {
    int edge = -1;
    int v0 = -1, v1 = -1;          // shared edge, ordered as in face_a
    int opp_a = -1, opp_b = -1;    // vertex opposite the edge in face_a / face_b
    int face_a = -1, face_b = -1;
};

struct Topology {
    std::vector<std::array<int, 2>> edges;  // (min, max) vertex pairs, first-seen order
    std::vector<Dihedral> dihedrals;
};

Topology build_topology(const GarmentMesh& mesh);
Topology build_topology(int num_vertices, const std::vector<Face>& faces);

struct RestState {
    std::vector<double> edge_lengths;
    std::vector<double> rest_dihedrals;
    std::vector<double> face_areas;           // 3D rest areas
    std::vector<double> material_areas;       // areas in uv space
    std::vector<Mat2> uv_frames;              // inverse material edge matrices
    std::vector<Mat2> material_metrics;       // Dm^T Dm of the material edges
    std::vector<double> dihedral_scale;       // l^2 / (8 a)
};

inline constexpr double kDegenerateArea = 1e-12;

RestState compute_rest_state(const GarmentMesh& mesh, const Topology& topo);

// Signed angle between the two faces of a dihedral, in (-pi, pi]. Zero for a
// flat pair. Uses the edge direction of face_a to fix the sign.
double signed_dihedral(const Vec3& x0, const Vec3& x1, const Vec3& xa, const Vec3& xb);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

std::vector<double> lump_masses(const GarmentMesh& mesh);

}  // namespace ncs
