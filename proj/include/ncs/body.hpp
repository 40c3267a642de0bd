#pragma once

#include "ncs/common.hpp"
#include "ncs/mesh.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ncs {

struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    RigidTransform operator*(const RigidTransform& rhs) const {
        return {rotation * rhs.rotation, rotation * rhs.translation + translation};
    }
    RigidTransform inverse() const {
        const Mat3 rt = rotation.transpose();
        return {rt, -(rt * translation)};
    }
};

struct Skeleton {
    std::vector<std::string> joints;
    std::vector<int> parents;           // -1 for the root
    std::vector<Vec3> offsets;          // rest translation relative to the parent frame
    std::vector<Quat> rest_rotations;
    std::vector<int> mirror;            // mirror[j] = counterpart of joint j (itself if central)
    int mirror_axis = 0;                // normal of the sagittal plane: 0 = x, 1 = y, 2 = z
    std::vector<bool> active;

    int num_joints() const { return static_cast<int>(joints.size()); }
    int num_active() const;
    std::vector<int> active_indices() const;
    int index_of(const std::string& name) const;  // -1 when absent

    // Throws ConfigError unless parents are topologically sorted and mirror is an involution.
    void validate() const;
};

// Appends a joint and returns its index. mirror/active default to self/true.
int add_joint(Skeleton& skel, const std::string& name, int parent, const Vec3& offset,
              const Quat& rest_rotation = Quat::Identity());

struct Pose {
    std::vector<Quat> rotations;        // local, relative to the parent, applied after rest
    Vec3 root_translation = Vec3::Zero();

    static Pose identity(int num_joints);
    // Normalises every quaternion and flips it onto the w >= 0 hemisphere.
    void canonicalize();
    // Throws ConfigError for non-unit quaternions (1e-6) or a joint-count mismatch.
    void validate(int num_joints) const;
};

struct PoseSequence {
    std::vector<Pose> frames;
    double fps = 30.0;
    std::string name;
    std::string action;   // grouping key for dataset splits

    double duration() const { return frames.empty() ? 0.0 : (frames.size() - 1) / fps; }
};

// Per-vertex skinning weights bound to skeleton joint indices.
using JointWeights = std::vector<std::pair<int, double>>;
using BoundWeights = std::vector<JointWeights>;

BoundWeights bind_weights(const std::vector<WeightRow>& rows, const Skeleton& skel);

std::vector<RigidTransform> forward_kinematics(const Skeleton& skel, const Pose& pose);
std::vector<RigidTransform> rest_globals(const Skeleton& skel);

// Per joint G_j * G_j^rest^-1.
std::vector<RigidTransform> skinning_transforms(const std::vector<RigidTransform>& globals,
                                                const std::vector<RigidTransform>& rest);

// Per-vertex blended affine map x -> A x + b. LBS is linear in the rest position,
// so this is also the Jacobian used to pull gradients back into rest space.
struct VertexSkin {
    Mat3 linear;
    Vec3 offset;
};
std::vector<VertexSkin> blend_skinning(const BoundWeights& weights,
                                       const std::vector<RigidTransform>& skinning);

Positions apply_skinning(const std::vector<VertexSkin>& skin, const Positions& rest_vertices);

Positions skin_lbs(const Positions& vertices, const BoundWeights& weights,
                   const std::vector<RigidTransform>& globals, const Skeleton& skel);

// Quaternion helpers.
Quat slerp(const Quat& a, const Quat& b, double t);
double quat_distance(const Quat& a, const Quat& b);  // 1 - |<a, b>|

PoseSequence resample_slerp(const PoseSequence& seq, double target_fps);

// Nearest body vertex (ties -> lowest index) donates its weight row.
std::vector<WeightRow> transfer_weights(const Positions& garment_vertices,
                                        const Positions& body_vertices,
                                        const std::vector<WeightRow>& body_weights);

// ---------------------------------------------------------------------------
// Closest-point and signed-distance queries against a closed triangle mesh.

enum class Feature { Vertex, Edge, Face };

struct SurfacePoint {
    Vec3 point = Vec3::Zero();
    int face = -1;
    Feature feature = Feature::Face;
    int local = 0;          // vertex (0..2) or edge (0..2, edge k = (k, k+1)) within the face
    double dist_sq = 0.0;
};

SurfacePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct SignedDistance {
    double distance = 0.0;     // negative inside
    Vec3 closest = Vec3::Zero();
    Vec3 gradient = Vec3::Zero();  // unit vector, d(distance)/dp
    Vec3 normal = Vec3::Zero();    // pseudo-normal at the closest feature
};

class BodyCollider {
public:
    BodyCollider() = default;
    BodyCollider(Positions vertices, std::vector<Face> faces);

    bool empty() const { return faces_.empty(); }
    SignedDistance query(const Vec3& p) const;
    SignedDistance query_brute_force(const Vec3& p) const;

    const Positions& vertices() const { return vertices_; }
    const std::vector<Face>& faces() const { return faces_; }
    const Positions& vertex_normals() const { return vertex_normals_; }

private:
    struct Node {
        Eigen::AlignedBox3d box;
        int left = -1, right = -1;
        int begin = 0, end = 0;  // leaf range into order_
    };

    int build(int begin, int end);
    SignedDistance finish(const Vec3& p, const SurfacePoint& sp) const;
    Vec3 pseudo_normal(const SurfacePoint& sp) const;

    Positions vertices_;
    std::vector<Face> faces_;
    std::vector<Vec3> face_normals_;
    Positions vertex_normals_;
    std::vector<std::array<Vec3, 3>> edge_normals_;  // per face, edge k = (k, k+1)
    std::vector<Node> nodes_;
    std::vector<int> order_;
    std::vector<Vec3> centroids_;
};

double signed_distance(const Vec3& p, const BodyCollider& body);

// ---------------------------------------------------------------------------
// Body model: skeleton + skinned closed surface used for collisions.

struct BodyModel {
    Skeleton skeleton;
    Positions rest_vertices;
    std::vector<Face> faces;
    BoundWeights weights;
    std::vector<WeightRow> weight_rows;  // original named rows, for weight transfer
    std::vector<RigidTransform> rest;    // rest globals
};

BodyModel make_body(Skeleton skel, ObjData obj, std::vector<WeightRow> weights);
BodyModel load_body(const std::filesystem::path& skeleton_path, const std::filesystem::path& obj_path,
                    const std::filesystem::path& weights_path);

struct PosedBody {
    std::vector<RigidTransform> global_transforms;
    Positions skin_vertices;
    Positions skin_normals;
    std::shared_ptr<const BodyCollider> collider;
};

PosedBody pose_body(const BodyModel& body, const Pose& pose);

// ---------------------------------------------------------------------------
// JSON formats.

Skeleton parse_skeleton(const std::string& json_text);
Skeleton read_skeleton(const std::filesystem::path& path);
std::string format_skeleton(const Skeleton& skel);

PoseSequence parse_pose_sequence(const std::string& json_text, const Skeleton& skel);
PoseSequence read_pose_sequence(const std::filesystem::path& path, const Skeleton& skel);
std::string format_pose_sequence(const PoseSequence& seq, const Skeleton& skel);

}  // namespace ncs
