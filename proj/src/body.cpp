#include "ncs/body.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace ncs {

using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AssetError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Vec3 vec3_from(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + ": expected [x, y, z]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Quat quat_from(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 4)
        throw ConfigError(std::string(what) + ": expected [w, x, y, z]");
    return Quat(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

json to_json(const Quat& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }
json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

RigidTransform local_transform(const Skeleton& skel, int j, const Quat& pose_rotation) {
    return {(skel.rest_rotations[j] * pose_rotation).toRotationMatrix(), skel.offsets[j]};
}

}  // namespace

int Skeleton::num_active() const {
    int n = 0;
    for (bool a : active) n += a ? 1 : 0;
    return n;
}

std::vector<int> Skeleton::active_indices() const {
    std::vector<int> idx;
    for (int j = 0; j < num_joints(); ++j)
        if (active[j]) idx.push_back(j);
    return idx;
}

int Skeleton::index_of(const std::string& name) const {
    for (int j = 0; j < num_joints(); ++j)
        if (joints[j] == name) return j;
    return -1;
}

void Skeleton::validate() const {
    const int k = num_joints();
    if (k == 0) throw ConfigError("skeleton has no joints");
    if (static_cast<int>(parents.size()) != k || static_cast<int>(offsets.size()) != k ||
        static_cast<int>(rest_rotations.size()) != k || static_cast<int>(mirror.size()) != k ||
        static_cast<int>(active.size()) != k)
        throw ConfigError("skeleton arrays have inconsistent lengths");
    for (int j = 0; j < k; ++j) {
        if (parents[j] >= j) throw ConfigError("skeleton joint " + joints[j] + " precedes its parent");
        if (j > 0 && parents[j] < 0) throw ConfigError("skeleton has more than one root");
        if (mirror[j] < 0 || mirror[j] >= k || mirror[mirror[j]] != j)
            throw ConfigError("skeleton mirror map is not an involution at " + joints[j]);
    }
    if (parents[0] != -1) throw ConfigError("skeleton root must be the first joint");
    if (mirror_axis < 0 || mirror_axis > 2) throw ConfigError("skeleton mirror axis must be 0..2");
}

int add_joint(Skeleton& skel, const std::string& name, int parent, const Vec3& offset,
              const Quat& rest_rotation) {
    const int idx = skel.num_joints();
    skel.joints.push_back(name);
    skel.parents.push_back(parent);
    skel.offsets.push_back(offset);
    skel.rest_rotations.push_back(rest_rotation.normalized());
    skel.mirror.push_back(idx);
    skel.active.push_back(true);
    return idx;
}

Pose Pose::identity(int num_joints) {
    Pose p;
    p.rotations.assign(num_joints, Quat::Identity());
    return p;
}

void Pose::canonicalize() {
    for (auto& q : rotations) {
        q.normalize();
        if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    }
}

void Pose::validate(int num_joints) const {
    if (static_cast<int>(rotations.size()) != num_joints)
        throw ConfigError("pose has " + std::to_string(rotations.size()) + " rotations, skeleton has " +
                          std::to_string(num_joints) + " joints");
    for (const auto& q : rotations)
        if (std::abs(q.norm() - 1.0) > 1e-6) throw ConfigError("pose quaternion is not unit length");
}

BoundWeights bind_weights(const std::vector<WeightRow>& rows, const Skeleton& skel) {
    BoundWeights out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (const auto& [name, w] : rows[i]) {
            const int j = skel.index_of(name);
            if (j < 0) throw WeightError("weight references unknown joint '" + name + "'");
            if (w != 0.0) out[i].emplace_back(j, w);
        }
    }
    return out;
}

std::vector<RigidTransform> forward_kinematics(const Skeleton& skel, const Pose& pose) {
    const int k = skel.num_joints();
    std::vector<RigidTransform> globals(k);
    for (int j = 0; j < k; ++j) {
        RigidTransform local = local_transform(skel, j, pose.rotations[j]);
        if (skel.parents[j] < 0) {
            local.translation += pose.root_translation;
            globals[j] = local;
        } else {
            globals[j] = globals[skel.parents[j]] * local;
        }
    }
    return globals;
}

std::vector<RigidTransform> rest_globals(const Skeleton& skel) {
    return forward_kinematics(skel, Pose::identity(skel.num_joints()));
}

std::vector<RigidTransform> skinning_transforms(const std::vector<RigidTransform>& globals,
                                                const std::vector<RigidTransform>& rest) {
    std::vector<RigidTransform> out(globals.size());
    for (std::size_t j = 0; j < globals.size(); ++j) out[j] = globals[j] * rest[j].inverse();
    return out;
}

std::vector<VertexSkin> blend_skinning(const BoundWeights& weights,
                                       const std::vector<RigidTransform>& skinning) {
    std::vector<VertexSkin> out(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        Mat3 a = Mat3::Zero();
        Vec3 b = Vec3::Zero();
        for (const auto& [j, w] : weights[i]) {
            a += w * skinning[j].rotation;
            b += w * skinning[j].translation;
        }
        out[i] = {a, b};
    }
    return out;
}

Positions apply_skinning(const std::vector<VertexSkin>& skin, const Positions& rest_vertices) {
    Positions out(rest_vertices.rows(), 3);
    for (Eigen::Index i = 0; i < rest_vertices.rows(); ++i) {
        const Vec3 v = rest_vertices.row(i).transpose();
        out.row(i) = (skin[i].linear * v + skin[i].offset).transpose();
    }
    return out;
}

Positions skin_lbs(const Positions& vertices, const BoundWeights& weights,
                   const std::vector<RigidTransform>& globals, const Skeleton& skel) {
    const auto skin = blend_skinning(weights, skinning_transforms(globals, rest_globals(skel)));
    return apply_skinning(skin, vertices);
}

Quat slerp(const Quat& a, const Quat& b, double t) {
    Quat q = a.slerp(t, b);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return q;
}

double quat_distance(const Quat& a, const Quat& b) { return 1.0 - std::abs(a.dot(b)); }

PoseSequence resample_slerp(const PoseSequence& seq, double target_fps) {
    if (!(target_fps > 0.0)) throw ConfigError("target fps must be > 0");
    if (seq.frames.empty() || !(seq.fps > 0.0)) throw ConfigError("pose sequence is empty");
    PoseSequence out;
    out.fps = target_fps;
    out.name = seq.name;
    out.action = seq.action;
    const int count = static_cast<int>(std::lround(seq.duration() * target_fps)) + 1;
    const int last = static_cast<int>(seq.frames.size()) - 1;
    out.frames.reserve(count);
    for (int k = 0; k < count; ++k) {
        double s = (static_cast<double>(k) / target_fps) * seq.fps;
        const double nearest = std::round(s);
        if (std::abs(s - nearest) < 1e-9) s = nearest;
        if (s >= last) {
            out.frames.push_back(seq.frames[last]);
            continue;
        }
        const int i0 = static_cast<int>(std::floor(s));
        const double frac = s - i0;
        if (frac == 0.0) {
            out.frames.push_back(seq.frames[i0]);
            continue;
        }
        const Pose& p0 = seq.frames[i0];
        const Pose& p1 = seq.frames[i0 + 1];
        Pose p;
        p.rotations.resize(p0.rotations.size());
        for (std::size_t j = 0; j < p0.rotations.size(); ++j)
            p.rotations[j] = slerp(p0.rotations[j], p1.rotations[j], frac);
        p.root_translation = (1.0 - frac) * p0.root_translation + frac * p1.root_translation;
        out.frames.push_back(std::move(p));
    }
    return out;
}

std::vector<WeightRow> transfer_weights(const Positions& garment_vertices,
                                        const Positions& body_vertices,
                                        const std::vector<WeightRow>& body_weights) {
    if (body_vertices.rows() == 0) throw ConfigError("cannot transfer weights from an empty body");
    if (static_cast<Eigen::Index>(body_weights.size()) != body_vertices.rows())
        throw WeightError("body weights do not match body vertex count");
    std::vector<WeightRow> out(garment_vertices.rows());
    for (Eigen::Index i = 0; i < garment_vertices.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index best_j = 0;
        for (Eigen::Index j = 0; j < body_vertices.rows(); ++j) {
            const double d = (garment_vertices.row(i) - body_vertices.row(j)).squaredNorm();
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
        out[i] = body_weights[best_j];
    }
    return out;
}

BodyModel make_body(Skeleton skel, ObjData obj, std::vector<WeightRow> weights) {
    skel.validate();
    if (obj.faces.empty()) throw ConfigError("body mesh has no faces");
    if (weights.size() != obj.vertices.size())
        throw WeightError("body weights have " + std::to_string(weights.size()) + " rows, body has " +
                          std::to_string(obj.vertices.size()) + " vertices");
    normalize_weight_rows(weights);
    BodyModel body;
    body.weights = bind_weights(weights, skel);
    body.weight_rows = std::move(weights);
    body.rest_vertices.resize(static_cast<Eigen::Index>(obj.vertices.size()), 3);
    for (std::size_t i = 0; i < obj.vertices.size(); ++i)
        body.rest_vertices.row(static_cast<Eigen::Index>(i)) = obj.vertices[i].transpose();
    body.faces = std::move(obj.faces);
    body.rest = rest_globals(skel);
    body.skeleton = std::move(skel);
    return body;
}

BodyModel load_body(const std::filesystem::path& skeleton_path, const std::filesystem::path& obj_path,
                    const std::filesystem::path& weights_path) {
    return make_body(read_skeleton(skeleton_path), read_obj(obj_path), read_weights(weights_path));
}

PosedBody pose_body(const BodyModel& body, const Pose& pose) {
    PosedBody posed;
    posed.global_transforms = forward_kinematics(body.skeleton, pose);
    const auto skin = blend_skinning(body.weights, skinning_transforms(posed.global_transforms, body.rest));
    posed.skin_vertices = apply_skinning(skin, body.rest_vertices);
    auto collider = std::make_shared<BodyCollider>(posed.skin_vertices, body.faces);
    posed.skin_normals = collider->vertex_normals();
    posed.collider = std::move(collider);
    return posed;
}

// ---------------------------------------------------------------------------

Skeleton parse_skeleton(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("skeleton: ") + e.what());
    }
    Skeleton skel;
    if (!doc.contains("joints") || !doc["joints"].is_array())
        throw ConfigError("skeleton: missing joints array");
    for (const auto& j : doc["joints"]) {
        const std::string name = j.at("name").get<std::string>();
        int parent = -1;
        if (j.contains("parent") && !j["parent"].is_null()) {
            if (j["parent"].is_number_integer()) {
                parent = j["parent"].get<int>();
            } else {
                parent = skel.index_of(j["parent"].get<std::string>());
                if (parent < 0) throw ConfigError("skeleton: parent of " + name + " not defined before it");
            }
        }
        const Vec3 offset = j.contains("offset") ? vec3_from(j["offset"], "offset") : Vec3::Zero();
        const Quat rest = j.contains("rest_rotation") ? quat_from(j["rest_rotation"], "rest_rotation")
                                                      : Quat::Identity();
        add_joint(skel, name, parent, offset, rest);
    }
    if (doc.contains("mirror_pairs")) {
        for (const auto& pair : doc["mirror_pairs"]) {
            const int a = skel.index_of(pair.at(0).get<std::string>());
            const int b = skel.index_of(pair.at(1).get<std::string>());
            if (a < 0 || b < 0) throw ConfigError("skeleton: mirror pair names unknown joint");
            skel.mirror[a] = b;
            skel.mirror[b] = a;
        }
    }
    if (doc.contains("mirror_axis")) {
        const std::string axis = doc["mirror_axis"].get<std::string>();
        if (axis == "x") skel.mirror_axis = 0;
        else if (axis == "y") skel.mirror_axis = 1;
        else if (axis == "z") skel.mirror_axis = 2;
        else throw ConfigError("skeleton: mirror_axis must be x, y or z");
    }
    if (doc.contains("active")) {
        skel.active.assign(skel.num_joints(), false);
        for (const auto& name : doc["active"]) {
            const int j = skel.index_of(name.get<std::string>());
            if (j < 0) throw ConfigError("skeleton: active list names unknown joint");
            skel.active[j] = true;
        }
    }
    skel.validate();
    return skel;
}

Skeleton read_skeleton(const std::filesystem::path& path) { return parse_skeleton(slurp(path)); }

std::string format_skeleton(const Skeleton& skel) {
    json doc;
    doc["joints"] = json::array();
    for (int j = 0; j < skel.num_joints(); ++j) {
        json jj;
        jj["name"] = skel.joints[j];
        jj["parent"] = skel.parents[j] < 0 ? json(nullptr) : json(skel.joints[skel.parents[j]]);
        jj["offset"] = to_json(skel.offsets[j]);
        jj["rest_rotation"] = to_json(skel.rest_rotations[j]);
        doc["joints"].push_back(jj);
    }
    doc["mirror_pairs"] = json::array();
    for (int j = 0; j < skel.num_joints(); ++j)
        if (skel.mirror[j] > j)
            doc["mirror_pairs"].push_back(json::array({skel.joints[j], skel.joints[skel.mirror[j]]}));
    doc["mirror_axis"] = std::string(1, "xyz"[skel.mirror_axis]);
    doc["active"] = json::array();
    for (int j = 0; j < skel.num_joints(); ++j)
        if (skel.active[j]) doc["active"].push_back(skel.joints[j]);
    return doc.dump(2);
}

PoseSequence parse_pose_sequence(const std::string& json_text, const Skeleton& skel) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("pose sequence: ") + e.what());
    }
    PoseSequence seq;
    seq.fps = doc.at("fps").get<double>();
    if (!(seq.fps > 0.0)) throw ConfigError("pose sequence: fps must be > 0");
    seq.name = doc.value("name", std::string{});
    seq.action = doc.value("action", std::string{});
    for (const auto& f : doc.at("frames")) {
        Pose p = Pose::identity(skel.num_joints());
        if (f.contains("root_t")) p.root_translation = vec3_from(f["root_t"], "root_t");
        if (f.contains("rot")) {
            for (const auto& [name, q] : f["rot"].items()) {
                const int j = skel.index_of(name);
                if (j < 0) throw ConfigError("pose sequence: unknown joint '" + name + "'");
                p.rotations[j] = quat_from(q, "rot");
            }
        }
        p.canonicalize();
        seq.frames.push_back(std::move(p));
    }
    if (seq.frames.empty()) throw ConfigError("pose sequence has no frames");
    return seq;
}

PoseSequence read_pose_sequence(const std::filesystem::path& path, const Skeleton& skel) {
    return parse_pose_sequence(slurp(path), skel);
}

std::string format_pose_sequence(const PoseSequence& seq, const Skeleton& skel) {
    json doc;
    doc["fps"] = seq.fps;
    if (!seq.name.empty()) doc["name"] = seq.name;
    if (!seq.action.empty()) doc["action"] = seq.action;
    doc["frames"] = json::array();
    for (const auto& p : seq.frames) {
        json f;
        f["root_t"] = to_json(p.root_translation);
        f["rot"] = json::object();
        for (int j = 0; j < skel.num_joints(); ++j) f["rot"][skel.joints[j]] = to_json(p.rotations[j]);
        doc["frames"].push_back(std::move(f));
    }
    return doc.dump();
}

}  // namespace ncs
