#include "ncs/config.hpp"

#include "ncs/synth.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace ncs {

using json = nlohmann::ordered_json;

namespace {

// Strict reader over one JSON object: typed fields, unknown keys rejected.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw SchemaError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    Section child(const std::string& key) {
        seen_.push_back(key);
        static const json empty = json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, key_path(key));
    }

    void get(const std::string& key, double& out) {
        if (const json* v = field(key)) {
            if (!v->is_number()) throw SchemaError(key_path(key), "expected a number");
            out = v->get<double>();
        }
    }
    void get(const std::string& key, int& out) {
        if (const json* v = field(key)) {
            if (!v->is_number_integer()) throw SchemaError(key_path(key), "expected an integer");
            const auto i = v->get<std::int64_t>();
            if (i < INT32_MIN || i > INT32_MAX) throw SchemaError(key_path(key), "integer out of range");
            out = static_cast<int>(i);
        }
    }
    void get(const std::string& key, std::uint64_t& out) {
        if (const json* v = field(key)) {
            if (!v->is_number_unsigned())
                throw SchemaError(key_path(key), "expected a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void get(const std::string& key, bool& out) {
        if (const json* v = field(key)) {
            if (!v->is_boolean()) throw SchemaError(key_path(key), "expected true or false");
            out = v->get<bool>();
        }
    }
    void get(const std::string& key, std::string& out) {
        if (const json* v = field(key)) {
            if (!v->is_string()) throw SchemaError(key_path(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    void get(const std::string& key, std::filesystem::path& out) {
        std::string s = out.string();
        get(key, s);
        out = s;
    }
    void get(const std::string& key, std::vector<int>& out) {
        if (const json* v = field(key)) {
            if (!v->is_array()) throw SchemaError(key_path(key), "expected an array of integers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_number_integer())
                    throw SchemaError(key_path(key) + "[" + std::to_string(i) + "]", "expected an integer");
                out.push_back((*v)[i].get<int>());
            }
        }
    }

    // Throws on the first key that no get/child call asked for.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
                throw SchemaError(key_path(it.key()), "unknown key");
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    const json* field(const std::string& key) {
        seen_.push_back(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    const json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

template <class F>
void checked(const std::string& path, F&& validate) {
    try {
        validate();
    } catch (const SchemaError&) {
        throw;
    } catch (const ConfigError& e) {
        // Validators name the offending key first ("fabric.density must be > 0").
        const std::string what = e.what();
        const auto space = what.find(' ');
        if (space != std::string::npos && what.rfind(path, 0) == 0 && what.find(':') > space)
            throw SchemaError(what.substr(0, space), what.substr(space + 1));
        throw SchemaError(path, what);
    }
}

std::string method_name(SolverMethod m) { return m == SolverMethod::Lbfgs ? "lbfgs" : "gradient_descent"; }

json net_json(const NetDims& d) {
    return {{"latent", d.latent},
            {"static_hidden", d.static_hidden},
            {"joint_hidden", d.joint_hidden},
            {"dynamic_hidden", d.dynamic_hidden},
            {"dynamic_input", d.dynamic_input},
            {"decoder_hidden1", d.decoder_hidden1},
            {"decoder_hidden2", d.decoder_hidden2},
            {"output_scale", d.output_scale}};
}

json fabric_json(const FabricParams& f) {
    return {{"density", f.density},         {"k_stretch", f.k_stretch},
            {"k_shear", f.k_shear},         {"k_bend", f.k_bend},
            {"k_collision", f.k_collision}, {"collision_eps", f.collision_eps},
            {"material", material_name(f.material)}, {"lame_mu", f.lame_mu},
            {"lame_lambda", f.lame_lambda}};
}

json garment_json(const GarmentConfig& g) {
    return {{"synthetic", g.synthetic}, {"dense_dofs", g.dense_dofs}, {"obj", g.obj.string()},
            {"weights", g.weights.string()}};
}

json body_json(const BodyConfig& b) {
    return {{"synthetic", b.synthetic}, {"skeleton", b.skeleton.string()}, {"obj", b.obj.string()},
            {"weights", b.weights.string()}};
}

json train_json(const TrainConfig& t) {
    return {{"window_seconds", t.window_seconds}, {"fps", t.fps},
            {"batch_size", t.batch_size},         {"epochs", t.epochs},
            {"max_steps", t.max_steps},           {"time_budget_s", t.time_budget_s},
            {"learning_rate", t.learning_rate},   {"mirror_prob", t.mirror_prob},
            {"shuffle_frac", t.shuffle_frac},     {"val_fraction", t.val_fraction},
            {"test_fraction", t.test_fraction},   {"seed", t.seed},
            {"eval_every", t.eval_every},         {"eval_windows", t.eval_windows},
            {"net", net_json(t.net)}};
}

json solver_json(const SolverConfig& s) {
    return {{"method", method_name(s.method)},
            {"max_iterations", s.max_iterations},
            {"tolerance", s.tolerance},
            {"armijo_c", s.armijo_c},
            {"shrink", s.shrink},
            {"divergence_window", s.divergence_window},
            {"lbfgs_history", s.lbfgs_history},
            {"max_displacement", s.max_displacement},
            {"gravity", s.gravity},
            {"energy_scale", s.energy_scale},
            {"pinned", s.pinned}};
}

json io_json(const IoConfig& io) {
    return {{"out_dir", io.out_dir.string()},
            {"checkpoint", io.checkpoint.string()},
            {"log", io.log.string()},
            {"motion", io.motion.string()},
            {"motion_action", io.motion_action},
            {"motion_frames", io.motion_frames},
            {"motion_seed", io.motion_seed},
            {"dataset_dir", io.dataset_dir.string()},
            {"dataset_frames", io.dataset_frames},
            {"sequence_frames", io.sequence_frames},
            {"dataset_seed", io.dataset_seed},
            {"write_body", io.write_body}};
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

bool known_action(const std::string& a) {
    return std::find(std::begin(synth::kActions), std::end(synth::kActions), a) != std::end(synth::kActions);
}

}  // namespace

std::filesystem::path Config::log_path() const { return io.log.empty() ? io.out_dir / "metrics.jsonl" : io.log; }

Config parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError("<root>", std::string("invalid JSON: ") + e.what());
    }
    Config cfg;
    Section root(doc, "");

    {
        Section s = root.child("garment");
        s.get("synthetic", cfg.garment.synthetic);
        s.get("dense_dofs", cfg.garment.dense_dofs);
        s.get("obj", cfg.garment.obj);
        s.get("weights", cfg.garment.weights);
        s.finish();
        const auto& g = cfg.garment;
        if (g.synthetic != "pendulum" && g.synthetic != "dense" && !g.synthetic.empty())
            throw SchemaError("garment.synthetic", "expected \"pendulum\", \"dense\" or \"\"");
        if (g.synthetic.empty() && g.obj.empty()) throw SchemaError("garment.obj", "required without synthetic");
        if (g.synthetic == "dense" && g.dense_dofs < 9) throw SchemaError("garment.dense_dofs", "must be >= 9");
    }
    {
        Section s = root.child("body");
        s.get("synthetic", cfg.body.synthetic);
        s.get("skeleton", cfg.body.skeleton);
        s.get("obj", cfg.body.obj);
        s.get("weights", cfg.body.weights);
        s.finish();
        const auto& b = cfg.body;
        if (b.synthetic != "pendulum" && !b.synthetic.empty())
            throw SchemaError("body.synthetic", "expected \"pendulum\" or \"\"");
        if (b.synthetic.empty()) {
            if (b.skeleton.empty()) throw SchemaError("body.skeleton", "required without synthetic");
            if (b.obj.empty()) throw SchemaError("body.obj", "required without synthetic");
            if (b.weights.empty()) throw SchemaError("body.weights", "required without synthetic");
        }
        if (!b.synthetic.empty() && cfg.garment.synthetic.empty())
            throw SchemaError("body.synthetic", "a garment from files needs a body from files");
        if (b.synthetic.empty() && !cfg.garment.synthetic.empty())
            throw SchemaError("garment.synthetic", "synthetic garments need the synthetic body");
    }
    {
        Section s = root.child("fabric");
        FabricParams& f = cfg.fabric;
        s.get("density", f.density);
        s.get("k_stretch", f.k_stretch);
        s.get("k_shear", f.k_shear);
        s.get("k_bend", f.k_bend);
        s.get("k_collision", f.k_collision);
        s.get("collision_eps", f.collision_eps);
        std::string material = material_name(f.material);
        s.get("material", material);
        checked("fabric.material", [&] { f.material = parse_material(material); });
        s.get("lame_mu", f.lame_mu);
        s.get("lame_lambda", f.lame_lambda);
        s.finish();
        checked("fabric", [&] { f.validate(); });
    }
    {
        Section s = root.child("train");
        TrainConfig& t = cfg.train;
        s.get("window_seconds", t.window_seconds);
        s.get("fps", t.fps);
        s.get("batch_size", t.batch_size);
        s.get("epochs", t.epochs);
        s.get("max_steps", t.max_steps);
        s.get("time_budget_s", t.time_budget_s);
        s.get("learning_rate", t.learning_rate);
        s.get("mirror_prob", t.mirror_prob);
        s.get("shuffle_frac", t.shuffle_frac);
        s.get("val_fraction", t.val_fraction);
        s.get("test_fraction", t.test_fraction);
        s.get("seed", t.seed);
        s.get("eval_every", t.eval_every);
        s.get("eval_windows", t.eval_windows);
        {
            Section n = s.child("net");
            n.get("latent", t.net.latent);
            n.get("static_hidden", t.net.static_hidden);
            n.get("joint_hidden", t.net.joint_hidden);
            n.get("dynamic_hidden", t.net.dynamic_hidden);
            n.get("dynamic_input", t.net.dynamic_input);
            n.get("decoder_hidden1", t.net.decoder_hidden1);
            n.get("decoder_hidden2", t.net.decoder_hidden2);
            n.get("output_scale", t.net.output_scale);
            n.finish();
            NetDims probe = t.net;
            probe.joints = probe.vertices = 1;
            checked("train.net", [&] { probe.validate(); });
        }
        s.finish();
        checked("train", [&] { t.validate(); });
    }
    {
        Section s = root.child("solver");
        SolverConfig& v = cfg.solver;
        std::string method = method_name(v.method);
        s.get("method", method);
        checked("solver.method", [&] { v.method = parse_solver_method(method); });
        s.get("max_iterations", v.max_iterations);
        s.get("tolerance", v.tolerance);
        s.get("armijo_c", v.armijo_c);
        s.get("shrink", v.shrink);
        s.get("divergence_window", v.divergence_window);
        s.get("lbfgs_history", v.lbfgs_history);
        s.get("max_displacement", v.max_displacement);
        s.get("gravity", v.gravity);
        s.get("energy_scale", v.energy_scale);
        s.get("pinned", v.pinned);
        s.finish();
        checked("solver", [&] { v.validate(); });
    }
    {
        Section s = root.child("io");
        IoConfig& io = cfg.io;
        s.get("out_dir", io.out_dir);
        s.get("checkpoint", io.checkpoint);
        s.get("log", io.log);
        s.get("motion", io.motion);
        s.get("motion_action", io.motion_action);
        s.get("motion_frames", io.motion_frames);
        s.get("motion_seed", io.motion_seed);
        s.get("dataset_dir", io.dataset_dir);
        s.get("dataset_frames", io.dataset_frames);
        s.get("sequence_frames", io.sequence_frames);
        s.get("dataset_seed", io.dataset_seed);
        s.get("write_body", io.write_body);
        s.finish();
        if (io.out_dir.empty()) throw SchemaError("io.out_dir", "must not be empty");
        if (io.checkpoint.empty()) throw SchemaError("io.checkpoint", "must not be empty");
        if (!known_action(io.motion_action)) throw SchemaError("io.motion_action", "unknown action");
        if (io.motion_frames < 1) throw SchemaError("io.motion_frames", "must be >= 1");
        if (io.sequence_frames < 3) throw SchemaError("io.sequence_frames", "must be >= 3");
        if (io.dataset_frames < io.sequence_frames)
            throw SchemaError("io.dataset_frames", "must be >= io.sequence_frames");
    }
    root.finish();

    json canon;
    canon["garment"] = garment_json(cfg.garment);
    canon["body"] = body_json(cfg.body);
    canon["fabric"] = fabric_json(cfg.fabric);
    canon["train"] = train_json(cfg.train);
    canon["solver"] = solver_json(cfg.solver);
    canon["io"] = io_json(cfg.io);
    cfg.canonical = canon.dump();

    for (auto* p : {&cfg.garment.obj, &cfg.garment.weights, &cfg.body.skeleton, &cfg.body.obj, &cfg.body.weights,
                    &cfg.io.out_dir, &cfg.io.checkpoint, &cfg.io.log, &cfg.io.motion, &cfg.io.dataset_dir})
        *p = resolve(*p, base_dir);
    return cfg;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw AssetError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

std::string model_hash(const Config& cfg) {
    const json canon = json::parse(cfg.canonical);
    json model;
    model["garment"] = canon["garment"];
    model["body"] = canon["body"];
    model["fabric"] = canon["fabric"];
    model["fps"] = canon["train"]["fps"];
    model["net"] = canon["train"]["net"];
    return config_hash(model.dump());
}

Scene build_scene(const Config& cfg) {
    if (cfg.garment.synthetic == "pendulum") return synth::pendulum_scene(cfg.fabric);
    if (cfg.garment.synthetic == "dense") return synth::dense_scene(cfg.garment.dense_dofs, cfg.fabric);
    BodyModel body = load_body(cfg.body.skeleton, cfg.body.obj, cfg.body.weights);
    GarmentMesh garment = load_garment(cfg.garment.obj, cfg.garment.weights, cfg.fabric);
    return make_scene(std::move(body), std::move(garment));
}

PoseSequence load_motion(const Config& cfg, const Skeleton& skel) {
    if (cfg.io.motion.empty())
        return synth::pendulum_motion(skel, cfg.io.motion_action, cfg.io.motion_frames, cfg.train.fps,
                                      cfg.io.motion_seed);
    PoseSequence seq = read_pose_sequence(cfg.io.motion, skel);
    if (std::abs(seq.fps - cfg.train.fps) > 1e-9 * cfg.train.fps) seq = resample_slerp(seq, cfg.train.fps);
    return seq;
}

std::vector<PoseSequence> load_dataset(const Config& cfg, const Skeleton& skel) {
    if (cfg.io.dataset_dir.empty())
        return synth::pendulum_dataset(skel, cfg.io.dataset_frames, cfg.io.sequence_frames, cfg.train.fps,
                                       cfg.io.dataset_seed);
    if (!std::filesystem::is_directory(cfg.io.dataset_dir))
        throw AssetError("dataset directory not found: " + cfg.io.dataset_dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(cfg.io.dataset_dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw AssetError("no pose files in " + cfg.io.dataset_dir.string());
    std::vector<PoseSequence> out;
    for (const auto& f : files) {
        PoseSequence seq = read_pose_sequence(f, skel);
        if (std::abs(seq.fps - cfg.train.fps) > 1e-9 * cfg.train.fps) seq = resample_slerp(seq, cfg.train.fps);
        if (seq.name.empty()) seq.name = f.stem().string();
        if (seq.action.empty()) seq.action = seq.name;
        out.push_back(std::move(seq));
    }
    return out;
}

}  // namespace ncs
