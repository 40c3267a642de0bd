#include "ncs/config.hpp"
#include "ncs/gradcheck.hpp"
#include "ncs/net.hpp"
#include "ncs/oracle.hpp"
#include "ncs/synth.hpp"
#include "ncs/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ncs;

namespace {

enum Exit { kOk = 0, kFailure = 1, kAsset = 2, kSolver = 3, kSchema = 4 };

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string frame_name(const char* prefix, int i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%06d.obj", prefix, i);
    return buf;
}

struct Loaded {
    Config cfg;
    Scene scene;
};

// Everything that can fail on bad input happens here, before any output exists.
Loaded load(const std::string& config_path, const std::string& out_override) {
    Config cfg = load_config(config_path);
    if (!out_override.empty()) cfg.io.out_dir = out_override;
    Scene scene = build_scene(cfg);
    return {std::move(cfg), std::move(scene)};
}

void prepare_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw AssetError("cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_log(const fs::path& path) {
    if (path.has_parent_path()) prepare_dir(path.parent_path());
    std::ofstream out(path);
    if (!out) throw AssetError("cannot write " + path.string());
    return out;
}

void write_frame(const Loaded& l, int i, const Positions& garment, const Pose* pose) {
    write_obj(l.cfg.io.out_dir / frame_name("frame", i), garment, l.scene.cloth.mesh.faces);
    if (l.cfg.io.write_body && pose) {
        const PosedBody body = pose_body(l.scene.body, *pose);
        write_obj(l.cfg.io.out_dir / frame_name("body", i), body.skin_vertices, l.scene.body.faces);
    }
}

// State dump: {"vertices": N, "frames": [[x0, y0, z0, x1, ...], ...]}.
void write_state_dump(const fs::path& path, const std::vector<Positions>& frames) {
    nlohmann::json j;
    j["vertices"] = frames.empty() ? 0 : frames[0].rows();
    j["frames"] = nlohmann::json::array();
    for (const Positions& x : frames) j["frames"].push_back(std::vector<double>(x.data(), x.data() + x.size()));
    std::ofstream out(path);
    if (!out) throw AssetError("cannot write " + path.string());
    out << j.dump() << "\n";
}

std::vector<Positions> read_state_dump(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw AssetError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw AssetError("bad state dump " + path.string() + ": " + e.what());
    }
    if (!j.contains("vertices") || !j.contains("frames")) throw AssetError("bad state dump " + path.string());
    const auto n = j["vertices"].get<Eigen::Index>();
    std::vector<Positions> out;
    for (const auto& f : j["frames"]) {
        const auto v = f.get<std::vector<double>>();
        if (static_cast<Eigen::Index>(v.size()) != 3 * n) throw AssetError("bad frame size in " + path.string());
        out.push_back(Eigen::Map<const Positions>(v.data(), n, 3));
    }
    return out;
}

int cmd_drape(const std::string& config, const std::string& out) {
    const Loaded l = load(config, out);
    const PoseSequence motion = load_motion(l.cfg, l.scene.skeleton());
    const auto start = Clock::now();
    const DrapeResult r = drape_static(l.scene, motion.frames.front(), l.cfg.solver);
    prepare_dir(l.cfg.io.out_dir);
    std::ofstream log = open_log(l.cfg.log_path());
    write_frame(l, 0, r.state.x, &motion.frames.front());
    log << metrics_record(0, "drape", r.report.metrics, ms_since(start)) << "\n";
    std::cout << "drape: " << r.stats.iterations << " iterations, residual " << r.stats.residual << " N, energy "
              << r.report.total << " J\n";
    return kOk;
}

int cmd_simulate(const std::string& config, const std::string& out, const std::string& dump) {
    const Loaded l = load(config, out);
    const PoseSequence motion = load_motion(l.cfg, l.scene.skeleton());
    const auto start = Clock::now();
    const SimulationResult r = simulate_sequence(l.scene, motion, l.cfg.solver);
    prepare_dir(l.cfg.io.out_dir);
    std::ofstream log = open_log(l.cfg.log_path());
    std::vector<Positions> frames;
    for (std::size_t i = 0; i < r.states.size(); ++i) {
        write_frame(l, static_cast<int>(i), r.states[i].x, &motion.frames[i]);
        log << metrics_record(static_cast<int>(i), "simulate", r.reports[i].metrics, ms_since(start)) << "\n";
        frames.push_back(r.states[i].x);
    }
    if (!dump.empty()) write_state_dump(dump, frames);
    std::cout << "simulate: " << r.states.size() << " frames\n";
    return kOk;
}

int cmd_train(const std::string& config, const std::string& out) {
    const Loaded l = load(config, out);
    const auto sequences = load_dataset(l.cfg, l.scene.skeleton());
    const std::string hash = model_hash(l.cfg);
    prepare_dir(l.cfg.io.out_dir);
    if (l.cfg.io.checkpoint.has_parent_path()) prepare_dir(l.cfg.io.checkpoint.parent_path());
    std::ofstream log = open_log(l.cfg.log_path());
    TrainCallbacks cb;
    cb.log = &log;
    cb.on_epoch = [&](int step, const NetParams& params) {
        save_checkpoint(l.cfg.io.checkpoint, params, hash);
        std::cout << "epoch done at step " << step << "\n";
    };
    const TrainResult r = train(l.scene, sequences, l.cfg.train, cb);
    save_checkpoint(l.cfg.io.checkpoint, r.params, hash);
    std::cout << "train: " << r.steps << " steps, checkpoint " << l.cfg.io.checkpoint.string() << "\n";
    if (!r.validation.empty())
        std::cout << metrics_record(r.validation.back().first, "val", r.validation.back().second, 0.0) << "\n";
    return kOk;
}

NetParams load_model(const Loaded& l, const std::string& checkpoint) {
    const fs::path path = checkpoint.empty() ? l.cfg.io.checkpoint : fs::path(checkpoint);
    return load_checkpoint(path, network_dims(l.scene, l.cfg.train), model_hash(l.cfg));
}

int cmd_infer(const std::string& config, const std::string& out, const std::string& checkpoint, double w,
              const std::string& dump) {
    const Loaded l = load(config, out);
    if (w < 0.0 || w > 2.0) std::cerr << "warning: --motion-scale " << w << " is outside [0, 2]\n";
    const NetParams params = load_model(l, checkpoint);
    const PoseSequence motion = load_motion(l.cfg, l.scene.skeleton());
    prepare_dir(l.cfg.io.out_dir);
    std::ofstream log = open_log(l.cfg.log_path());
    InferenceSession session(params, l.scene, l.cfg.train.fps, w);
    const auto start = Clock::now();
    std::vector<Positions> frames;
    for (std::size_t i = 0; i < motion.frames.size(); ++i) {
        InferenceSession::Frame f;
        try {
            f = session.step(motion.frames[i]);
        } catch (const NumericsError& e) {
            throw SolverError(e.what(), static_cast<long>(i));
        }
        ClothState state{f.garment, std::nullopt, std::nullopt};
        if (frames.size() >= 2) {
            state.x_prev = frames[frames.size() - 1];
            state.x_prev2 = frames[frames.size() - 2];
        }
        const PosedBody body = pose_body(l.scene.body, motion.frames[i]);
        LossOptions opt;
        opt.dt = l.cfg.train.dt();
        opt.gravity_reference = gravity_reference(l.scene, motion.frames[i]);
        opt.with_gradient = false;
        const EnergyReport rep = total_loss(state, body.collider.get(), l.scene.cloth, opt);
        write_obj(l.cfg.io.out_dir / frame_name("frame", static_cast<int>(i)), f.garment, l.scene.cloth.mesh.faces);
        if (l.cfg.io.write_body)
            write_obj(l.cfg.io.out_dir / frame_name("body", static_cast<int>(i)), f.body, l.scene.body.faces);
        log << metrics_record(static_cast<int>(i), "infer", rep.metrics, ms_since(start)) << "\n";
        frames.push_back(f.garment);
    }
    if (!dump.empty()) write_state_dump(dump, frames);
    std::cout << "infer: " << frames.size() << " frames at motion scale " << w << "\n";
    return kOk;
}

int cmd_metrics(const std::string& config, const std::string& checkpoint, const std::string& split_name) {
    const Loaded l = load(config, "");
    const NetParams params = load_model(l, checkpoint);
    const auto sequences = load_dataset(l.cfg, l.scene.skeleton());
    const TrainConfig& t = l.cfg.train;
    const DatasetSplit split = split_sequences(sequences, t.val_fraction, t.test_fraction, t.seed);
    const std::vector<int>& ids = split_name == "train" ? split.train : split_name == "val" ? split.val : split.test;
    if (ids.empty()) throw ConfigError("split '" + split_name + "' is empty");
    const auto start = Clock::now();
    const auto windows = make_windows(sequences, t, ids);
    const Metrics m = evaluate_metrics(params, l.scene, windows);
    std::cout << metrics_record(0, split_name, m, ms_since(start)) << "\n";
    return kOk;
}

int cmd_gradcheck(std::uint64_t seed, int configurations) {
    const GradcheckReport r = gradient_check(seed, configurations);
    for (int k = 0; k < kEnergyTerms; ++k)
        std::cout << kEnergyTermNames[k] << " " << r.max_rel_error[k] << "\n";
    std::cout << "max relative error " << r.worst() << " over " << r.configurations << " configurations of "
              << r.vertices << " vertices\n";
    return r.worst() < 1e-4 ? kOk : kFailure;
}

int cmd_export(const std::string& config, const std::string& out, const std::string& states) {
    const Loaded l = load(config, out);
    const auto frames = read_state_dump(states);
    for (const Positions& x : frames)
        if (x.rows() != l.scene.num_vertices())
            throw AssetError("state dump has " + std::to_string(x.rows()) + " vertices, garment has " +
                             std::to_string(l.scene.num_vertices()));
    prepare_dir(l.cfg.io.out_dir);
    for (std::size_t i = 0; i < frames.size(); ++i) write_frame(l, static_cast<int>(i), frames[i], nullptr);
    std::cout << "export: " << frames.size() << " frames\n";
    return kOk;
}

// Writes the synthetic pendulum assets and a config that loads them from files.
int cmd_synth(const std::string& out, std::uint64_t seed, int frames, int sequence_frames) {
    const Scene scene = synth::pendulum_scene({});
    const Skeleton& skel = scene.skeleton();
    const fs::path dir = out;
    prepare_dir(dir / "motions");
    auto write_text = [](const fs::path& p, const std::string& text) {
        std::ofstream f(p);
        if (!f) throw AssetError("cannot write " + p.string());
        f << text;
    };
    write_text(dir / "skeleton.json", format_skeleton(skel));
    write_obj(dir / "body.obj", scene.body.rest_vertices, scene.body.faces);
    write_weights(dir / "body_weights.json", scene.body.weight_rows);
    write_obj(dir / "garment.obj", scene.cloth.mesh.vertices, scene.cloth.mesh.faces);
    write_weights(dir / "garment_weights.json", scene.cloth.mesh.blend_weights);
    const auto seqs = synth::pendulum_dataset(skel, frames, sequence_frames, 30.0, seed);
    for (const auto& s : seqs) write_text(dir / "motions" / (s.name + ".json"), format_pose_sequence(s, skel));
    nlohmann::ordered_json cfg;
    cfg["garment"] = {{"synthetic", ""}, {"obj", "garment.obj"}, {"weights", "garment_weights.json"}};
    cfg["body"] = {{"synthetic", ""}, {"skeleton", "skeleton.json"}, {"obj", "body.obj"},
                   {"weights", "body_weights.json"}};
    cfg["io"] = {{"dataset_dir", "motions"}, {"motion", "motions/" + seqs.front().name + ".json"}};
    write_text(dir / "config.json", cfg.dump(2) + "\n");
    std::cout << "synth: " << seqs.size() << " sequences in " << dir.string() << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural cloth simulation: oracle solver, training and inference"};
    app.require_subcommand(1);
    std::string config, out, checkpoint, dump, states, split = "val";
    double motion_scale = 1.0;
    std::uint64_t seed = 7;
    int configurations = 20, frames = 2000, sequence_frames = 50;

    auto add_config = [&](CLI::App* c) {
        c->add_option("-c,--config", config, "config JSON")->required();
        c->add_option("-o,--out", out, "output directory (overrides io.out_dir)");
    };
    auto* drape = app.add_subcommand("drape", "static drape at the first motion frame");
    add_config(drape);
    auto* simulate = app.add_subcommand("simulate", "oracle simulation of the motion");
    add_config(simulate);
    simulate->add_option("--dump", dump, "also write a state dump");
    auto* trn = app.add_subcommand("train", "train the network");
    add_config(trn);
    auto* infer = app.add_subcommand("infer", "run a trained network over the motion");
    add_config(infer);
    infer->add_option("--checkpoint", checkpoint, "checkpoint (default io.checkpoint)");
    infer->add_option("--motion-scale", motion_scale, "dynamic latent scale w");
    infer->add_option("--dump", dump, "also write a state dump");
    auto* metrics = app.add_subcommand("metrics", "evaluate a checkpoint on a dataset split");
    metrics->add_option("-c,--config", config, "config JSON")->required();
    metrics->add_option("--checkpoint", checkpoint, "checkpoint (default io.checkpoint)");
    metrics->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every energy term");
    gradcheck->add_option("--seed", seed, "random seed");
    gradcheck->add_option("--configs", configurations, "random configurations")->check(CLI::PositiveNumber);
    auto* exp = app.add_subcommand("export", "convert a state dump to OBJ frames");
    add_config(exp);
    exp->add_option("--states", states, "state dump")->required();
    auto* syn = app.add_subcommand("synth", "write the synthetic pendulum assets and a config");
    syn->add_option("-o,--out", out, "output directory")->required();
    syn->add_option("--seed", seed, "dataset seed");
    syn->add_option("--frames", frames, "total frames")->check(CLI::PositiveNumber);
    syn->add_option("--sequence-frames", sequence_frames, "frames per sequence")->check(CLI::Range(3, 1000000));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*drape) return cmd_drape(config, out);
        if (*simulate) return cmd_simulate(config, out, dump);
        if (*trn) return cmd_train(config, out);
        if (*infer) return cmd_infer(config, out, checkpoint, motion_scale, dump);
        if (*metrics) return cmd_metrics(config, checkpoint, split);
        if (*gradcheck) return cmd_gradcheck(seed, configurations);
        if (*exp) return cmd_export(config, out, states);
        if (*syn) return cmd_synth(out, seed, frames, sequence_frames);
    } catch (const SchemaError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kSchema;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kSchema;
    } catch (const AssetError& e) {
        std::cerr << "asset error: " << e.what() << "\n";
        return kAsset;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kAsset;
    } catch (const SolverError& e) {
        std::cerr << "solver error at frame " << e.frame << ": " << e.what() << "\n";
        return kSolver;
    } catch (const NumericsError& e) {
        std::cerr << "numerics error: " << e.what() << "\n";
        return kSolver;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
