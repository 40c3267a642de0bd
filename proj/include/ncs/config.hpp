#pragma once

#include "ncs/oracle.hpp"
#include "ncs/scene.hpp"
#include "ncs/train.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ncs {

// Config violation at a dotted key path, e.g. "fabric.k_strech".
struct SchemaError : ConfigError {
    SchemaError(const std::string& key_path, const std::string& what)
        : ConfigError(key_path + ": " + what), key_path(key_path) {}
    std::string key_path;
};

// Either a built-in synthetic asset or files on disk.
struct GarmentConfig {
    std::string synthetic = "pendulum";  // "pendulum", "dense" or "" for files
    int dense_dofs = 10000;
    std::filesystem::path obj;
    std::filesystem::path weights;  // optional; transferred from the body when empty
};

struct BodyConfig {
    std::string synthetic = "pendulum";
    std::filesystem::path skeleton, obj, weights;
};

struct IoConfig {
    std::filesystem::path out_dir = "out";
    std::filesystem::path checkpoint = "model.ckpt";
    std::filesystem::path log;  // JSON-lines; out_dir/metrics.jsonl when empty
    // Motion for drape / simulate / infer: a pose file, or a synthetic action.
    std::filesystem::path motion;
    std::string motion_action = "swing";
    int motion_frames = 90;
    std::uint64_t motion_seed = 0;
    // Training data: every *.json pose file in dataset_dir, or a synthetic set.
    std::filesystem::path dataset_dir;
    int dataset_frames = 2000;
    int sequence_frames = 50;
    std::uint64_t dataset_seed = 1;
    bool write_body = false;  // body meshes next to the garment frames
};

struct Config {
    GarmentConfig garment;
    BodyConfig body;
    FabricParams fabric;
    TrainConfig train;
    SolverConfig solver;
    IoConfig io;
    std::string canonical;  // normalised JSON of the whole config, hashed into checkpoints

    std::filesystem::path log_path() const;
};

// Relative paths resolve against base_dir. Throws SchemaError.
Config parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
Config load_config(const std::filesystem::path& path);  // AssetError when unreadable

// Hash of the parts a checkpoint depends on: garment, body, fabric and network sizes.
std::string model_hash(const Config& cfg);

Scene build_scene(const Config& cfg);
PoseSequence load_motion(const Config& cfg, const Skeleton& skel);  // at train.fps
std::vector<PoseSequence> load_dataset(const Config& cfg, const Skeleton& skel);

}  // namespace ncs
