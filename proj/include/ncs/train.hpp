#pragma once

#include "ncs/net.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ncs {

struct TrainConfig {
    double window_seconds = 0.5;
    double fps = 30.0;
    int batch_size = 32;
    int epochs = 10;
    int max_steps = 0;             // 0: run all epochs
    double time_budget_s = 0.0;    // 0: unlimited
    double learning_rate = 1e-4;
    double mirror_prob = 0.5;
    double shuffle_frac = 0.2;
    double val_fraction = 0.05;
    double test_fraction = 0.10;
    std::uint64_t seed = 0;
    int eval_every = 50;           // steps between validation passes; 0 disables
    int eval_windows = 64;         // validation windows per pass (evenly strided); 0 = all
    NetDims net;                   // joints / vertices are filled from the scene

    double dt() const { return 1.0 / fps; }
    // n: frames of history; a window holds n + 1 frames.
    int history_frames() const;
    void validate() const;  // ConfigError
};

struct MotionWindow {
    std::vector<Pose> frames;    // n + 1 poses, t - n ... t
    std::array<Pose, 2> lead_in;  // poses at t - n - 2, t - n - 1 (clamped), for the first descriptors
    double dt = 1.0 / 30.0;
    int sequence = -1;
    int t = 0;
};

// One window per frame t >= 2 of every sequence. Frames before the sequence
// start repeat its first frame.
std::vector<MotionWindow> make_windows(std::span<const PoseSequence> sequences, const TrainConfig& cfg,
                                       std::span<const int> which = {});

// Descriptors of a window's frames, history taken from the lead-in.
std::vector<DescriptorFrame> describe_window(const MotionWindow& window, const Skeleton& skel);

// Whole sequences per action: max(1, round(f * n)) for validation and test when
// an action has at least 3 sequences; otherwise all of them train.
struct DatasetSplit {
    std::vector<int> train, val, test;
};
DatasetSplit split_sequences(std::span<const PoseSequence> sequences, double val_fraction,
                             double test_fraction, std::uint64_t seed);

// Each window is mirrored with probability prob, all of its frames together.
// Returns the number mirrored.
int augment_mirror(std::vector<MotionWindow>& windows, double prob, const Skeleton& skel,
                   std::mt19937_64& rng);

// (target, source) pairs: target's z^D is replaced by source's. ceil(frac * B)
// targets, deranged among themselves. Empty for frac = 0 or B < 2.
std::vector<std::pair<int, int>> augment_motion_shuffle(int batch, double frac, std::mt19937_64& rng);

struct TrainingBatch {
    WindowBatch windows;
    std::vector<PosedBody> bodies;        // posed at t
    std::vector<double> gravity_refs;     // skinned-template gravity energy at t
};
TrainingBatch make_batch(const Scene& scene, std::span<const MotionWindow> windows);

// Per-row loss terms for batch_loss.
struct ItemTerms {
    const BodyCollider* collider = nullptr;
    double gravity_reference = 0.0;
    bool static_terms = true;
    bool inertia = true;
};

struct LossReport {
    TermEnergies energies;  // sums over rows
    Metrics metrics;        // sums over rows
    int rows = 0;
    double total = 0.0;

    TermEnergies mean_energies() const;
    Metrics mean_metrics() const;
};

// Sum over rows of the selected energies of x_t (B x 3N). History tensors may
// be undefined when no row uses inertia; when they require gradients the
// inertia term also differentiates through them.
ad::Tensor batch_loss(const ad::Tensor& x_t, const ad::Tensor& x_prev, const ad::Tensor& x_prev2,
                      const std::vector<ItemTerms>& items, const ClothModel& cloth, double dt,
                      LossReport* report = nullptr);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(std::vector<ad::Tensor> params, AdamConfig cfg);
    void step();
    int steps() const { return t_; }

private:
    std::vector<ad::Tensor> params_;
    AdamConfig cfg_;
    std::vector<Matrix> m_, v_;
    int t_ = 0;
};

struct StepReport {
    double loss = 0.0;       // mean over the batch
    TermEnergies energies;   // means
    Metrics metrics;         // means over the batch's x_t
    int augmented = 0;
    double wall_ms = 0.0;
};

// decode_triple, static terms on x_t, inertia on x_t with the history
// stopped, latent shuffle on a subset, one optimizer update.
StepReport train_step(NetParams& params, Adam& optimizer, const TrainingBatch& batch, const Scene& scene,
                      const TrainConfig& cfg, std::mt19937_64& rng);

// Averages over the windows; inertia uses the predicted history.
Metrics evaluate_metrics(const NetParams& params, const Scene& scene, std::span<const MotionWindow> windows);

// JSON-lines metrics record.
std::string metrics_record(int step, const std::string& split, const Metrics& m, double wall_ms);

struct TrainResult {
    NetParams params;
    int steps = 0;
    std::vector<std::pair<int, Metrics>> validation;  // (step, metrics), step 0 first
    DatasetSplit split;
};

struct TrainCallbacks {
    std::ostream* log = nullptr;  // JSON lines
    std::function<void(int step, const NetParams&)> on_epoch;
    std::function<void(int step, const StepReport&, const NetParams&)> on_step;
};

TrainResult train(const Scene& scene, std::span<const PoseSequence> sequences, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks = {});

// Network dims for a scene under a config.
NetDims network_dims(const Scene& scene, const TrainConfig& cfg);

}  // namespace ncs
