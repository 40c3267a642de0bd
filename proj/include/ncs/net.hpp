#pragma once

#include "ncs/autodiff.hpp"
#include "ncs/descriptors.hpp"
#include "ncs/energy.hpp"
#include "ncs/scene.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ncs {

using ad::Matrix;

struct NetDims {
    int joints = 0;    // active joints K
    int vertices = 0;  // garment vertices N
    int latent = 128;  // d, shared by z^S, z^D and the GRU hidden state
    int static_hidden = 256;
    int joint_hidden = 32;
    int dynamic_hidden = 256;
    int dynamic_input = 128;  // GRU input width
    int decoder_hidden1 = 256;
    int decoder_hidden2 = 512;
    double output_scale = 0.01;  // metres per decoder output unit

    void validate() const;  // ConfigError on a non-positive size or scale
    bool operator==(const NetDims&) const = default;
};

// A bias-free layer leaves bias undefined.
struct Layer {
    ad::Tensor weight;  // out x in
    ad::Tensor bias;    // 1 x out
    bool has_bias() const { return bias.defined(); }
};

// Each gate maps [h, x] (d + d_in) to d. No biases.
struct GruParams {
    ad::Tensor update, reset, candidate;
};

struct NetParams {
    NetDims dims;
    std::array<Layer, 4> static_encoder;
    std::array<Layer, 2> joint_layers;    // shared across joints
    std::array<Layer, 2> dynamic_layers;
    GruParams gru;
    std::array<Layer, 3> decoder;

    // Uniform fan-in initialisation; the decoder's last layer starts at zero.
    static NetParams create(const NetDims& dims, std::uint64_t seed);
    NetParams clone() const;  // deep copy of the values, fresh gradient slots

    struct Named {
        std::string name;
        ad::Tensor tensor;
    };
    std::vector<Named> named_parameters() const;
    std::vector<ad::Tensor> parameters() const;
    std::vector<ad::Tensor> encoder_parameters() const;  // static and dynamic
    std::vector<ad::Tensor> dynamic_encoder_parameters() const;
    std::vector<ad::Tensor> decoder_parameters() const;
    void zero_grad() const;
};

struct LatentCode {
    Matrix z_static;   // B x d
    Matrix z_dynamic;  // B x d
    double w = 1.0;

    Matrix combined() const { return z_static + w * z_dynamic; }
};

struct RecurrentState {
    Matrix gru_hidden;  // B x d
    static RecurrentState zeros(int batch, int latent) { return {Matrix::Zero(batch, latent)}; }
};

// Descriptors as network input rows.
Matrix flatten_static(const StaticDesc& desc);    // 1 x 9K
Matrix flatten_dynamic(const DynamicDesc& desc);  // 1 x 12K

ad::Tensor linear(const Layer& layer, const ad::Tensor& input);
ad::Tensor gru_cell(const GruParams& gru, const ad::Tensor& input, const ad::Tensor& hidden);

ad::Tensor encode_static(const NetParams& params, const ad::Tensor& static_desc);  // B x 9K -> B x d
// B x 12K descriptors and B x d hidden -> new hidden, which is z^D.
ad::Tensor encode_dynamic(const NetParams& params, const ad::Tensor& dynamic_desc,
                          const ad::Tensor& hidden);
// B x d -> B x 3N rest-space displacement.
ad::Tensor decode(const NetParams& params, const ad::Tensor& z);

// Row b of displacement (B x 3N) is added to the rest vertices and skinned with
// skins[b]. The skins must outlive the backward pass.
ad::Tensor skin_displacement(const ad::Tensor& displacement, const Positions& rest,
                             const std::vector<const std::vector<VertexSkin>*>& skins);

// Rolls the dynamic encoder over the window from a zero state and encodes the
// last frame statically.
LatentCode encode_window(const NetParams& params, std::span<const DescriptorFrame> window, double w = 1.0);

Positions decode_positions(const NetParams& params, const Scene& scene, const Matrix& z, const Pose& pose);

// Garment at the window's last frame. Throws NumericsError on non-finite output.
ClothState predict(const NetParams& params, const Scene& scene, std::span<const DescriptorFrame> window,
                   const Pose& pose_t, double w = 1.0);

// Batched windows of equal length for training. Frame i of every item is one
// row of static_desc[i] / dynamic_desc[i], oldest frame first.
struct WindowBatch {
    std::vector<Matrix> static_desc;   // frames x (B x 9K)
    std::vector<Matrix> dynamic_desc;  // frames x (B x 12K)
    // LBS maps of the last three frames per item: {t-2, t-1, t}.
    std::vector<std::array<std::vector<VertexSkin>, 3>> skins;

    int batch() const { return static_cast<int>(skins.size()); }
    int frames() const { return static_cast<int>(static_desc.size()); }
};

struct TripleOptions {
    // When false the history predictions stay in the graph. Only the
    // stop-gradient probe turns this off.
    bool stop_history_gradient = true;
};

struct Triple {
    ad::Tensor x_t, x_prev, x_prev2;  // B x 3N world positions
    ad::Tensor z_static, z_dynamic;   // codes at t
};

// One recurrent rollout decoded at the last three hidden states.
Triple decode_triple(const NetParams& params, const Positions& rest, const WindowBatch& batch,
                     const TripleOptions& options = {});

// Streaming inference: the recurrent state persists across calls.
class InferenceSession {
public:
    InferenceSession(const NetParams& params, const Scene& scene, double fps, double motion_scale = 1.0);

    struct Frame {
        Positions body;
        Positions garment;
    };
    Frame step(const Pose& pose);
    void reset();
    const Matrix& hidden() const { return hidden_; }

private:
    const NetParams& params_;
    const Scene& scene_;
    double dt_;
    double w_;
    Matrix hidden_;
    std::deque<Pose> history_;  // up to the two previous poses
};

// ---------------------------------------------------------------------------
// Checkpoints: magic, version, JSON header (dims, config hash, array shapes),
// then the raw little-endian doubles in header order.

struct Checkpoint {
    NetParams params;
    std::string config_hash;
};

std::string config_hash(const std::string& text);  // FNV-1a 64, hex

void save_checkpoint(const std::filesystem::path& path, const NetParams& params,
                     const std::string& config_hash);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Throws CheckpointError when the dims or the hash differ.
NetParams load_checkpoint(const std::filesystem::path& path, const NetDims& expected_dims,
                          const std::string& expected_hash);

}  // namespace ncs
