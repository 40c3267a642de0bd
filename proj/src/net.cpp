#include "ncs/net.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace ncs {

using json = nlohmann::json;

namespace {

Layer make_layer(int out, int in, bool bias, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(out, in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    Layer layer;
    layer.weight = ad::parameter(std::move(w));
    if (bias) layer.bias = ad::parameter(Matrix::Zero(1, out));
    return layer;
}

Layer he_layer(int out, int in, bool bias, std::mt19937_64& rng) {
    return make_layer(out, in, bias, std::sqrt(6.0 / in), rng);
}

Layer copy_layer(const Layer& l) {
    Layer out;
    out.weight = ad::parameter(l.weight.value());
    if (l.has_bias()) out.bias = ad::parameter(l.bias.value());
    return out;
}

void push_layer(std::vector<NetParams::Named>& out, const std::string& name, const Layer& l) {
    out.push_back({name + ".weight", l.weight});
    if (l.has_bias()) out.push_back({name + ".bias", l.bias});
}

void push_tensors(std::vector<ad::Tensor>& out, const Layer& l) {
    out.push_back(l.weight);
    if (l.has_bias()) out.push_back(l.bias);
}

void check_cols(const ad::Tensor& t, Eigen::Index cols, const char* what) {
    if (t.cols() != cols)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(cols) + " columns, got " +
                         std::to_string(t.cols()));
}

json dims_json(const NetDims& d) {
    return {{"joints", d.joints},
            {"vertices", d.vertices},
            {"latent", d.latent},
            {"static_hidden", d.static_hidden},
            {"joint_hidden", d.joint_hidden},
            {"dynamic_hidden", d.dynamic_hidden},
            {"dynamic_input", d.dynamic_input},
            {"decoder_hidden1", d.decoder_hidden1},
            {"decoder_hidden2", d.decoder_hidden2},
            {"output_scale", d.output_scale}};
}

NetDims dims_from_json(const json& j) {
    NetDims d;
    d.joints = j.at("joints");
    d.vertices = j.at("vertices");
    d.latent = j.at("latent");
    d.static_hidden = j.at("static_hidden");
    d.joint_hidden = j.at("joint_hidden");
    d.dynamic_hidden = j.at("dynamic_hidden");
    d.dynamic_input = j.at("dynamic_input");
    d.decoder_hidden1 = j.at("decoder_hidden1");
    d.decoder_hidden2 = j.at("decoder_hidden2");
    d.output_scale = j.at("output_scale");
    return d;
}

constexpr char kMagic[8] = {'N', 'C', 'S', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void NetDims::validate() const {
    const int sizes[] = {joints,         vertices,        latent,         static_hidden, joint_hidden,
                         dynamic_hidden, dynamic_input,   decoder_hidden1, decoder_hidden2};
    for (int s : sizes)
        if (s <= 0) throw ConfigError("network dimensions must be positive");
    if (!(output_scale > 0.0)) throw ConfigError("network output scale must be > 0");
}

NetParams NetParams::create(const NetDims& dims, std::uint64_t seed) {
    dims.validate();
    std::mt19937_64 rng(seed);
    NetParams p;
    p.dims = dims;
    const int k = dims.joints, d = dims.latent;
    p.static_encoder[0] = he_layer(dims.static_hidden, 9 * k, true, rng);
    p.static_encoder[1] = he_layer(dims.static_hidden, dims.static_hidden, true, rng);
    p.static_encoder[2] = he_layer(dims.static_hidden, dims.static_hidden, true, rng);
    p.static_encoder[3] = he_layer(d, dims.static_hidden, true, rng);
    p.joint_layers[0] = he_layer(dims.joint_hidden, 12, false, rng);
    p.joint_layers[1] = he_layer(dims.joint_hidden, dims.joint_hidden, false, rng);
    p.dynamic_layers[0] = he_layer(dims.dynamic_hidden, dims.joint_hidden * k, false, rng);
    p.dynamic_layers[1] = he_layer(dims.dynamic_input, dims.dynamic_hidden, false, rng);
    const int gin = d + dims.dynamic_input;
    const double gbound = 1.0 / std::sqrt(static_cast<double>(gin));
    p.gru.update = make_layer(d, gin, false, gbound, rng).weight;
    p.gru.reset = make_layer(d, gin, false, gbound, rng).weight;
    p.gru.candidate = make_layer(d, gin, false, gbound, rng).weight;
    p.decoder[0] = he_layer(dims.decoder_hidden1, d, true, rng);
    p.decoder[1] = he_layer(dims.decoder_hidden2, dims.decoder_hidden1, true, rng);
    p.decoder[2].weight = ad::parameter(Matrix::Zero(3 * dims.vertices, dims.decoder_hidden2));
    p.decoder[2].bias = ad::parameter(Matrix::Zero(1, 3 * dims.vertices));
    return p;
}

NetParams NetParams::clone() const {
    NetParams p;
    p.dims = dims;
    for (int i = 0; i < 4; ++i) p.static_encoder[i] = copy_layer(static_encoder[i]);
    for (int i = 0; i < 2; ++i) p.joint_layers[i] = copy_layer(joint_layers[i]);
    for (int i = 0; i < 2; ++i) p.dynamic_layers[i] = copy_layer(dynamic_layers[i]);
    p.gru.update = ad::parameter(gru.update.value());
    p.gru.reset = ad::parameter(gru.reset.value());
    p.gru.candidate = ad::parameter(gru.candidate.value());
    for (int i = 0; i < 3; ++i) p.decoder[i] = copy_layer(decoder[i]);
    return p;
}

std::vector<NetParams::Named> NetParams::named_parameters() const {
    std::vector<Named> out;
    for (int i = 0; i < 4; ++i) push_layer(out, "static_encoder." + std::to_string(i), static_encoder[i]);
    for (int i = 0; i < 2; ++i) push_layer(out, "dynamic_encoder.joint." + std::to_string(i), joint_layers[i]);
    for (int i = 0; i < 2; ++i) push_layer(out, "dynamic_encoder.fc." + std::to_string(i), dynamic_layers[i]);
    out.push_back({"dynamic_encoder.gru.update", gru.update});
    out.push_back({"dynamic_encoder.gru.reset", gru.reset});
    out.push_back({"dynamic_encoder.gru.candidate", gru.candidate});
    for (int i = 0; i < 3; ++i) push_layer(out, "decoder." + std::to_string(i), decoder[i]);
    return out;
}

std::vector<ad::Tensor> NetParams::parameters() const {
    std::vector<ad::Tensor> out;
    for (const auto& n : named_parameters()) out.push_back(n.tensor);
    return out;
}

std::vector<ad::Tensor> NetParams::dynamic_encoder_parameters() const {
    std::vector<ad::Tensor> out;
    for (const auto& l : joint_layers) push_tensors(out, l);
    for (const auto& l : dynamic_layers) push_tensors(out, l);
    out.push_back(gru.update);
    out.push_back(gru.reset);
    out.push_back(gru.candidate);
    return out;
}

std::vector<ad::Tensor> NetParams::encoder_parameters() const {
    std::vector<ad::Tensor> out;
    for (const auto& l : static_encoder) push_tensors(out, l);
    for (const auto& t : dynamic_encoder_parameters()) out.push_back(t);
    return out;
}

std::vector<ad::Tensor> NetParams::decoder_parameters() const {
    std::vector<ad::Tensor> out;
    for (const auto& l : decoder) push_tensors(out, l);
    return out;
}

void NetParams::zero_grad() const { ad::zero_grad(parameters()); }

Matrix flatten_static(const StaticDesc& desc) {
    return Eigen::Map<const Matrix>(desc.data(), 1, desc.size());
}

Matrix flatten_dynamic(const DynamicDesc& desc) {
    return Eigen::Map<const Matrix>(desc.data(), 1, desc.size());
}

ad::Tensor linear(const Layer& layer, const ad::Tensor& input) {
    return ad::linear(input, layer.weight, layer.has_bias() ? &layer.bias : nullptr);
}

ad::Tensor gru_cell(const GruParams& gru, const ad::Tensor& input, const ad::Tensor& hidden) {
    if (input.rows() != hidden.rows()) throw ShapeError("gru_cell: batch sizes differ");
    check_cols(hidden, gru.update.rows(), "gru_cell hidden");
    check_cols(input, gru.update.cols() - gru.update.rows(), "gru_cell input");
    const ad::Tensor hx = ad::concat_cols(hidden, input);
    const ad::Tensor u = ad::sigmoid(ad::linear(hx, gru.update));
    const ad::Tensor r = ad::sigmoid(ad::linear(hx, gru.reset));
    const ad::Tensor c = ad::tanh(ad::linear(ad::concat_cols(ad::mul(r, hidden), input), gru.candidate));
    return ad::add(ad::mul(ad::one_minus(u), hidden), ad::mul(u, c));
}

ad::Tensor encode_static(const NetParams& params, const ad::Tensor& static_desc) {
    check_cols(static_desc, 9 * params.dims.joints, "encode_static");
    ad::Tensor h = static_desc;
    for (int i = 0; i < 3; ++i) h = ad::relu(linear(params.static_encoder[i], h));
    return linear(params.static_encoder[3], h);
}

ad::Tensor encode_dynamic(const NetParams& params, const ad::Tensor& dynamic_desc,
                          const ad::Tensor& hidden) {
    const int k = params.dims.joints;
    check_cols(dynamic_desc, 12 * k, "encode_dynamic");
    const Eigen::Index b = dynamic_desc.rows();
    ad::Tensor h = ad::reshape(dynamic_desc, b * k, 12);
    for (const auto& l : params.joint_layers) h = ad::relu(linear(l, h));
    h = ad::reshape(h, b, static_cast<Eigen::Index>(k) * params.dims.joint_hidden);
    for (const auto& l : params.dynamic_layers) h = ad::relu(linear(l, h));
    return gru_cell(params.gru, h, hidden);
}

ad::Tensor decode(const NetParams& params, const ad::Tensor& z) {
    check_cols(z, params.dims.latent, "decode");
    ad::Tensor h = ad::relu(linear(params.decoder[0], z));
    h = ad::relu(linear(params.decoder[1], h));
    return ad::scale(linear(params.decoder[2], h), params.dims.output_scale);
}

ad::Tensor skin_displacement(const ad::Tensor& displacement, const Positions& rest,
                             const std::vector<const std::vector<VertexSkin>*>& skins) {
    const Eigen::Index n = rest.rows();
    check_cols(displacement, 3 * n, "skin_displacement");
    if (displacement.rows() != static_cast<Eigen::Index>(skins.size()))
        throw ShapeError("skin_displacement: one skin per batch row required");
    const Eigen::Index b = displacement.rows();
    Matrix out(b, 3 * n);
    for (Eigen::Index r = 0; r < b; ++r) {
        const auto& skin = *skins[r];
        if (static_cast<Eigen::Index>(skin.size()) != n) throw ShapeError("skin_displacement: skin size");
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vec3 p = rest.row(i).transpose() + displacement.value().row(r).segment<3>(3 * i).transpose();
            out.row(r).segment<3>(3 * i) = (skin[i].linear * p + skin[i].offset).transpose();
        }
    }
    return ad::custom(std::move(out), {displacement},
                      [skins, n](const Matrix& g, std::vector<Matrix*>& grads) {
                          Matrix& gd = *grads[0];
                          for (Eigen::Index r = 0; r < gd.rows(); ++r) {
                              const auto& skin = *skins[r];
                              for (Eigen::Index i = 0; i < n; ++i)
                                  gd.row(r).segment<3>(3 * i) =
                                      (skin[i].linear.transpose() * g.row(r).segment<3>(3 * i).transpose())
                                          .transpose();
                          }
                      });
}

LatentCode encode_window(const NetParams& params, std::span<const DescriptorFrame> window, double w) {
    if (window.empty()) throw ConfigError("prediction window is empty");
    ad::NoGradGuard no_grad;
    ad::Tensor h = ad::constant(Matrix::Zero(1, params.dims.latent));
    for (const auto& f : window)
        h = encode_dynamic(params, ad::constant(flatten_dynamic(f.dynamic_desc)), h);
    LatentCode code;
    code.z_static = encode_static(params, ad::constant(flatten_static(window.back().static_desc))).value();
    code.z_dynamic = h.value();
    code.w = w;
    return code;
}

Positions decode_positions(const NetParams& params, const Scene& scene, const Matrix& z, const Pose& pose) {
    ad::NoGradGuard no_grad;
    const Matrix disp = decode(params, ad::constant(z)).value();
    if (!disp.allFinite()) throw NumericsError("network output is not finite");
    const Positions d = Eigen::Map<const Positions>(disp.data(), params.dims.vertices, 3);
    return skin_garment(scene, pose, &d);
}

ClothState predict(const NetParams& params, const Scene& scene, std::span<const DescriptorFrame> window,
                   const Pose& pose_t, double w) {
    if (params.dims.vertices != scene.num_vertices())
        throw ShapeError("network vertex count does not match the garment");
    const LatentCode code = encode_window(params, window, w);
    ClothState state;
    state.x = decode_positions(params, scene, code.combined(), pose_t);
    return state;
}

Triple decode_triple(const NetParams& params, const Positions& rest, const WindowBatch& batch,
                     const TripleOptions& options) {
    const int frames = batch.frames();
    if (frames < 3) throw ConfigError("decode_triple needs a window of at least 3 frames");
    if (static_cast<int>(batch.dynamic_desc.size()) != frames)
        throw ShapeError("decode_triple: static and dynamic frame counts differ");
    const int b = batch.batch();
    ad::Tensor h = ad::constant(Matrix::Zero(b, params.dims.latent));
    std::array<ad::Tensor, 3> hidden;  // at t-2, t-1, t
    for (int i = 0; i < frames; ++i) {
        h = encode_dynamic(params, ad::constant(batch.dynamic_desc[i]), h);
        if (i >= frames - 3) hidden[i - (frames - 3)] = h;
    }

    std::array<ad::Tensor, 3> x;
    std::array<ad::Tensor, 3> zs;
    for (int k = 0; k < 3; ++k) {
        std::vector<const std::vector<VertexSkin>*> skins(b);
        for (int r = 0; r < b; ++r) skins[r] = &batch.skins[r][k];
        const ad::Tensor s = ad::constant(batch.static_desc[frames - 3 + k]);
        if (k < 2 && options.stop_history_gradient) {
            ad::NoGradGuard no_grad;
            zs[k] = encode_static(params, s);
            x[k] = skin_displacement(decode(params, ad::add(zs[k], ad::detach(hidden[k]))), rest, skins);
        } else {
            zs[k] = encode_static(params, s);
            x[k] = skin_displacement(decode(params, ad::add(zs[k], hidden[k])), rest, skins);
        }
    }
    return {x[2], x[1], x[0], zs[2], hidden[2]};
}

InferenceSession::InferenceSession(const NetParams& params, const Scene& scene, double fps,
                                   double motion_scale)
    : params_(params), scene_(scene), dt_(1.0 / fps), w_(motion_scale) {
    if (!(fps > 0.0)) throw ConfigError("inference fps must be > 0");
    if (params.dims.vertices != scene.num_vertices())
        throw ShapeError("network vertex count does not match the garment");
    reset();
}

void InferenceSession::reset() {
    hidden_ = Matrix::Zero(1, params_.dims.latent);
    history_.clear();
}

InferenceSession::Frame InferenceSession::step(const Pose& pose) {
    const Skeleton& skel = scene_.skeleton();
    const Pose& prev = history_.empty() ? pose : history_.back();
    const Pose& prev2 = history_.size() < 2 ? prev : history_.front();
    const std::array<Pose, 3> win{prev2, prev, pose};
    const DynamicDesc dyn = dynamic_descriptor(std::span<const Pose, 3>(win), dt_, skel);
    const StaticDesc stat = static_descriptor(pose, skel);

    ad::NoGradGuard no_grad;
    hidden_ = encode_dynamic(params_, ad::constant(flatten_dynamic(dyn)), ad::constant(hidden_)).value();
    const Matrix zs = encode_static(params_, ad::constant(flatten_static(stat))).value();
    const Matrix disp = decode(params_, ad::constant(Matrix(zs + w_ * hidden_))).value();
    if (!disp.allFinite()) throw NumericsError("network output is not finite");

    const auto globals = forward_kinematics(skel, pose);
    Frame out;
    const Positions d = Eigen::Map<const Positions>(disp.data(), params_.dims.vertices, 3);
    out.garment = apply_skinning(garment_skin(scene_, globals), scene_.cloth.mesh.vertices + d);
    const auto& body = scene_.body;
    out.body = apply_skinning(blend_skinning(body.weights, skinning_transforms(globals, body.rest)),
                              body.rest_vertices);

    history_.push_back(pose);
    if (history_.size() > 2) history_.pop_front();
    return out;
}

// ---------------------------------------------------------------------------

std::string config_hash(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void save_checkpoint(const std::filesystem::path& path, const NetParams& params,
                     const std::string& hash) {
    const auto named = params.named_parameters();
    json header;
    header["dims"] = dims_json(params.dims);
    header["config_hash"] = hash;
    header["arrays"] = json::array();
    for (const auto& n : named)
        header["arrays"].push_back({{"name", n.name}, {"rows", n.tensor.rows()}, {"cols", n.tensor.cols()}});
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& n : named)
        out.write(reinterpret_cast<const char*>(n.tensor.value().data()),
                  static_cast<std::streamsize>(n.tensor.value().size() * sizeof(double)));
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AssetError("cannot open checkpoint " + path.string());
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw CheckpointError(path.string() + " is not a checkpoint");
    if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    if (len > (1u << 26)) throw CheckpointError("checkpoint header too large");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw CheckpointError("truncated checkpoint header");

    Checkpoint ck;
    try {
        const json header = json::parse(text);
        const NetDims dims = dims_from_json(header.at("dims"));
        dims.validate();
        ck.params = NetParams::create(dims, 0);
        ck.config_hash = header.at("config_hash").get<std::string>();
        const auto named = ck.params.named_parameters();
        const auto& arrays = header.at("arrays");
        if (arrays.size() != named.size()) throw CheckpointError("checkpoint parameter count mismatch");
        for (std::size_t i = 0; i < named.size(); ++i) {
            const auto& a = arrays[i];
            ad::Tensor t = named[i].tensor;
            if (a.at("name").get<std::string>() != named[i].name || a.at("rows").get<Eigen::Index>() != t.rows() ||
                a.at("cols").get<Eigen::Index>() != t.cols())
                throw CheckpointError("checkpoint array " + a.at("name").get<std::string>() +
                                      " does not match the network layout");
            in.read(reinterpret_cast<char*>(t.value().data()),
                    static_cast<std::streamsize>(t.value().size() * sizeof(double)));
        }
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint header: ") + e.what());
    }
    if (!in) throw CheckpointError("truncated checkpoint data");
    return ck;
}

NetParams load_checkpoint(const std::filesystem::path& path, const NetDims& expected_dims,
                          const std::string& expected_hash) {
    Checkpoint ck = load_checkpoint(path);
    if (!(ck.params.dims == expected_dims))
        throw CheckpointError("checkpoint dimensions do not match the configured network");
    if (ck.config_hash != expected_hash)
        throw CheckpointError("checkpoint config hash " + ck.config_hash + " does not match " + expected_hash);
    return std::move(ck.params);
}

}  // namespace ncs
