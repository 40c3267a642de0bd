#include "ncs/train.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>

namespace ncs {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

Positions row_as_positions(const Matrix& m, Eigen::Index r) {
    Positions p(m.cols() / 3, 3);
    Eigen::Map<Matrix>(p.data(), 1, m.cols()) = m.row(r);
    return p;
}

void add_energies(TermEnergies& a, const TermEnergies& b) {
    a.cloth += b.cloth;
    a.bending += b.bending;
    a.collision += b.collision;
    a.gravity += b.gravity;
    a.inertia += b.inertia;
}

TermEnergies scaled(TermEnergies e, double s) {
    e.cloth *= s;
    e.bending *= s;
    e.collision *= s;
    e.gravity *= s;
    e.inertia *= s;
    return e;
}

}  // namespace

int TrainConfig::history_frames() const { return static_cast<int>(std::lround(window_seconds * fps)); }

void TrainConfig::validate() const {
    if (!(fps > 0.0)) throw ConfigError("train.fps must be > 0");
    if (!(window_seconds > 0.0)) throw ConfigError("train.window_seconds must be > 0");
    if (window_seconds * fps < 3.0) throw ConfigError("train.window_seconds * fps must be >= 3");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
    if (time_budget_s < 0.0) throw ConfigError("train.time_budget_s must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (mirror_prob < 0.0 || mirror_prob > 1.0) throw ConfigError("train.mirror_prob must be in [0, 1]");
    if (shuffle_frac < 0.0 || shuffle_frac > 1.0) throw ConfigError("train.shuffle_frac must be in [0, 1]");
    if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0)
        throw ConfigError("train split fractions must be >= 0 and sum to < 1");
    if (eval_every < 0 || eval_windows < 0) throw ConfigError("train.eval_every / eval_windows must be >= 0");
}

NetDims network_dims(const Scene& scene, const TrainConfig& cfg) {
    NetDims d = cfg.net;
    d.joints = scene.skeleton().num_active();
    d.vertices = scene.num_vertices();
    d.validate();
    return d;
}

std::vector<MotionWindow> make_windows(std::span<const PoseSequence> sequences, const TrainConfig& cfg,
                                       std::span<const int> which) {
    cfg.validate();
    std::vector<int> ids(which.begin(), which.end());
    if (which.empty()) {
        ids.resize(sequences.size());
        std::iota(ids.begin(), ids.end(), 0);
    }
    const int n = cfg.history_frames();
    std::vector<MotionWindow> out;
    for (int s : ids) {
        const PoseSequence& seq = sequences[s];
        if (std::abs(seq.fps - cfg.fps) > 1e-9 * cfg.fps)
            throw ConfigError("sequence " + seq.name + " is at " + std::to_string(seq.fps) +
                              " fps; resample to " + std::to_string(cfg.fps) + " first");
        const int frames = static_cast<int>(seq.frames.size());
        auto at = [&](int i) -> const Pose& { return seq.frames[std::clamp(i, 0, frames - 1)]; };
        for (int t = 2; t < frames; ++t) {
            MotionWindow w;
            w.dt = cfg.dt();
            w.sequence = s;
            w.t = t;
            w.frames.reserve(n + 1);
            for (int i = t - n; i <= t; ++i) w.frames.push_back(at(i));
            w.lead_in = {at(t - n - 2), at(t - n - 1)};
            out.push_back(std::move(w));
        }
    }
    if (out.empty()) throw ConfigError("no training windows: sequences need at least 3 frames");
    return out;
}

std::vector<DescriptorFrame> describe_window(const MotionWindow& window, const Skeleton& skel) {
    std::vector<Pose> poses;
    poses.reserve(window.frames.size() + 2);
    poses.push_back(window.lead_in[0]);
    poses.push_back(window.lead_in[1]);
    poses.insert(poses.end(), window.frames.begin(), window.frames.end());
    auto frames = describe_frames(poses, window.dt, skel);
    frames.erase(frames.begin(), frames.begin() + 2);
    return frames;
}

DatasetSplit split_sequences(std::span<const PoseSequence> sequences, double val_fraction,
                             double test_fraction, std::uint64_t seed) {
    std::map<std::string, std::vector<int>> by_action;
    for (int i = 0; i < static_cast<int>(sequences.size()); ++i) by_action[sequences[i].action].push_back(i);
    std::mt19937_64 rng(seed);
    DatasetSplit split;
    for (auto& [action, ids] : by_action) {
        std::shuffle(ids.begin(), ids.end(), rng);
        const int n = static_cast<int>(ids.size());
        int n_val = 0, n_test = 0;
        if (n >= 3) {
            n_val = val_fraction > 0.0 ? std::max(1, static_cast<int>(std::lround(val_fraction * n))) : 0;
            n_test = test_fraction > 0.0 ? std::max(1, static_cast<int>(std::lround(test_fraction * n))) : 0;
            if (n_val + n_test >= n) n_test = std::max(0, n - n_val - 1);
        }
        split.val.insert(split.val.end(), ids.begin(), ids.begin() + n_val);
        split.test.insert(split.test.end(), ids.begin() + n_val, ids.begin() + n_val + n_test);
        split.train.insert(split.train.end(), ids.begin() + n_val + n_test, ids.end());
    }
    for (auto* v : {&split.train, &split.val, &split.test}) std::sort(v->begin(), v->end());
    return split;
}

int augment_mirror(std::vector<MotionWindow>& windows, double prob, const Skeleton& skel,
                   std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int mirrored = 0;
    for (auto& w : windows) {
        if (!(u(rng) < prob)) continue;
        for (auto& p : w.frames) p = mirror_pose(p, skel);
        for (auto& p : w.lead_in) p = mirror_pose(p, skel);
        ++mirrored;
    }
    return mirrored;
}

std::vector<std::pair<int, int>> augment_motion_shuffle(int batch, double frac, std::mt19937_64& rng) {
    if (frac <= 0.0) return {};
    if (batch < 2) {
        std::cerr << "warning: latent shuffle skipped for a batch of " << batch << "\n";
        return {};
    }
    const int k = std::min(batch, static_cast<int>(std::ceil(frac * batch - 1e-9)));
    std::vector<int> perm(batch);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::pair<int, int>> out;
    if (k == 1) {
        out.emplace_back(perm[0], perm[1]);
        return out;
    }
    for (int j = 0; j < k; ++j) out.emplace_back(perm[j], perm[(j + 1) % k]);
    return out;
}

TrainingBatch make_batch(const Scene& scene, std::span<const MotionWindow> windows) {
    if (windows.empty()) throw ConfigError("empty batch");
    const Skeleton& skel = scene.skeleton();
    const int frames = static_cast<int>(windows[0].frames.size());
    const int b = static_cast<int>(windows.size());
    const int k = skel.num_active();
    TrainingBatch out;
    out.windows.static_desc.assign(frames, Matrix(b, 9 * k));
    out.windows.dynamic_desc.assign(frames, Matrix(b, 12 * k));
    out.windows.skins.resize(b);
    out.bodies.reserve(b);
    out.gravity_refs.reserve(b);
    for (int r = 0; r < b; ++r) {
        const MotionWindow& w = windows[r];
        if (static_cast<int>(w.frames.size()) != frames) throw ShapeError("batch windows differ in length");
        const auto desc = describe_window(w, skel);
        for (int i = 0; i < frames; ++i) {
            out.windows.static_desc[i].row(r) = flatten_static(desc[i].static_desc);
            out.windows.dynamic_desc[i].row(r) = flatten_dynamic(desc[i].dynamic_desc);
        }
        for (int j = 0; j < 3; ++j)
            out.windows.skins[r][j] = garment_skin(scene, forward_kinematics(skel, w.frames[frames - 3 + j]));
        out.bodies.push_back(pose_body(scene.body, w.frames.back()));
        out.gravity_refs.push_back(gravity_reference(scene, w.frames.back()));
    }
    return out;
}

TermEnergies LossReport::mean_energies() const { return rows ? scaled(energies, 1.0 / rows) : energies; }

Metrics LossReport::mean_metrics() const { return rows ? metrics / rows : metrics; }

ad::Tensor batch_loss(const ad::Tensor& x_t, const ad::Tensor& x_prev, const ad::Tensor& x_prev2,
                      const std::vector<ItemTerms>& items, const ClothModel& cloth, double dt,
                      LossReport* report) {
    const Eigen::Index b = x_t.rows();
    if (static_cast<Eigen::Index>(items.size()) != b) throw ShapeError("batch_loss: one item per row");
    const bool history = x_prev.defined() && x_prev2.defined();
    auto grad_x = std::make_shared<Matrix>(Matrix::Zero(b, x_t.cols()));
    auto grad_inertia = std::make_shared<Matrix>(Matrix::Zero(b, x_t.cols()));
    double total = 0.0;
    LossReport local;
    for (Eigen::Index r = 0; r < b; ++r) {
        const ItemTerms& item = items[r];
        ClothState state;
        state.x = row_as_positions(x_t.value(), r);
        if (history) {
            state.x_prev = row_as_positions(x_prev.value(), r);
            state.x_prev2 = row_as_positions(x_prev2.value(), r);
        }
        if (item.inertia && !history) throw ConfigError("inertia loss needs x_{t-1} and x_{t-2}");
        Positions g = Positions::Zero(state.x.rows(), 3);
        if (item.static_terms) {
            LossOptions opt;
            opt.mode = LossMode::Static;
            opt.dt = dt;
            opt.gravity_reference = item.gravity_reference;
            const EnergyReport rep = total_loss(state, item.collider, cloth, opt);
            g = rep.gradient;
            total += rep.total;
            TermEnergies e = rep.energies;
            e.inertia = 0.0;
            add_energies(local.energies, e);
            local.metrics += rep.metrics;
        }
        if (item.inertia) {
            Positions gi = Positions::Zero(state.x.rows(), 3);
            const double e = inertia_energy(state.x, *state.x_prev, *state.x_prev2, cloth.masses, dt, &gi);
            if (!std::isfinite(e)) throw NumericsError("non-finite inertia energy");
            total += e;
            g += gi;
            local.energies.inertia += e;
            if (!item.static_terms) local.metrics.inertia += e;
            grad_inertia->row(r) = Eigen::Map<const Matrix>(gi.data(), 1, gi.size());
        }
        grad_x->row(r) = Eigen::Map<const Matrix>(g.data(), 1, g.size());
    }
    local.rows = static_cast<int>(b);
    local.total = total;
    if (report) {
        add_energies(report->energies, local.energies);
        report->metrics += local.metrics;
        report->rows += local.rows;
        report->total += local.total;
    }

    Matrix value(1, 1);
    value(0, 0) = total;
    std::vector<ad::Tensor> inputs{x_t};
    if (history) {
        inputs.push_back(x_prev);
        inputs.push_back(x_prev2);
    }
    return ad::custom(std::move(value), inputs,
                      [grad_x, grad_inertia](const Matrix& g, std::vector<Matrix*>& grads) {
                          const double s = g(0, 0);
                          if (grads[0]) *grads[0] = s * *grad_x;
                          // d/dx_{t-1} of |x - 2x_{t-1} + x_{t-2}|^2 is -2x, d/dx_{t-2} is +1x the x_t gradient.
                          if (grads.size() > 1 && grads[1]) *grads[1] = -2.0 * s * *grad_inertia;
                          if (grads.size() > 2 && grads[2]) *grads[2] = s * *grad_inertia;
                      });
}

Adam::Adam(std::vector<ad::Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
        m_.push_back(Matrix::Zero(p.rows(), p.cols()));
        v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const Matrix& g = params_[i].node()->grad;
        if (g.size() == 0) {
            m_[i] *= cfg_.beta1;
            v_[i] *= cfg_.beta2;
        } else {
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
        }
        params_[i].value().array() -=
            cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
    }
}

StepReport train_step(NetParams& params, Adam& optimizer, const TrainingBatch& batch, const Scene& scene,
                      const TrainConfig& cfg, std::mt19937_64& rng) {
    const auto start = Clock::now();
    const int b = batch.windows.batch();
    const Positions& rest = scene.cloth.mesh.vertices;
    params.zero_grad();
    const Triple tri = decode_triple(params, rest, batch.windows);

    const auto pairs = augment_motion_shuffle(b, cfg.shuffle_frac, rng);
    std::vector<bool> augmented(b, false);
    for (const auto& [target, source] : pairs) augmented[target] = true;

    LossReport report;
    std::vector<ad::Tensor> losses;
    std::vector<int> plain;
    for (int r = 0; r < b; ++r)
        if (!augmented[r]) plain.push_back(r);
    if (!plain.empty()) {
        std::vector<ItemTerms> items;
        for (int r : plain) items.push_back({batch.bodies[r].collider.get(), batch.gravity_refs[r], true, true});
        const bool all = static_cast<int>(plain.size()) == b;
        losses.push_back(batch_loss(all ? tri.x_t : ad::select_rows(tri.x_t, plain),
                                    all ? tri.x_prev : ad::select_rows(tri.x_prev, plain),
                                    all ? tri.x_prev2 : ad::select_rows(tri.x_prev2, plain), items,
                                    scene.cloth, cfg.dt(), &report));
    }
    if (!pairs.empty()) {
        // Decoder-only samples: both codes are constants.
        std::vector<int> targets, sources;
        std::vector<const std::vector<VertexSkin>*> skins;
        std::vector<ItemTerms> items;
        for (const auto& [target, source] : pairs) {
            targets.push_back(target);
            sources.push_back(source);
            skins.push_back(&batch.windows.skins[target][2]);
            items.push_back({batch.bodies[target].collider.get(), batch.gravity_refs[target], true, false});
        }
        const ad::Tensor z = ad::add(ad::select_rows(ad::detach(tri.z_static), targets),
                                     ad::select_rows(ad::detach(tri.z_dynamic), sources));
        const ad::Tensor x_aug = skin_displacement(decode(params, z), rest, skins);
        losses.push_back(batch_loss(x_aug, {}, {}, items, scene.cloth, cfg.dt(), &report));
    }
    ad::Tensor loss = losses[0];
    for (std::size_t i = 1; i < losses.size(); ++i) loss = ad::add(loss, losses[i]);
    loss = ad::scale(loss, 1.0 / b);
    ad::backward(loss);
    optimizer.step();

    StepReport out;
    out.loss = loss.value()(0, 0);
    out.energies = report.mean_energies();
    out.metrics = report.mean_metrics();
    out.augmented = static_cast<int>(pairs.size());
    out.wall_ms = ms_since(start);
    return out;
}

Metrics evaluate_metrics(const NetParams& params, const Scene& scene, std::span<const MotionWindow> windows) {
    Metrics sum;
    if (windows.empty()) return sum;
    constexpr std::size_t kChunk = 32;
    ad::NoGradGuard no_grad;
    for (std::size_t begin = 0; begin < windows.size(); begin += kChunk) {
        const auto chunk = windows.subspan(begin, std::min(kChunk, windows.size() - begin));
        const TrainingBatch batch = make_batch(scene, chunk);
        const Triple tri = decode_triple(params, scene.cloth.mesh.vertices, batch.windows);
        for (int r = 0; r < batch.windows.batch(); ++r) {
            ClothState state;
            state.x = row_as_positions(tri.x_t.value(), r);
            state.x_prev = row_as_positions(tri.x_prev.value(), r);
            state.x_prev2 = row_as_positions(tri.x_prev2.value(), r);
            LossOptions opt;
            opt.mode = LossMode::Static;
            opt.dt = chunk[r].dt;
            opt.gravity_reference = batch.gravity_refs[r];
            opt.with_gradient = false;
            sum += total_loss(state, batch.bodies[r].collider.get(), scene.cloth, opt).metrics;
        }
    }
    return sum / static_cast<double>(windows.size());
}

std::string metrics_record(int step, const std::string& split, const Metrics& m, double wall_ms) {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["split"] = split;
    j["strain"] = m.strain;
    j["bending"] = m.bending;
    j["collision_pct"] = m.collision_pct;
    j["gravity"] = m.gravity;
    j["inertia"] = m.inertia;
    j["wall_ms"] = wall_ms;
    return j.dump();
}

TrainResult train(const Scene& scene, std::span<const PoseSequence> sequences, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks) {
    cfg.validate();
    const auto start = Clock::now();
    TrainResult result;
    result.split = split_sequences(sequences, cfg.val_fraction, cfg.test_fraction, cfg.seed);
    if (result.split.train.empty()) throw ConfigError("no training sequences after the split");
    const auto train_windows = make_windows(sequences, cfg, result.split.train);
    std::vector<MotionWindow> val_windows;
    if (!result.split.val.empty()) {
        const auto all_val = make_windows(sequences, cfg, result.split.val);
        const std::size_t keep = cfg.eval_windows > 0 ? std::min<std::size_t>(cfg.eval_windows, all_val.size())
                                                      : all_val.size();
        for (std::size_t i = 0; i < keep; ++i) val_windows.push_back(all_val[i * all_val.size() / keep]);
    }

    result.params = NetParams::create(network_dims(scene, cfg), cfg.seed);
    Adam optimizer(result.params.parameters(), AdamConfig{cfg.learning_rate});
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    auto validate_now = [&](int step) {
        if (val_windows.empty()) return;
        const Metrics m = evaluate_metrics(result.params, scene, val_windows);
        result.validation.emplace_back(step, m);
        if (callbacks.log) *callbacks.log << metrics_record(step, "val", m, ms_since(start)) << "\n" << std::flush;
    };
    validate_now(0);

    std::vector<int> order(train_windows.size());
    std::iota(order.begin(), order.end(), 0);
    int step = 0;
    bool stop = false;
    int last_eval = 0;
    for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t begin = 0; begin < order.size() && !stop; begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            std::vector<MotionWindow> windows;
            for (std::size_t i = begin; i < end; ++i) windows.push_back(train_windows[order[i]]);
            augment_mirror(windows, cfg.mirror_prob, scene.skeleton(), rng);
            const TrainingBatch batch = make_batch(scene, windows);
            const StepReport rep = train_step(result.params, optimizer, batch, scene, cfg, rng);
            ++step;
            if (callbacks.log) *callbacks.log << metrics_record(step, "train", rep.metrics, ms_since(start)) << "\n";
            if (callbacks.on_step) callbacks.on_step(step, rep, result.params);
            if (cfg.eval_every > 0 && step % cfg.eval_every == 0) {
                validate_now(step);
                last_eval = step;
            }
            if ((cfg.max_steps > 0 && step >= cfg.max_steps) ||
                (cfg.time_budget_s > 0.0 && ms_since(start) >= 1000.0 * cfg.time_budget_s))
                stop = true;
        }
        if (callbacks.on_epoch) callbacks.on_epoch(step, result.params);
    }
    if (last_eval != step) validate_now(step);
    result.steps = step;
    return result;
}

}  // namespace ncs
