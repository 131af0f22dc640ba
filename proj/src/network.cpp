#include "failex/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "failex/error.hpp"
#include "failex/rng.hpp"

namespace failex {
namespace {

struct StepCache {
    bool active = false;
    Vector x, h_prev, c_prev, input, forget, output, candidate, c, tanh_c;
};

struct Trace {
    std::vector<StepCache> steps;
    Vector h, c;
    double logit = 0.0;
};

Vector sigmoid_vec(const Vector& z) {
    Vector out(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) out[i] = sigmoid(z[i]);
    return out;
}

Trace run_lstm(const PaddedSequence& seq, const LstmParams& p, bool keep_cache,
               std::vector<Vector>* hidden_out = nullptr) {
    const int h = p.hidden_size();
    Trace trace;
    trace.h = Vector::Zero(h);
    trace.c = Vector::Zero(h);
    if (keep_cache) trace.steps.resize(seq.steps.size());
    for (std::size_t t = 0; t < seq.steps.size(); ++t) {
        if (seq.mask[t]) {
            const Vector z = p.input_weights * seq.steps[t] + p.recurrent_weights * trace.h + p.bias;
            Vector input = sigmoid_vec(z.segment(0, h));
            Vector forget = sigmoid_vec(z.segment(h, h));
            Vector output = sigmoid_vec(z.segment(2 * h, h));
            Vector candidate = z.segment(3 * h, h).array().tanh();
            Vector c = forget.cwiseProduct(trace.c) + input.cwiseProduct(candidate);
            Vector tanh_c = c.array().tanh();
            Vector hidden = output.cwiseProduct(tanh_c);
            if (keep_cache) {
                auto& s = trace.steps[t];
                s.active = true;
                s.x = seq.steps[t];
                s.h_prev = std::move(trace.h);
                s.c_prev = std::move(trace.c);
                s.input = std::move(input);
                s.forget = std::move(forget);
                s.output = std::move(output);
                s.candidate = std::move(candidate);
                s.c = c;
                s.tanh_c = std::move(tanh_c);
            }
            trace.h = std::move(hidden);
            trace.c = std::move(c);
        }
        if (hidden_out) hidden_out->push_back(trace.h);
    }
    trace.logit = p.head_weights.dot(trace.h) + p.head_bias;
    return trace;
}

struct DeviceEncodings {
    std::vector<WindowEncoding> windows;
    PaddedSequence padded;
    std::size_t offset = 0;  // padded index of the first window
};

DeviceEncodings encode_padded(const Model& model, const DeviceSequence& device) {
    DeviceEncodings out;
    out.windows = encode_device(model, device);
    std::vector<Vector> vectors;
    vectors.reserve(out.windows.size());
    for (const auto& w : out.windows) vectors.push_back(w.w);
    out.padded = pad_sequence(vectors, model.sequence_length, model.params.lstm.input_size());
    out.offset = static_cast<std::size_t>(model.sequence_length) - vectors.size();
    return out;
}

using Real = long double;

Real sigmoid_ld(Real x) {
    if (x >= 0) return 1 / (1 + std::exp(-x));
    const Real e = std::exp(x);
    return e / (1 + e);
}

Real softplus_ld(Real x) { return x > 30 ? x : std::log1p(std::exp(x)); }

// Loop-based reimplementation of the forward pass in extended precision; the
// finite differences in gradient_check are taken on this.
Real reference_loss(const Model& model, const DeviceSequence& device, double positive_weight) {
    const auto& rep = model.params.representation;
    const auto& E = rep.embeddings.vectors;
    const auto& lstm = model.params.lstm;
    const auto s = E.cols();
    const auto h = static_cast<Eigen::Index>(lstm.hidden_size());
    std::vector<Real> hidden(static_cast<std::size_t>(h), 0), cell(static_cast<std::size_t>(h), 0);
    std::vector<Real> w(static_cast<std::size_t>(s)), z(static_cast<std::size_t>(4 * h));

    for (const auto& slot : device.windows) {
        const auto& counts = slot.bag.counts;
        std::fill(w.begin(), w.end(), Real(0));
        if (model.encoder == EncoderKind::plain) {
            for (const auto& tc : counts)
                for (Eigen::Index d = 0; d < s; ++d) w[d] += Real(tc.frequency) * E(tc.type, d);
        } else {
            const auto n = counts.size();
            const auto a = rep.projection.query.rows();
            std::vector<std::vector<Real>> q(n, std::vector<Real>(a, 0)), k(n, std::vector<Real>(a, 0));
            for (std::size_t i = 0; i < n; ++i)
                for (Eigen::Index r = 0; r < a; ++r)
                    for (Eigen::Index d = 0; d < s; ++d) {
                        q[i][r] += Real(rep.projection.query(r, d)) * E(counts[i].type, d);
                        k[i][r] += Real(rep.projection.key(r, d)) * E(counts[i].type, d);
                    }
            const Real days = Real(device.observation_end + device.horizon - slot.bag.tau) / kMinutesPerDay;
            for (std::size_t i = 0; i < n; ++i) {
                const int type = counts[i].type;
                const Real decay = sigmoid_ld(Real(rep.decay.theta[type]) - softplus_ld(rep.decay.sigma_raw[type]) * days);
                std::vector<Real> logits(n);
                Real top = -std::numeric_limits<Real>::infinity();
                for (std::size_t j = 0; j < n; ++j) {
                    Real dot = 0;
                    for (Eigen::Index r = 0; r < a; ++r) dot += q[i][r] * k[j][r];
                    logits[j] = dot / std::sqrt(Real(a));
                    top = std::max(top, logits[j]);
                }
                Real total = 0;
                for (auto& l : logits) total += (l = std::exp(l - top));
                for (std::size_t j = 0; j < n; ++j)
                    for (Eigen::Index d = 0; d < s; ++d)
                        w[d] += Real(counts[i].frequency) * decay * (logits[j] / total) * E(counts[j].type, d);
            }
        }
        for (Eigen::Index r = 0; r < 4 * h; ++r) {
            Real acc = lstm.bias[r];
            for (Eigen::Index d = 0; d < s; ++d) acc += Real(lstm.input_weights(r, d)) * w[d];
            for (Eigen::Index j = 0; j < h; ++j) acc += Real(lstm.recurrent_weights(r, j)) * hidden[j];
            z[r] = acc;
        }
        for (Eigen::Index j = 0; j < h; ++j) {
            cell[j] = sigmoid_ld(z[h + j]) * cell[j] + sigmoid_ld(z[j]) * std::tanh(z[3 * h + j]);
            hidden[j] = sigmoid_ld(z[2 * h + j]) * std::tanh(cell[j]);
        }
    }
    Real logit = lstm.head_bias;
    for (Eigen::Index j = 0; j < h; ++j) logit += Real(lstm.head_weights[j]) * hidden[j];
    const Real lo = kProbabilityClamp;
    const Real p = std::clamp(sigmoid_ld(logit), lo, 1 - lo);
    return device.label == 1 ? -Real(positive_weight) * std::log(p) : -std::log(1 - p);
}

Real reference_batch_loss(const Model& model, std::span<const DeviceSequence> batch, double positive_weight) {
    Real total = 0;
    for (const auto& device : batch) total += reference_loss(model, device, positive_weight);
    return total / Real(batch.size());
}

double clamped(double probability) {
    return std::clamp(probability, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

/// Adds scale * d(loss)/d(params) for one device into grad; returns the loss.
double accumulate_device(const Model& model, const DeviceSequence& device, double positive_weight,
                         double scale, Parameters& grad) {
    const auto& p = model.params.lstm;
    const int h = p.hidden_size();
    const auto enc = encode_padded(model, device);
    const Trace trace = run_lstm(enc.padded, p, true);
    const double probability = sigmoid(trace.logit);
    const double value = loss(probability, device.label, positive_weight);

    double grad_logit = 0.0;
    if (probability > kProbabilityClamp && probability < 1.0 - kProbabilityClamp)
        grad_logit = device.label == 1 ? -positive_weight * (1.0 - probability) : probability;
    grad_logit *= scale;

    auto& g = grad.lstm;
    g.head_weights += grad_logit * trace.h;
    g.head_bias += grad_logit;

    Vector dh = p.head_weights * grad_logit;
    Vector dc = Vector::Zero(h);
    Vector dz(4 * h);
    for (std::size_t t = enc.padded.steps.size(); t-- > 0;) {
        const auto& s = trace.steps[t];
        if (!s.active) continue;
        const Vector d_output = dh.cwiseProduct(s.tanh_c);
        dc += dh.cwiseProduct(s.output).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
        const Vector d_input = dc.cwiseProduct(s.candidate);
        const Vector d_candidate = dc.cwiseProduct(s.input);
        const Vector d_forget = dc.cwiseProduct(s.c_prev);
        dc = dc.cwiseProduct(s.forget);

        dz.segment(0, h) = d_input.array() * s.input.array() * (1.0 - s.input.array());
        dz.segment(h, h) = d_forget.array() * s.forget.array() * (1.0 - s.forget.array());
        dz.segment(2 * h, h) = d_output.array() * s.output.array() * (1.0 - s.output.array());
        dz.segment(3 * h, h) = d_candidate.array() * (1.0 - s.candidate.array().square());

        g.input_weights.noalias() += dz * s.x.transpose();
        g.recurrent_weights.noalias() += dz * s.h_prev.transpose();
        g.bias += dz;
        const Vector dx = p.input_weights.transpose() * dz;
        dh = p.recurrent_weights.transpose() * dz;

        const auto& slot = device.windows[t - enc.offset];
        if (model.encoder == EncoderKind::plain) {
            backprop_plain(slot.bag, dx, grad.representation);
        } else {
            backprop_attentive(slot.bag, enc.windows[t - enc.offset].delta_minutes,
                               model.params.representation, dx, grad.representation);
        }
    }
    return value;
}

class Sgd final : public Optimizer {
public:
    explicit Sgd(double lr) : lr_(lr) {}
    void step(Parameters& params, Parameters& grad) override {
        auto ps = parameter_groups(params);
        auto gs = parameter_groups(grad);
        for (std::size_t k = 0; k < ps.size(); ++k)
            for (std::size_t i = 0; i < ps[k].values.size(); ++i) ps[k].values[i] -= lr_ * gs[k].values[i];
    }

private:
    double lr_;
};

class Momentum final : public Optimizer {
public:
    Momentum(double lr, const Parameters& shape) : lr_(lr), velocity_(Parameters::zeros_like(shape)) {}
    void step(Parameters& params, Parameters& grad) override {
        auto ps = parameter_groups(params);
        auto gs = parameter_groups(grad);
        auto vs = parameter_groups(velocity_);
        for (std::size_t k = 0; k < ps.size(); ++k) {
            for (std::size_t i = 0; i < ps[k].values.size(); ++i) {
                vs[k].values[i] = 0.9 * vs[k].values[i] + gs[k].values[i];
                ps[k].values[i] -= lr_ * vs[k].values[i];
            }
        }
    }

private:
    double lr_;
    Parameters velocity_;
};

class Adam final : public Optimizer {
public:
    Adam(double lr, const Parameters& shape)
        : lr_(lr), first_(Parameters::zeros_like(shape)), second_(Parameters::zeros_like(shape)) {}
    void step(Parameters& params, Parameters& grad) override {
        ++t_;
        const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        const double correction1 = 1.0 - std::pow(beta1, t_);
        const double correction2 = 1.0 - std::pow(beta2, t_);
        auto ps = parameter_groups(params);
        auto gs = parameter_groups(grad);
        auto ms = parameter_groups(first_);
        auto vs = parameter_groups(second_);
        for (std::size_t k = 0; k < ps.size(); ++k) {
            for (std::size_t i = 0; i < ps[k].values.size(); ++i) {
                const double gi = gs[k].values[i];
                ms[k].values[i] = beta1 * ms[k].values[i] + (1 - beta1) * gi;
                vs[k].values[i] = beta2 * vs[k].values[i] + (1 - beta2) * gi * gi;
                const double m_hat = ms[k].values[i] / correction1;
                const double v_hat = vs[k].values[i] / correction2;
                ps[k].values[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps);
            }
        }
    }

private:
    double lr_;
    int t_ = 0;
    Parameters first_, second_;
};

}  // namespace

LstmParams LstmParams::initialize(int input_size, int hidden_size, std::uint64_t seed) {
    if (input_size < 1 || hidden_size < 1) throw ValidationError("LSTM sizes must be positive");
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(input_size + hidden_size));
    LstmParams p;
    p.input_weights.resize(4 * hidden_size, input_size);
    p.recurrent_weights.resize(4 * hidden_size, hidden_size);
    for (Eigen::Index r = 0; r < p.input_weights.rows(); ++r)
        for (Eigen::Index c = 0; c < p.input_weights.cols(); ++c) p.input_weights(r, c) = rng.uniform(-bound, bound);
    for (Eigen::Index r = 0; r < p.recurrent_weights.rows(); ++r)
        for (Eigen::Index c = 0; c < p.recurrent_weights.cols(); ++c)
            p.recurrent_weights(r, c) = rng.uniform(-bound, bound);
    p.bias = Vector::Zero(4 * hidden_size);
    p.bias.segment(hidden_size, hidden_size).setOnes();
    const double head_bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    p.head_weights.resize(hidden_size);
    for (Eigen::Index i = 0; i < hidden_size; ++i) p.head_weights[i] = rng.uniform(-head_bound, head_bound);
    p.head_bias = 0.0;
    return p;
}

LstmParams LstmParams::zeros_like(const LstmParams& other) {
    LstmParams p;
    p.input_weights = Matrix::Zero(other.input_weights.rows(), other.input_weights.cols());
    p.recurrent_weights = Matrix::Zero(other.recurrent_weights.rows(), other.recurrent_weights.cols());
    p.bias = Vector::Zero(other.bias.size());
    p.head_weights = Vector::Zero(other.head_weights.size());
    p.head_bias = 0.0;
    return p;
}

Parameters Parameters::zeros_like(const Parameters& other) {
    return {RepresentationParams::zeros_like(other.representation), LstmParams::zeros_like(other.lstm)};
}

std::vector<ParamGroup> parameter_groups(Parameters& p) {
    auto view = [](auto& dense) { return std::span<double>(dense.data(), static_cast<std::size_t>(dense.size())); };
    auto& r = p.representation;
    return {
        {"embeddings", view(r.embeddings.vectors)},
        {"query", view(r.projection.query)},
        {"key", view(r.projection.key)},
        {"theta", view(r.decay.theta)},
        {"sigma_raw", view(r.decay.sigma_raw)},
        {"lstm_input_weights", view(p.lstm.input_weights)},
        {"lstm_recurrent_weights", view(p.lstm.recurrent_weights)},
        {"lstm_bias", view(p.lstm.bias)},
        {"head_weights", view(p.lstm.head_weights)},
        {"head_bias", std::span<double>(&p.lstm.head_bias, 1)},
    };
}

Model Model::initialize(const Vocabulary& vocabulary, const ModelConfig& config, std::uint64_t seed) {
    if (vocabulary.size() == 0) throw ValidationError("vocabulary is empty");
    if (config.sequence_length < 1) throw ValidationError("sequence length must be positive");
    Model m;
    m.encoder = config.encoder;
    m.sequence_length = config.sequence_length;
    m.vocabulary = vocabulary;
    m.params.representation = RepresentationParams::initialize(
        vocabulary.size(), config.embedding_dim, config.attention_dim, derive_seed(seed, 1));
    m.params.lstm = LstmParams::initialize(config.embedding_dim, config.hidden_size, derive_seed(seed, 2));
    return m;
}

PaddedSequence pad_sequence(std::span<const Vector> encodings, int length, int input_size) {
    if (encodings.size() > static_cast<std::size_t>(length))
        throw ValidationError("sequence has " + std::to_string(encodings.size()) +
                              " steps, more than the length " + std::to_string(length));
    PaddedSequence seq;
    const auto pad = static_cast<std::size_t>(length) - encodings.size();
    for (std::size_t i = 0; i < pad; ++i) {
        seq.steps.push_back(Vector::Zero(input_size));
        seq.mask.push_back(false);
    }
    for (const auto& e : encodings) {
        if (e.size() != input_size) throw ValidationError("encoding size does not match the LSTM input");
        seq.steps.push_back(e);
        seq.mask.push_back(true);
    }
    return seq;
}

ForwardResult forward(const PaddedSequence& sequence, const LstmParams& params) {
    if (sequence.steps.size() != sequence.mask.size())
        throw ValidationError("sequence and mask lengths differ");
    ForwardResult out;
    const Trace trace = run_lstm(sequence, params, false, &out.hidden);
    out.logit = trace.logit;
    out.probability = sigmoid(trace.logit);
    return out;
}

std::vector<WindowEncoding> encode_device(const Model& model, const DeviceSequence& device) {
    std::vector<WindowEncoding> out;
    out.reserve(device.windows.size());
    for (const auto& slot : device.windows) {
        if (model.encoder == EncoderKind::plain) {
            out.push_back(encode_window_plain_terms(slot.bag, model.params.representation.embeddings));
        } else {
            out.push_back(encode_window_attentive(slot.bag, device.observation_end, device.horizon,
                                                  model.params.representation));
        }
    }
    return out;
}

double predict(const Model& model, const DeviceSequence& device) {
    const auto enc = encode_padded(model, device);
    return sigmoid(run_lstm(enc.padded, model.params.lstm, false).logit);
}

double loss(double probability, int label, double positive_weight) {
    const double p = clamped(probability);
    return label == 1 ? -positive_weight * std::log(p) : -std::log(1.0 - p);
}

double loss_and_gradient(const Model& model, std::span<const DeviceSequence> batch,
                         double positive_weight, Parameters& grad) {
    if (batch.empty()) throw ValidationError("empty batch");
    grad = Parameters::zeros_like(model.params);
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& device : batch) total += accumulate_device(model, device, positive_weight, scale, grad);
    return total * scale;
}

double batch_loss(const Model& model, std::span<const DeviceSequence> batch, double positive_weight) {
    if (batch.empty()) throw ValidationError("empty batch");
    double total = 0.0;
    for (const auto& device : batch) total += loss(predict(model, device), device.label, positive_weight);
    return total / static_cast<double>(batch.size());
}

OptimizerKind parse_optimizer(const std::string& text) {
    if (text == "sgd") return OptimizerKind::sgd;
    if (text == "momentum") return OptimizerKind::momentum;
    if (text == "adam") return OptimizerKind::adam;
    throw ValidationError("unknown optimizer '" + text + "'");
}

std::string to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::momentum: return "momentum";
        case OptimizerKind::adam: return "adam";
    }
    return "sgd";
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double learning_rate, const Parameters& shape) {
    switch (kind) {
        case OptimizerKind::sgd: return std::make_unique<Sgd>(learning_rate);
        case OptimizerKind::momentum: return std::make_unique<Momentum>(learning_rate, shape);
        case OptimizerKind::adam: return std::make_unique<Adam>(learning_rate, shape);
    }
    throw ValidationError("unknown optimizer");
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw ValidationError("batch_size must be positive");
    if (sequence_length < 1) throw ValidationError("sequence_length must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ValidationError("learning_rate must be finite and non-negative");
    if (epochs < 0) throw ValidationError("epochs must be non-negative");
    if (!(positive_class_weight > 0.0)) throw ValidationError("positive_class_weight must be positive");
    if (!(clip_norm >= 0.0)) throw ValidationError("clip_norm must be non-negative");
}

TrainResult train(const Model& initial, std::span<const DeviceSequence> training_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (training_set.empty()) throw ValidationError("training split is empty");
    const bool has_positive = std::any_of(training_set.begin(), training_set.end(),
                                          [](const DeviceSequence& d) { return d.label == 1; });
    const bool has_negative = std::any_of(training_set.begin(), training_set.end(),
                                          [](const DeviceSequence& d) { return d.label == 0; });
    if (!has_positive || !has_negative) throw ValidationError("training split contains a single class");
    if (config.sequence_length != initial.sequence_length)
        throw ValidationError("train sequence_length differs from the model's");

    TrainResult result{initial, {}};
    Model& model = result.model;
    auto optimizer = make_optimizer(config.optimizer, config.learning_rate, model.params);
    Parameters grad = Parameters::zeros_like(model.params);

    std::vector<std::size_t> order(training_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<DeviceSequence> batch;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng rng(derive_seed(config.rng_seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        double total = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const auto end = std::min(order.size(), begin + config.batch_size);
            batch.clear();
            for (auto i = begin; i < end; ++i) batch.push_back(training_set[order[i]]);
            total += loss_and_gradient(model, batch, config.positive_class_weight, grad) *
                     static_cast<double>(batch.size());
            if (config.clip_norm > 0.0) {
                double norm_sq = 0.0;
                for (auto& g : parameter_groups(grad))
                    for (double v : g.values) norm_sq += v * v;
                const double norm = std::sqrt(norm_sq);
                if (norm > config.clip_norm) {
                    const double shrink = config.clip_norm / norm;
                    for (auto& g : parameter_groups(grad))
                        for (double& v : g.values) v *= shrink;
                }
            }
            optimizer->step(model.params, grad);
        }
        const double mean = total / static_cast<double>(order.size());
        result.epoch_losses.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
    }
    return result;
}

GradientCheckReport gradient_check(const Model& model, std::span<const DeviceSequence> batch,
                                   const GradientCheckOptions& options) {
    if (batch.empty()) throw ValidationError("gradient check needs a non-empty batch");
    if (!(options.epsilon > 0.0)) throw ValidationError("epsilon must be positive");

    Parameters analytic;
    if (options.analytic)
        options.analytic(model, batch, options.positive_weight, analytic);
    else
        loss_and_gradient(model, batch, options.positive_weight, analytic);

    Model probe = model;
    auto values = parameter_groups(probe.params);
    auto grads = parameter_groups(analytic);

    // Even quota per group; leftover budget flows to groups with room.
    std::vector<std::size_t> quota(values.size(), 0);
    std::size_t remaining = options.coordinates;
    while (remaining > 0) {
        std::size_t open = 0;
        for (std::size_t k = 0; k < values.size(); ++k) open += quota[k] < values[k].values.size();
        if (open == 0) break;
        const std::size_t share = std::max<std::size_t>(1, remaining / open);
        for (std::size_t k = 0; k < values.size() && remaining > 0; ++k) {
            const auto room = values[k].values.size() - quota[k];
            const auto take = std::min({share, room, remaining});
            quota[k] += take;
            remaining -= take;
        }
    }

    Rng rng(options.seed);
    GradientCheckReport report;
    for (std::size_t k = 0; k < values.size(); ++k) {
        std::vector<std::size_t> picks(values[k].values.size());
        std::iota(picks.begin(), picks.end(), 0);
        rng.shuffle(picks);
        double group_max = 0.0;
        for (std::size_t q = 0; q < quota[k]; ++q) {
            const auto i = picks[q];
            double& slot = values[k].values[i];
            const double saved = slot;
            const double plus = saved + options.epsilon;
            const double minus = saved - options.epsilon;
            slot = plus;
            const Real up = reference_batch_loss(probe, batch, options.positive_weight);
            slot = minus;
            const Real down = reference_batch_loss(probe, batch, options.positive_weight);
            slot = saved;
            const double numeric = static_cast<double>((up - down) / (Real(plus) - Real(minus)));
            const double exact = grads[k].values[i];
            const double error = std::abs(exact - numeric) /
                                 std::max({std::abs(exact), std::abs(numeric), 1e-8});
            group_max = std::max(group_max, error);
            ++report.coordinates;
        }
        report.per_group.emplace_back(values[k].name, group_max);
        if (report.worst_group.empty() || group_max > report.max_relative_error) {
            report.max_relative_error = group_max;
            report.worst_group = values[k].name;
        }
    }
    return report;
}

Metrics metrics_from_confusion(const Confusion& c) {
    auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    Metrics m;
    m.confusion = c;
    m.precision_minority = ratio(c.tp, c.tp + c.fp);
    m.recall_minority = ratio(c.tp, c.tp + c.fn);
    const double pr = m.precision_minority + m.recall_minority;
    m.f1_minority = pr == 0.0 ? 0.0 : 2.0 * m.precision_minority * m.recall_minority / pr;
    m.balanced_accuracy = 0.5 * (m.recall_minority + ratio(c.tn, c.tn + c.fp));
    return m;
}

std::vector<Prediction> predict_all(const Model& model, std::span<const DeviceSequence> devices) {
    std::vector<Prediction> out;
    out.reserve(devices.size());
    for (const auto& d : devices) {
        const double p = predict(model, d);
        out.push_back({d.device_id, p, p >= kDecisionThreshold ? 1 : 0});
    }
    return out;
}

Metrics evaluate(const Model& model, std::span<const DeviceSequence> devices) {
    if (devices.empty()) throw ValidationError("cannot evaluate an empty dataset");
    Confusion c;
    for (const auto& d : devices) {
        const bool predicted = predict(model, d) >= kDecisionThreshold;
        if (d.label == 1)
            (predicted ? c.tp : c.fn)++;
        else
            (predicted ? c.fp : c.tn)++;
    }
    return metrics_from_confusion(c);
}

}  // namespace failex
