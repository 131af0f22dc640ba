#include "failex/representation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "failex/error.hpp"
#include "failex/rng.hpp"

namespace failex {

Vocabulary::Vocabulary(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (!index_.emplace(names_[i], static_cast<int>(i)).second)
            throw ValidationError("duplicate event type '" + names_[i] + "' in vocabulary");
    }
}

Vocabulary Vocabulary::from_rules(std::span<const ThresholdRule> rules) {
    std::vector<std::string> names;
    for (const auto& r : rules) names.push_back(r.kpi_name);
    return Vocabulary(std::move(names));
}

std::optional<int> Vocabulary::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

int Vocabulary::index_of(const std::string& name) const {
    auto found = find(name);
    if (!found) throw ValidationError("event type '" + name + "' is not in the vocabulary");
    return *found;
}

EventBag make_bag(const EventWindow& window, const Vocabulary& vocabulary) {
    std::map<int, int> counts;
    Minutes tau = 0;
    for (const auto& e : window.events) {
        ++counts[vocabulary.index_of(e.event_type)];
        tau = std::max(tau, e.timestamp);
    }
    if (counts.empty()) throw ValidationError("window has no events");
    EventBag bag;
    bag.tau = tau;
    for (const auto& [type, frequency] : counts) bag.counts.push_back({type, frequency});
    return bag;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

double DecayParams::sigma(int type) const { return softplus(sigma_raw[type]); }

RepresentationParams RepresentationParams::initialize(std::size_t vocabulary_size, int embedding_dim,
                                                      int attention_dim, std::uint64_t seed) {
    if (vocabulary_size == 0 || embedding_dim < 1 || attention_dim < 1)
        throw ValidationError("representation dimensions must be positive");
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(embedding_dim));
    auto fill = [&](Matrix& m, Eigen::Index rows, Eigen::Index cols) {
        m.resize(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
    };
    const auto types = static_cast<Eigen::Index>(vocabulary_size);
    RepresentationParams p;
    fill(p.embeddings.vectors, types, embedding_dim);
    fill(p.projection.query, attention_dim, embedding_dim);
    fill(p.projection.key, attention_dim, embedding_dim);
    p.decay.theta = Vector::Zero(types);
    p.decay.sigma_raw = Vector::Constant(types, softplus_inverse(0.5));
    return p;
}

RepresentationParams RepresentationParams::zeros_like(const RepresentationParams& other) {
    RepresentationParams p;
    p.embeddings.vectors = Matrix::Zero(other.embeddings.vectors.rows(), other.embeddings.vectors.cols());
    p.projection.query = Matrix::Zero(other.projection.query.rows(), other.projection.query.cols());
    p.projection.key = Matrix::Zero(other.projection.key.rows(), other.projection.key.cols());
    p.decay.theta = Vector::Zero(other.decay.theta.size());
    p.decay.sigma_raw = Vector::Zero(other.decay.sigma_raw.size());
    return p;
}

namespace {

Matrix gather(const EventBag& bag, const EmbeddingTable& embeddings) {
    if (bag.counts.empty()) throw ValidationError("cannot encode an empty window");
    Matrix v(embeddings.vectors.cols(), static_cast<Eigen::Index>(bag.counts.size()));
    for (std::size_t n = 0; n < bag.counts.size(); ++n)
        v.col(static_cast<Eigen::Index>(n)) = embeddings.row(bag.counts[n].type);
    return v;
}

Matrix row_softmax(Matrix logits) {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double top = logits.row(r).maxCoeff();
        logits.row(r) = (logits.row(r).array() - top).exp();
        logits.row(r) /= logits.row(r).sum();
    }
    return logits;
}

double delta_for(const EventBag& bag, Minutes observation_end, Minutes horizon) {
    if (bag.tau > observation_end)
        throw ValidationError("window ends after the observation interval");
    return static_cast<double>(observation_end + horizon - bag.tau);
}

}  // namespace

Attention attend(const EventBag& bag, const EmbeddingTable& embeddings,
                 const AttentionProjection& projection) {
    const Matrix v = gather(bag, embeddings);
    const Matrix queries = projection.query * v;
    const Matrix keys = projection.key * v;
    const double scale = 1.0 / std::sqrt(static_cast<double>(projection.dimension()));
    Attention out;
    out.alpha = row_softmax(queries.transpose() * keys * scale);
    out.context = v * out.alpha.transpose();
    return out;
}

double contribution(int type, double delta_minutes, const DecayParams& decay) {
    const double days = delta_minutes / static_cast<double>(kMinutesPerDay);
    return sigmoid(decay.theta[type] - decay.sigma(type) * days);
}

Vector encode_window_plain(const EventBag& bag, const EmbeddingTable& embeddings) {
    Vector w = Vector::Zero(embeddings.vectors.cols());
    for (const auto& tc : bag.counts) w += tc.frequency * embeddings.row(tc.type);
    return w;
}

WindowEncoding encode_window_plain_terms(const EventBag& bag, const EmbeddingTable& embeddings) {
    WindowEncoding enc;
    enc.w = encode_window_plain(bag, embeddings);
    for (const auto& tc : bag.counts)
        enc.terms.push_back({tc.type, tc.frequency, 1.0, static_cast<double>(tc.frequency)});
    return enc;
}

WindowEncoding encode_window_attentive(const EventBag& bag, Minutes observation_end, Minutes horizon,
                                       const RepresentationParams& params) {
    WindowEncoding enc;
    enc.delta_minutes = delta_for(bag, observation_end, horizon);
    const Attention att = attend(bag, params.embeddings, params.projection);
    const auto n = static_cast<Eigen::Index>(bag.counts.size());
    Vector weight(n);
    enc.terms.resize(bag.counts.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& tc = bag.counts[static_cast<std::size_t>(i)];
        const double decay = contribution(tc.type, enc.delta_minutes, params.decay);
        weight[i] = tc.frequency * decay;
        enc.terms[static_cast<std::size_t>(i)] = {tc.type, tc.frequency, decay, 0.0};
    }
    enc.w = att.context * weight;
    const Vector coefficients = att.alpha.transpose() * weight;
    for (Eigen::Index i = 0; i < n; ++i) enc.terms[static_cast<std::size_t>(i)].coefficient = coefficients[i];
    return enc;
}

std::string to_string(EncoderKind kind) { return kind == EncoderKind::plain ? "plain" : "attentive"; }

EncoderKind parse_encoder_kind(const std::string& text) {
    if (text == "plain") return EncoderKind::plain;
    if (text == "attentive") return EncoderKind::attentive;
    throw ValidationError("unknown encoder '" + text + "' (expected plain or attentive)");
}

void backprop_plain(const EventBag& bag, const Vector& grad_w, RepresentationParams& grad) {
    for (const auto& tc : bag.counts)
        grad.embeddings.vectors.row(tc.type) += tc.frequency * grad_w.transpose();
}

void backprop_attentive(const EventBag& bag, double delta_minutes, const RepresentationParams& params,
                        const Vector& grad_w, RepresentationParams& grad) {
    const Matrix v = gather(bag, params.embeddings);
    const auto& proj = params.projection;
    const Matrix queries = proj.query * v;
    const Matrix keys = proj.key * v;
    const double scale = 1.0 / std::sqrt(static_cast<double>(proj.dimension()));
    const Matrix alpha = row_softmax(queries.transpose() * keys * scale);
    const Matrix context = v * alpha.transpose();

    const auto n = static_cast<Eigen::Index>(bag.counts.size());
    const double days = delta_minutes / static_cast<double>(kMinutesPerDay);
    Vector decay(n), weight(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& tc = bag.counts[static_cast<std::size_t>(i)];
        decay[i] = contribution(tc.type, delta_minutes, params.decay);
        weight[i] = tc.frequency * decay[i];
    }

    // w = context * weight, context = v * alpha^T
    const Vector grad_weight = context.transpose() * grad_w;
    const Vector grad_v_dot = v.transpose() * grad_w;
    const Matrix grad_alpha = weight * grad_v_dot.transpose();
    Matrix grad_v = grad_w * (alpha.transpose() * weight).transpose();

    Matrix grad_logits(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double inner = alpha.row(r).dot(grad_alpha.row(r));
        grad_logits.row(r) = alpha.row(r).array() * (grad_alpha.row(r).array() - inner);
    }
    grad_logits *= scale;
    const Matrix grad_queries = keys * grad_logits.transpose();
    const Matrix grad_keys = queries * grad_logits;
    grad.projection.query += grad_queries * v.transpose();
    grad.projection.key += grad_keys * v.transpose();
    grad_v += proj.query.transpose() * grad_queries + proj.key.transpose() * grad_keys;

    for (Eigen::Index i = 0; i < n; ++i) {
        const int type = bag.counts[static_cast<std::size_t>(i)].type;
        grad.embeddings.vectors.row(type) += grad_v.col(i).transpose();
        const double grad_decay = bag.counts[static_cast<std::size_t>(i)].frequency * grad_weight[i];
        const double grad_z = grad_decay * decay[i] * (1.0 - decay[i]);
        grad.decay.theta[type] += grad_z;
        grad.decay.sigma_raw[type] += -grad_z * days * sigmoid(params.decay.sigma_raw[type]);
    }
}

}  // namespace failex
