#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "failex/telemetry.hpp"
#include "failex/windowing.hpp"

namespace failex {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// The ordered event vocabulary. Index i is the row of the embedding table.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> names);

    static Vocabulary from_rules(std::span<const ThresholdRule> rules);

    std::size_t size() const { return names_.size(); }
    const std::string& name(std::size_t index) const { return names_.at(index); }
    const std::vector<std::string>& names() const { return names_; }
    std::optional<int> find(const std::string& name) const;
    int index_of(const std::string& name) const;  // throws ValidationError

    bool operator==(const Vocabulary& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
};

struct TypeCount {
    int type = 0;
    int frequency = 0;
};

/// A window reduced to unique event types with multiplicities.
struct EventBag {
    std::vector<TypeCount> counts;  // sorted by type, unique, frequency >= 1
    Minutes tau = 0;
};

EventBag make_bag(const EventWindow& window, const Vocabulary& vocabulary);

struct EmbeddingTable {
    Matrix vectors;  // |E| x s, row e is v_e

    int dimension() const { return static_cast<int>(vectors.cols()); }
    auto row(int type) const { return vectors.row(type).transpose(); }
};

/// Shared linear maps producing query and key vectors from an embedding.
struct AttentionProjection {
    Matrix query;  // a x s
    Matrix key;    // a x s

    int dimension() const { return static_cast<int>(query.rows()); }
};

/// Per-type decay: I = sigmoid(theta - softplus(sigma_raw) * delta_days).
struct DecayParams {
    Vector theta;
    Vector sigma_raw;

    double sigma(int type) const;
};

struct RepresentationParams {
    EmbeddingTable embeddings;
    AttentionProjection projection;
    DecayParams decay;

    /// Uniform(-1/sqrt(s), 1/sqrt(s)) embeddings and projections, theta = 0,
    /// sigma = 0.5.
    static RepresentationParams initialize(std::size_t vocabulary_size, int embedding_dim,
                                           int attention_dim, std::uint64_t seed);
    static RepresentationParams zeros_like(const RepresentationParams& other);
};

struct Attention {
    Matrix alpha;    // N_u x N_u, row n is the softmax for the n-th unique type
    Matrix context;  // s x N_u, column n is cv_n
};

/// Scaled dot-product attention over the unique types in `bag`.
Attention attend(const EventBag& bag, const EmbeddingTable& embeddings,
                 const AttentionProjection& projection);

/// Temporal contribution factor; `delta_minutes` is rescaled to days.
double contribution(int type, double delta_minutes, const DecayParams& decay);

/// Frequency-weighted sum of embeddings.
Vector encode_window_plain(const EventBag& bag, const EmbeddingTable& embeddings);

/// Per-type term of an attentive encoding: w = sum over terms of coefficient * v_type.
struct TypeTerm {
    int type = 0;
    int frequency = 0;
    double contribution = 0.0;  // I for this type
    double coefficient = 0.0;   // c_x = sum_n x_n I_n alpha_nx
};

struct WindowEncoding {
    Vector w;
    std::vector<TypeTerm> terms;
    double delta_minutes = 0.0;
};

/// w = sum_n x_n I_n cv_n, with delta = observation_end + horizon - tau.
/// Throws ValidationError if the window ends after the observation.
WindowEncoding encode_window_attentive(const EventBag& bag, Minutes observation_end, Minutes horizon,
                                       const RepresentationParams& params);

/// Plain-encoder terms: coefficient = frequency, contribution = 1.
WindowEncoding encode_window_plain_terms(const EventBag& bag, const EmbeddingTable& embeddings);

enum class EncoderKind { plain, attentive };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& text);

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/dw.
void backprop_plain(const EventBag& bag, const Vector& grad_w, RepresentationParams& grad);
void backprop_attentive(const EventBag& bag, double delta_minutes, const RepresentationParams& params,
                        const Vector& grad_w, RepresentationParams& grad);

double sigmoid(double x);
double softplus(double x);
double softplus_inverse(double y);

}  // namespace failex
