#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "failex/dataset.hpp"
#include "failex/representation.hpp"

namespace failex {

/// Gate blocks are stacked in the order input, forget, output, candidate.
enum class Gate : int { input = 0, forget = 1, output = 2, candidate = 3 };

struct LstmParams {
    Matrix input_weights;      // 4h x s
    Matrix recurrent_weights;  // 4h x h
    Vector bias;               // 4h
    Vector head_weights;       // h
    double head_bias = 0.0;

    int input_size() const { return static_cast<int>(input_weights.cols()); }
    int hidden_size() const { return static_cast<int>(recurrent_weights.cols()); }

    /// Gate weights uniform(-1/sqrt(s+h), 1/sqrt(s+h)), forget bias 1, other biases 0.
    static LstmParams initialize(int input_size, int hidden_size, std::uint64_t seed);
    static LstmParams zeros_like(const LstmParams& other);
};

/// Every trainable value of the model. Gradients and optimizer state share the layout.
struct Parameters {
    RepresentationParams representation;
    LstmParams lstm;

    static Parameters zeros_like(const Parameters& other);
};

struct ParamGroup {
    std::string name;
    std::span<double> values;
};

/// Flat views in a fixed order; two Parameters of equal shape yield aligned groups.
std::vector<ParamGroup> parameter_groups(Parameters& params);

struct ModelConfig {
    EncoderKind encoder = EncoderKind::attentive;
    int embedding_dim = 16;
    int attention_dim = 16;
    int hidden_size = 32;
    int sequence_length = 15;
};

struct Model {
    EncoderKind encoder = EncoderKind::attentive;
    int sequence_length = 15;
    Vocabulary vocabulary;
    Parameters params;

    static Model initialize(const Vocabulary& vocabulary, const ModelConfig& config, std::uint64_t seed);
};

/// Left-padded to a fixed length; padded steps have mask = false.
struct PaddedSequence {
    std::vector<Vector> steps;
    std::vector<bool> mask;
};

/// Throws ValidationError if there are more encodings than `length`.
PaddedSequence pad_sequence(std::span<const Vector> encodings, int length, int input_size);

struct ForwardResult {
    std::vector<Vector> hidden;  // one per step; padded steps repeat the carried state
    double logit = 0.0;
    double probability = 0.0;
};

/// LSTM over the padded sequence, then sigmoid(W h_p + b). Masked steps leave
/// the state untouched.
ForwardResult forward(const PaddedSequence& sequence, const LstmParams& params);

std::vector<WindowEncoding> encode_device(const Model& model, const DeviceSequence& device);
double predict(const Model& model, const DeviceSequence& device);

inline constexpr double kProbabilityClamp = 1e-7;

/// Weighted binary cross-entropy on the clamped probability.
double loss(double probability, int label, double positive_weight);

/// Mean loss over `batch`; writes the mean gradient into `grad` (overwritten).
double loss_and_gradient(const Model& model, std::span<const DeviceSequence> batch,
                         double positive_weight, Parameters& grad);
double batch_loss(const Model& model, std::span<const DeviceSequence> batch, double positive_weight);

enum class OptimizerKind { sgd, momentum, adam };
OptimizerKind parse_optimizer(const std::string& text);
std::string to_string(OptimizerKind kind);

class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(Parameters& params, Parameters& grad) = 0;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double learning_rate,
                                          const Parameters& shape);

struct TrainConfig {
    std::size_t batch_size = 50;
    int sequence_length = 15;
    double learning_rate = 0.1;
    int epochs = 100;
    double positive_class_weight = 32.0;
    std::uint64_t rng_seed = 7;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double clip_norm = 0.0;  // global gradient-norm clip; 0 disables

    void validate() const;
};

struct TrainResult {
    Model model;
    std::vector<double> epoch_losses;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Mini-batch training of every parameter group. Single-threaded and
/// bit-reproducible for a fixed seed. Throws ValidationError on an empty or
/// single-class training set.
TrainResult train(const Model& initial, std::span<const DeviceSequence> training_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

using GradientFunction =
    std::function<double(const Model&, std::span<const DeviceSequence>, double, Parameters&)>;

struct GradientCheckOptions {
    double epsilon = 1e-5;
    std::size_t coordinates = 240;
    std::uint64_t seed = 1;
    double positive_weight = 32.0;
    GradientFunction analytic;  // defaults to loss_and_gradient
};

struct GradientCheckReport {
    double max_relative_error = 0.0;
    std::string worst_group;
    std::size_t coordinates = 0;
    std::vector<std::pair<std::string, double>> per_group;  // max error per group
};

/// Central finite differences against the analytic gradient at randomly
/// sampled coordinates drawn from every parameter group. The numerical side
/// uses a separate extended-precision forward pass.
/// Error is |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).
GradientCheckReport gradient_check(const Model& model, std::span<const DeviceSequence> batch,
                                   const GradientCheckOptions& options = {});

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct Metrics {
    double precision_minority = 0.0;
    double recall_minority = 0.0;
    double f1_minority = 0.0;
    double balanced_accuracy = 0.0;
    Confusion confusion;
};

/// Zero denominators give zero rates.
Metrics metrics_from_confusion(const Confusion& confusion);

struct Prediction {
    std::string device_id;
    double probability = 0.0;
    int label = 0;  // probability >= 0.5
};

inline constexpr double kDecisionThreshold = 0.5;

std::vector<Prediction> predict_all(const Model& model, std::span<const DeviceSequence> devices);

/// Throws ValidationError on an empty dataset.
Metrics evaluate(const Model& model, std::span<const DeviceSequence> devices);

}  // namespace failex
