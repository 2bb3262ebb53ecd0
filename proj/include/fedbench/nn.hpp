#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedbench/matrix.hpp"
#include "fedbench/rng.hpp"

namespace fedbench {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

enum class Activation { Identity, Relu, Sigmoid };

// Parameter ownership role. Determines which entries of a flattened model a
// strategy federates and which stay client-side.
enum class Role : unsigned char { Global = 0, Local = 1, Classifier = 2 };

struct DenseLayer {
    Matrix weights;             // in_dim x out_dim
    std::vector<double> bias;   // out_dim
    Activation activation = Activation::Identity;

    DenseLayer() = default;
    DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act)
        : weights(in_dim, out_dim), bias(out_dim, 0.0), activation(act) {}

    std::size_t in_dim() const { return weights.rows; }
    std::size_t out_dim() const { return weights.cols; }
    std::size_t param_count() const { return weights.size() + bias.size(); }
};

struct SequentialModel {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.back().out_dim(); }
    std::size_t param_count() const;
};

// Two parallel extractors whose concatenated features feed a client-side
// head. Extractor widths may differ.
struct FendaModel {
    SequentialModel global_extractor;
    SequentialModel local_extractor;
    SequentialModel head;

    std::size_t input_dim() const { return global_extractor.input_dim(); }
    std::size_t output_dim() const { return head.output_dim(); }
    std::size_t param_count() const;
    void validate() const;
};

using Model = std::variant<SequentialModel, FendaModel>;

std::size_t input_dim(const Model& m);
std::size_t output_dim(const Model& m);
std::size_t count_params(const Model& m);

// Role assignment for a SequentialModel when flattening: the trailing
// `classifier_layers` are tagged Classifier, everything else `base_role`.
// FendaModel roles are structural and ignore this.
struct PartitionSpec {
    std::size_t classifier_layers = 0;
    Role base_role = Role::Global;
};

struct ParameterVector {
    std::vector<double> values;
    std::vector<Role> partition;

    std::size_t size() const { return values.size(); }
    std::size_t count_role(Role r) const;
    // Values whose role is in `roles`, in canonical order.
    std::vector<double> select(std::initializer_list<Role> roles) const;
};

// Canonical ordering: layer-major, weights row-major, then bias. For Fenda:
// global extractor, local extractor, head.
ParameterVector flatten(const Model& m, const PartitionSpec& spec = {});
void unflatten(Model& m, std::span<const double> values);

std::size_t count_params_role(const Model& m, Role role,
                              const PartitionSpec& spec = {});

// ---------------------------------------------------------------------------
// Forward / backward

struct SeqCache {
    std::vector<Matrix> inputs;    // inputs[l] = input to layer l
    std::vector<Matrix> preacts;   // pre-activation outputs per layer
    Matrix output;                 // post-activation output of the last layer
};

struct FendaCache {
    SeqCache global_c;
    SeqCache local_c;
    SeqCache head_c;
};

using ForwardCache = std::variant<SeqCache, FendaCache>;

struct ForwardResult {
    Matrix output;
    ForwardCache cache;
};

ForwardResult forward(const Model& m, const Matrix& batch);
// Forward pass without retaining activations.
Matrix predict(const Model& m, const Matrix& batch);

// Extra gradient injected into the post-activation output of layer `layer`
// during the reverse sweep (used for representation-level losses).
struct FeatureGrad {
    std::size_t layer;
    Matrix grad;
};

struct BackwardOptions {
    const FeatureGrad* seq_feature_grad = nullptr;  // SequentialModel only
    const Matrix* fenda_global_feature_grad = nullptr;
    const Matrix* fenda_local_feature_grad = nullptr;
    bool want_input_grad = false;
};

struct BackwardResult {
    ParameterVector grads;
    Matrix input_grad;  // filled when want_input_grad
};

BackwardResult backward(const Model& m, const ForwardCache& cache,
                        const Matrix& loss_grad, const BackwardOptions& opts = {},
                        const PartitionSpec& spec = {});

// ---------------------------------------------------------------------------
// Loss

struct LossResult {
    double loss;
    Matrix grad;  // dL/dpred, same shape as pred
};

// Mean binary cross-entropy over the batch; predictions clamped to
// [1e-7, 1-1e-7] before the log. Optional per-class weights scale each
// sample's term by the weight of its class.
LossResult bce_loss(const Matrix& pred, std::span<const int> targets,
                    std::span<const double> class_weights = {});

// ---------------------------------------------------------------------------
// Optimizers

enum class OptKind { Sgd, AdamW };

struct OptimizerState {
    OptKind kind = OptKind::Sgd;
    double lr = 0.01;
    std::size_t step = 0;
    std::vector<double> m;  // adamw first moment
    std::vector<double> v;  // adamw second moment
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    static OptimizerState sgd(double lr);
    static OptimizerState adamw(double lr, std::size_t n_params,
                                double beta1 = 0.9, double beta2 = 0.999,
                                double eps = 1e-8, double weight_decay = 0.01);
};

void optimizer_step(OptimizerState& state, std::vector<double>& params,
                    std::span<const double> grads);

// ---------------------------------------------------------------------------
// Misc

// a.b / (|a||b|); 0 when both vectors are zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Uniform +-sqrt(1/in_dim) per layer.
void init_params(Model& m, Rng& rng);

Matrix hcat(const Matrix& a, const Matrix& b);

// ---------------------------------------------------------------------------
// Builders

// Dense net input -> hidden... -> 1, hidden activation relu, sigmoid output.
SequentialModel make_binary_mlp(std::size_t input_dim,
                                std::span<const std::size_t> hidden);

// Extractor: every layer relu (a bare projection-plus-relu when one entry).
SequentialModel make_extractor(std::size_t input_dim,
                               std::span<const std::size_t> dims);

FendaModel make_fenda(std::size_t input_dim,
                      std::span<const std::size_t> global_dims,
                      std::span<const std::size_t> local_dims,
                      std::span<const std::size_t> head_hidden);

namespace arch {
// Fed-Heart-scale presets (13 input features, binary output).
SequentialModel heart_logistic();    // 14 params
SequentialModel heart_dnn();         // 13 -> 10 -> 1, 151 params
SequentialModel heart_apfl_twin();   // 13 -> 5 -> 1, 76 params (x2 = 152)
FendaModel heart_fenda();            // two 13 -> 5 extractors + 10 -> 1 head, 151
}  // namespace arch

}  // namespace fedbench
