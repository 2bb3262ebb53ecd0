#include "fedbench/nn.hpp"

#include <algorithm>
#include <cmath>

#include "fedbench/kernels.hpp"

namespace fedbench {

namespace {
const kernels::Ops& K() { return kernels::active(); }

constexpr double kProbClamp = 1e-7;

void check(bool ok, const std::string& msg) {
    if (!ok) throw DimensionError(msg);
}
}  // namespace

std::size_t SequentialModel::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
}

std::size_t FendaModel::param_count() const {
    return global_extractor.param_count() + local_extractor.param_count() +
           head.param_count();
}

void FendaModel::validate() const {
    check(global_extractor.input_dim() == local_extractor.input_dim(),
          "fenda: extractors expect different input dims (" +
              std::to_string(global_extractor.input_dim()) + " vs " +
              std::to_string(local_extractor.input_dim()) + ")");
    const std::size_t concat =
        global_extractor.output_dim() + local_extractor.output_dim();
    check(head.input_dim() == concat,
          "fenda: head input dim " + std::to_string(head.input_dim()) +
              " != concatenated feature dim " + std::to_string(concat));
}

std::size_t input_dim(const Model& m) {
    return std::visit([](const auto& x) { return x.input_dim(); }, m);
}

std::size_t output_dim(const Model& m) {
    return std::visit([](const auto& x) { return x.output_dim(); }, m);
}

std::size_t count_params(const Model& m) {
    return std::visit([](const auto& x) { return x.param_count(); }, m);
}

std::size_t ParameterVector::count_role(Role r) const {
    return static_cast<std::size_t>(
        std::count(partition.begin(), partition.end(), r));
}

std::vector<double> ParameterVector::select(
    std::initializer_list<Role> roles) const {
    std::vector<double> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        for (Role r : roles) {
            if (partition[i] == r) {
                out.push_back(values[i]);
                break;
            }
        }
    }
    return out;
}

namespace {

void flatten_seq(const SequentialModel& m, Role base, std::size_t classifier_layers,
                 ParameterVector& out) {
    const std::size_t split = m.layers.size() >= classifier_layers
                                  ? m.layers.size() - classifier_layers
                                  : 0;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const Role role = l >= split ? Role::Classifier : base;
        const auto& layer = m.layers[l];
        out.values.insert(out.values.end(), layer.weights.values.begin(),
                          layer.weights.values.end());
        out.values.insert(out.values.end(), layer.bias.begin(), layer.bias.end());
        out.partition.insert(out.partition.end(), layer.param_count(), role);
    }
}

void unflatten_seq(SequentialModel& m, std::span<const double> values,
                   std::size_t& pos) {
    for (auto& layer : m.layers) {
        std::copy_n(values.begin() + pos, layer.weights.size(),
                    layer.weights.values.begin());
        pos += layer.weights.size();
        std::copy_n(values.begin() + pos, layer.bias.size(), layer.bias.begin());
        pos += layer.bias.size();
    }
}

}  // namespace

ParameterVector flatten(const Model& m, const PartitionSpec& spec) {
    ParameterVector out;
    out.values.reserve(count_params(m));
    out.partition.reserve(count_params(m));
    if (const auto* seq = std::get_if<SequentialModel>(&m)) {
        flatten_seq(*seq, spec.base_role, spec.classifier_layers, out);
    } else {
        const auto& f = std::get<FendaModel>(m);
        flatten_seq(f.global_extractor, Role::Global, 0, out);
        flatten_seq(f.local_extractor, Role::Local, 0, out);
        flatten_seq(f.head, Role::Classifier, f.head.layers.size(), out);
    }
    return out;
}

void unflatten(Model& m, std::span<const double> values) {
    check(values.size() == count_params(m),
          "unflatten: got " + std::to_string(values.size()) + " values, model has " +
              std::to_string(count_params(m)) + " parameters");
    std::size_t pos = 0;
    if (auto* seq = std::get_if<SequentialModel>(&m)) {
        unflatten_seq(*seq, values, pos);
    } else {
        auto& f = std::get<FendaModel>(m);
        unflatten_seq(f.global_extractor, values, pos);
        unflatten_seq(f.local_extractor, values, pos);
        unflatten_seq(f.head, values, pos);
    }
}

std::size_t count_params_role(const Model& m, Role role, const PartitionSpec& spec) {
    return flatten(m, spec).count_role(role);
}

// ---------------------------------------------------------------------------

namespace {

void apply_activation(Activation act, const Matrix& pre, Matrix& post) {
    post.rows = pre.rows;
    post.cols = pre.cols;
    post.values.resize(pre.size());
    switch (act) {
        case Activation::Identity:
            post.values = pre.values;
            break;
        case Activation::Relu:
            K().relu(pre.data(), post.data(), pre.size());
            break;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < pre.size(); ++i)
                post.values[i] = 1.0 / (1.0 + std::exp(-pre.values[i]));
            break;
    }
}

SeqCache forward_seq(const SequentialModel& m, const Matrix& batch) {
    check(!m.layers.empty(), "forward: model has no layers");
    check(batch.cols == m.input_dim(),
          "forward: batch has " + std::to_string(batch.cols) +
              " features, model expects " + std::to_string(m.input_dim()));
    SeqCache cache;
    cache.inputs.reserve(m.layers.size());
    cache.preacts.reserve(m.layers.size());
    cache.inputs.push_back(batch);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& layer = m.layers[l];
        const Matrix& x = cache.inputs[l];
        check(x.cols == layer.in_dim(),
              "forward: layer " + std::to_string(l) + " expects " +
                  std::to_string(layer.in_dim()) + " inputs, got " +
                  std::to_string(x.cols));
        Matrix pre(x.rows, layer.out_dim());
        K().matmul(x.data(), layer.weights.data(), pre.data(), x.rows,
                   layer.in_dim(), layer.out_dim());
        for (std::size_t i = 0; i < pre.rows; ++i)
            K().add(pre.row(i), layer.bias.data(), pre.row(i), pre.cols);
        Matrix post;
        apply_activation(layer.activation, pre, post);
        cache.preacts.push_back(std::move(pre));
        if (l + 1 < m.layers.size())
            cache.inputs.push_back(std::move(post));
        else
            cache.output = std::move(post);
    }
    return cache;
}

}  // namespace

Matrix hcat(const Matrix& a, const Matrix& b) {
    check(a.rows == b.rows, "hcat: row mismatch " + std::to_string(a.rows) +
                                " vs " + std::to_string(b.rows));
    Matrix out(a.rows, a.cols + b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        std::copy_n(a.row(i), a.cols, out.row(i));
        std::copy_n(b.row(i), b.cols, out.row(i) + a.cols);
    }
    return out;
}

ForwardResult forward(const Model& m, const Matrix& batch) {
    if (const auto* seq = std::get_if<SequentialModel>(&m)) {
        SeqCache cache = forward_seq(*seq, batch);
        Matrix out = cache.output;
        return {std::move(out), std::move(cache)};
    }
    const auto& f = std::get<FendaModel>(m);
    f.validate();
    FendaCache cache;
    cache.global_c = forward_seq(f.global_extractor, batch);
    cache.local_c = forward_seq(f.local_extractor, batch);
    Matrix concat = hcat(cache.global_c.output, cache.local_c.output);
    cache.head_c = forward_seq(f.head, concat);
    Matrix out = cache.head_c.output;
    return {std::move(out), std::move(cache)};
}

Matrix predict(const Model& m, const Matrix& batch) {
    return forward(m, batch).output;
}

// ---------------------------------------------------------------------------

namespace {

struct SeqBackward {
    std::vector<double> grads;  // canonical order
    Matrix input_grad;
};

SeqBackward backward_seq(const SequentialModel& m, const SeqCache& cache,
                         const Matrix& loss_grad, const FeatureGrad* feature_grad,
                         bool want_input_grad) {
    const std::size_t n_layers = m.layers.size();
    check(cache.inputs.size() == n_layers && cache.preacts.size() == n_layers,
          "backward: cache does not match model (layers " +
              std::to_string(n_layers) + ", cached " +
              std::to_string(cache.inputs.size()) + ")");
    check(loss_grad.rows == cache.output.rows &&
              loss_grad.cols == cache.output.cols,
          "backward: loss gradient shape mismatch");

    // Per-layer gradients gathered in reverse, assembled in forward order.
    std::vector<std::vector<double>> layer_grads(n_layers);
    Matrix d_post = loss_grad;
    Matrix input_grad;

    for (std::size_t li = n_layers; li-- > 0;) {
        const auto& layer = m.layers[li];
        const Matrix& pre = cache.preacts[li];
        const Matrix& x = cache.inputs[li];
        check(x.cols == layer.in_dim() && pre.cols == layer.out_dim() &&
                  x.rows == pre.rows,
              "backward: cached activations do not match layer " +
                  std::to_string(li));
        const Matrix& post =
            li + 1 < n_layers ? cache.inputs[li + 1] : cache.output;

        Matrix d_pre(pre.rows, pre.cols);
        switch (layer.activation) {
            case Activation::Identity:
                d_pre.values = d_post.values;
                break;
            case Activation::Relu:
                K().relu_backward(pre.data(), d_post.data(), d_pre.data(),
                                  pre.size());
                break;
            case Activation::Sigmoid:
                for (std::size_t i = 0; i < pre.size(); ++i) {
                    const double s = post.values[i];
                    d_pre.values[i] = d_post.values[i] * s * (1.0 - s);
                }
                break;
        }

        // dW = X^T dPre, db = column sums of dPre.
        std::vector<double> g(layer.param_count());
        K().matmul_tn(x.data(), d_pre.data(), g.data(), layer.in_dim(), x.rows,
                      layer.out_dim());
        double* db = g.data() + layer.weights.size();
        for (std::size_t i = 0; i < d_pre.rows; ++i)
            K().axpy(1.0, d_pre.row(i), db, d_pre.cols);
        layer_grads[li] = std::move(g);

        if (li > 0 || want_input_grad) {
            Matrix d_x(d_pre.rows, layer.in_dim());
            K().matmul_nt(d_pre.data(), layer.weights.data(), d_x.data(),
                          d_pre.rows, layer.out_dim(), layer.in_dim());
            if (li == 0) {
                input_grad = std::move(d_x);
            } else {
                if (feature_grad != nullptr && feature_grad->layer == li - 1) {
                    check(feature_grad->grad.rows == d_x.rows &&
                              feature_grad->grad.cols == d_x.cols,
                          "backward: feature gradient shape mismatch");
                    K().add(d_x.data(), feature_grad->grad.data(), d_x.data(),
                            d_x.size());
                }
                d_post = std::move(d_x);
            }
        }
    }

    SeqBackward out;
    out.grads.reserve(m.param_count());
    for (auto& g : layer_grads)
        out.grads.insert(out.grads.end(), g.begin(), g.end());
    out.input_grad = std::move(input_grad);
    return out;
}

void append_roles(ParameterVector& pv, std::vector<double>&& vals, Role role) {
    pv.partition.insert(pv.partition.end(), vals.size(), role);
    pv.values.insert(pv.values.end(), vals.begin(), vals.end());
}

}  // namespace

BackwardResult backward(const Model& m, const ForwardCache& cache,
                        const Matrix& loss_grad, const BackwardOptions& opts,
                        const PartitionSpec& spec) {
    BackwardResult result;
    if (const auto* seq = std::get_if<SequentialModel>(&m)) {
        const auto* c = std::get_if<SeqCache>(&cache);
        check(c != nullptr, "backward: cache kind does not match model");
        SeqBackward sb = backward_seq(*seq, *c, loss_grad, opts.seq_feature_grad,
                                      opts.want_input_grad);
        // Roles mirror flatten().
        ParameterVector pv;
        pv.values = std::move(sb.grads);
        const std::size_t split = seq->layers.size() >= spec.classifier_layers
                                      ? seq->layers.size() - spec.classifier_layers
                                      : 0;
        for (std::size_t l = 0; l < seq->layers.size(); ++l) {
            const Role role = l >= split ? Role::Classifier : spec.base_role;
            pv.partition.insert(pv.partition.end(), seq->layers[l].param_count(),
                                role);
        }
        result.grads = std::move(pv);
        result.input_grad = std::move(sb.input_grad);
        return result;
    }

    const auto& f = std::get<FendaModel>(m);
    const auto* c = std::get_if<FendaCache>(&cache);
    check(c != nullptr, "backward: cache kind does not match model");

    SeqBackward head_b =
        backward_seq(f.head, c->head_c, loss_grad, nullptr, true);

    const std::size_t hg = f.global_extractor.output_dim();
    const std::size_t hl = f.local_extractor.output_dim();
    const Matrix& d_concat = head_b.input_grad;
    Matrix d_zg(d_concat.rows, hg);
    Matrix d_zl(d_concat.rows, hl);
    for (std::size_t i = 0; i < d_concat.rows; ++i) {
        std::copy_n(d_concat.row(i), hg, d_zg.row(i));
        std::copy_n(d_concat.row(i) + hg, hl, d_zl.row(i));
    }
    if (opts.fenda_global_feature_grad != nullptr)
        K().add(d_zg.data(), opts.fenda_global_feature_grad->data(), d_zg.data(),
                d_zg.size());
    if (opts.fenda_local_feature_grad != nullptr)
        K().add(d_zl.data(), opts.fenda_local_feature_grad->data(), d_zl.data(),
                d_zl.size());

    SeqBackward global_b = backward_seq(f.global_extractor, c->global_c, d_zg,
                                        nullptr, opts.want_input_grad);
    SeqBackward local_b =
        backward_seq(f.local_extractor, c->local_c, d_zl, nullptr, false);

    ParameterVector pv;
    pv.values.reserve(f.param_count());
    append_roles(pv, std::move(global_b.grads), Role::Global);
    append_roles(pv, std::move(local_b.grads), Role::Local);
    append_roles(pv, std::move(head_b.grads), Role::Classifier);
    result.grads = std::move(pv);
    result.input_grad = std::move(global_b.input_grad);
    return result;
}

// ---------------------------------------------------------------------------

LossResult bce_loss(const Matrix& pred, std::span<const int> targets,
                    std::span<const double> class_weights) {
    check(pred.cols == 1, "bce_loss: predictions must be a single column, got " +
                              std::to_string(pred.cols));
    check(pred.rows == targets.size(),
          "bce_loss: " + std::to_string(pred.rows) + " predictions vs " +
              std::to_string(targets.size()) + " targets");
    check(class_weights.empty() || class_weights.size() == 2,
          "bce_loss: class_weights must hold one weight per class");

    const double n = static_cast<double>(pred.rows);
    double total = 0.0;
    Matrix grad(pred.rows, 1);
    for (std::size_t i = 0; i < pred.rows; ++i) {
        const double p =
            std::clamp(pred.values[i], kProbClamp, 1.0 - kProbClamp);
        const int y = targets[i];
        const double w = class_weights.empty() ? 1.0 : class_weights[y];
        total += w * (y == 1 ? -std::log(p) : -std::log(1.0 - p));
        grad.values[i] = w / n * (y == 1 ? -1.0 / p : 1.0 / (1.0 - p));
    }
    return {total / n, std::move(grad)};
}

// ---------------------------------------------------------------------------

OptimizerState OptimizerState::sgd(double lr) {
    OptimizerState s;
    s.kind = OptKind::Sgd;
    s.lr = lr;
    return s;
}

OptimizerState OptimizerState::adamw(double lr, std::size_t n_params, double beta1,
                                     double beta2, double eps,
                                     double weight_decay) {
    OptimizerState s;
    s.kind = OptKind::AdamW;
    s.lr = lr;
    s.m.assign(n_params, 0.0);
    s.v.assign(n_params, 0.0);
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    s.weight_decay = weight_decay;
    return s;
}

void optimizer_step(OptimizerState& state, std::vector<double>& params,
                    std::span<const double> grads) {
    check(params.size() == grads.size(),
          "optimizer_step: " + std::to_string(params.size()) + " params vs " +
              std::to_string(grads.size()) + " grads");
    state.step += 1;
    if (state.kind == OptKind::Sgd) {
        K().sgd_step(params.data(), grads.data(), state.lr, params.size());
        return;
    }
    check(state.m.size() == params.size() && state.v.size() == params.size(),
          "optimizer_step: adamw moment size mismatch");
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 / (1.0 - std::pow(state.beta1, t));
    const double bc2 = 1.0 / (1.0 - std::pow(state.beta2, t));
    K().adamw_step(params.data(), state.m.data(), state.v.data(), grads.data(),
                   state.lr, state.beta1, state.beta2, state.eps,
                   state.weight_decay, bc1, bc2, params.size());
}

// ---------------------------------------------------------------------------

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    check(a.size() == b.size(), "cosine_similarity: length mismatch " +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    const double na = K().dot(a.data(), a.data(), a.size());
    const double nb = K().dot(b.data(), b.data(), b.size());
    if (na == 0.0 || nb == 0.0) return 0.0;
    const double c = K().dot(a.data(), b.data(), a.size()) /
                     (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

namespace {
void init_seq(SequentialModel& m, Rng& rng) {
    for (auto& layer : m.layers) {
        const double bound = std::sqrt(1.0 / static_cast<double>(layer.in_dim()));
        for (auto& w : layer.weights.values) w = rng.uniform(-bound, bound);
        for (auto& b : layer.bias) b = rng.uniform(-bound, bound);
    }
}
}  // namespace

void init_params(Model& m, Rng& rng) {
    if (auto* seq = std::get_if<SequentialModel>(&m)) {
        init_seq(*seq, rng);
        return;
    }
    auto& f = std::get<FendaModel>(m);
    init_seq(f.global_extractor, rng);
    init_seq(f.local_extractor, rng);
    init_seq(f.head, rng);
}

// ---------------------------------------------------------------------------

SequentialModel make_binary_mlp(std::size_t input_dim,
                                std::span<const std::size_t> hidden) {
    SequentialModel m;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
        m.layers.emplace_back(in, h, Activation::Relu);
        in = h;
    }
    m.layers.emplace_back(in, 1, Activation::Sigmoid);
    return m;
}

SequentialModel make_extractor(std::size_t input_dim,
                               std::span<const std::size_t> dims) {
    check(!dims.empty(), "make_extractor: need at least one layer size");
    SequentialModel m;
    std::size_t in = input_dim;
    for (std::size_t d : dims) {
        m.layers.emplace_back(in, d, Activation::Relu);
        in = d;
    }
    return m;
}

FendaModel make_fenda(std::size_t input_dim,
                      std::span<const std::size_t> global_dims,
                      std::span<const std::size_t> local_dims,
                      std::span<const std::size_t> head_hidden) {
    FendaModel f;
    f.global_extractor = make_extractor(input_dim, global_dims);
    f.local_extractor = make_extractor(input_dim, local_dims);
    f.head = make_binary_mlp(
        f.global_extractor.output_dim() + f.local_extractor.output_dim(),
        head_hidden);
    f.validate();
    return f;
}

namespace arch {

SequentialModel heart_logistic() {
    SequentialModel m;
    m.layers.emplace_back(13, 1, Activation::Sigmoid);
    return m;
}

SequentialModel heart_dnn() {
    const std::size_t hidden[] = {10};
    return make_binary_mlp(13, hidden);
}

SequentialModel heart_apfl_twin() {
    const std::size_t hidden[] = {5};
    return make_binary_mlp(13, hidden);
}

FendaModel heart_fenda() {
    const std::size_t ext[] = {5};
    return make_fenda(13, ext, ext, {});
}

}  // namespace arch

}  // namespace fedbench
