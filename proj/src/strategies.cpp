#include "fedbench/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedbench/kernels.hpp"

namespace fedbench {

namespace {
const kernels::Ops& K() { return kernels::active(); }
}

const char* strategy_name(StrategyKind k) {
    switch (k) {
        case StrategyKind::FedAvg: return "fedavg";
        case StrategyKind::FedAdam: return "fedadam";
        case StrategyKind::FedProx: return "fedprox";
        case StrategyKind::Scaffold: return "scaffold";
        case StrategyKind::Moon: return "moon";
        case StrategyKind::FedPer: return "fedper";
        case StrategyKind::Ditto: return "ditto";
        case StrategyKind::Apfl: return "apfl";
        case StrategyKind::PerFcl: return "perfcl";
        case StrategyKind::Fenda: return "fenda";
    }
    return "?";
}

StrategyKind strategy_from_name(const std::string& name) {
    for (StrategyKind k :
         {StrategyKind::FedAvg, StrategyKind::FedAdam, StrategyKind::FedProx,
          StrategyKind::Scaffold, StrategyKind::Moon, StrategyKind::FedPer,
          StrategyKind::Ditto, StrategyKind::Apfl, StrategyKind::PerFcl,
          StrategyKind::Fenda}) {
        if (name == strategy_name(k)) return k;
    }
    throw std::invalid_argument("unknown strategy '" + name + "'");
}

bool is_personalized(StrategyKind k) {
    switch (k) {
        case StrategyKind::FedPer:
        case StrategyKind::Ditto:
        case StrategyKind::Apfl:
        case StrategyKind::PerFcl:
        case StrategyKind::Fenda:
            return true;
        default:
            return false;
    }
}

Model ModelSpec::build() const {
    if (fenda) return make_fenda(input_dim, global_hidden, local_hidden, head_hidden);
    return Model{make_binary_mlp(input_dim, hidden)};
}

// ---------------------------------------------------------------------------
// Client model plumbing

PartitionSpec ClientState::partition() const {
    if (strategy.kind == StrategyKind::FedPer)
        return PartitionSpec{.classifier_layers = spec.classifier_layers};
    return PartitionSpec{};
}

Model ClientState::eval_model() const {
    switch (strategy.kind) {
        case StrategyKind::Ditto:
            return *personal_model;
        case StrategyKind::Apfl: {
            const auto w = flatten(model).values;
            auto bar = flatten(*personal_model).values;
            K().scale(apfl_alpha, bar.data(), bar.size());
            K().axpy(1.0 - apfl_alpha, w.data(), bar.data(), bar.size());
            Model mixed = *personal_model;
            unflatten(mixed, bar);
            return mixed;
        }
        default:
            return model;
    }
}

std::size_t ClientState::trainable_param_count() const {
    return count_params(model) +
           (personal_model ? count_params(*personal_model) : 0);
}

std::vector<double> federated_payload(const StrategyConfig& strategy,
                                      const Model& model,
                                      const PartitionSpec& part) {
    switch (strategy.kind) {
        case StrategyKind::FedPer:
            return flatten(model, part).select({Role::Global});
        case StrategyKind::Fenda:
        case StrategyKind::PerFcl:
            return flatten(model).select({Role::Global});
        default:
            return flatten(model, part).values;
    }
}

namespace {

void overlay_role(Model& m, const PartitionSpec& part, Role role,
                  std::span<const double> values) {
    auto pv = flatten(m, part);
    std::size_t j = 0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        if (pv.partition[i] == role) {
            if (j >= values.size())
                throw DimensionError("payload shorter than the model's subset");
            pv.values[i] = values[j++];
        }
    }
    if (j != values.size())
        throw DimensionError("payload has " + std::to_string(values.size()) +
                             " values, model subset has " + std::to_string(j));
    unflatten(m, pv.values);
}

OptimizerState make_client_optimizer(const StrategyConfig& s, std::size_t n) {
    if (s.kind == StrategyKind::Scaffold || s.client_optimizer == OptKind::Sgd)
        return OptimizerState::sgd(s.client_lr);
    return OptimizerState::adamw(s.client_lr, n, 0.9, 0.999, 1e-8,
                                 s.weight_decay);
}

}  // namespace

void install_payload(ClientState& client, const ServerPayload& payload) {
    switch (client.strategy.kind) {
        case StrategyKind::FedPer:
            overlay_role(client.model, client.partition(), Role::Global,
                         payload.global_params);
            break;
        case StrategyKind::Fenda:
        case StrategyKind::PerFcl:
            overlay_role(client.model, PartitionSpec{}, Role::Global,
                         payload.global_params);
            break;
        default:
            unflatten(client.model, payload.global_params);
            break;
    }
}

ServerPayload broadcast_payload(const ServerState& server,
                                const StrategyConfig& strategy) {
    ServerPayload p;
    p.global_params = server.global_params;
    if (strategy.kind == StrategyKind::Scaffold) p.scaffold_c = server.scaffold_c;
    return p;
}

ServerInit make_server(const StrategyConfig& strategy, const ModelSpec& spec,
                       std::uint64_t run_seed) {
    Model tmpl = spec.build();
    Rng rng = Rng::stream(run_seed, "server-init");
    init_params(tmpl, rng);

    PartitionSpec part;
    if (strategy.kind == StrategyKind::FedPer)
        part.classifier_layers = spec.classifier_layers;

    ServerInit out;
    out.template_params = flatten(tmpl).values;
    out.state.global_params = federated_payload(strategy, tmpl, part);
    const std::size_t n = out.state.global_params.size();
    if (strategy.kind == StrategyKind::FedAdam) {
        out.state.fedadam_m.assign(n, 0.0);
        out.state.fedadam_v.assign(n, 0.0);
    }
    if (strategy.kind == StrategyKind::Scaffold)
        out.state.scaffold_c.assign(n, 0.0);
    return out;
}

ClientState make_client(int id, const StrategyConfig& strategy,
                        const ModelSpec& spec, TabularDataset train,
                        TabularDataset val, const ServerPayload& initial,
                        const std::vector<double>& template_params,
                        std::uint64_t run_seed) {
    ClientState c{
        .client_id = id,
        .strategy = strategy,
        .spec = spec,
        .model = spec.build(),
        .personal_model = {},
        .opt = {},
        .personal_opt = {},
        .scaffold_ci = {},
        .apfl_alpha = strategy.alpha_init,
        .prev_snapshot = {},
        .train = std::move(train),
        .val = std::move(val),
        .loader = BatchLoader(0, Rng(0)),
        .class_weights = {},
    };
    Rng init_rng = Rng::stream(run_seed, "client-init",
                               static_cast<std::uint64_t>(id));
    init_params(c.model, init_rng);
    c.opt = make_client_optimizer(strategy, count_params(c.model));

    if (strategy.kind == StrategyKind::Ditto ||
        strategy.kind == StrategyKind::Apfl) {
        Model personal = spec.build();
        Rng personal_rng = Rng::stream(run_seed, "client-personal-init",
                                       static_cast<std::uint64_t>(id));
        init_params(personal, personal_rng);
        c.personal_model = std::move(personal);
        c.personal_opt = make_client_optimizer(strategy,
                                               count_params(*c.personal_model));
    }
    if (strategy.kind == StrategyKind::Scaffold)
        c.scaffold_ci.assign(count_params(c.model), 0.0);

    c.loader = BatchLoader(c.train.size(),
                           Rng::stream(run_seed, "client-batches",
                                       static_cast<std::uint64_t>(id)));
    install_payload(c, initial);
    if (strategy.kind == StrategyKind::Moon ||
        strategy.kind == StrategyKind::PerFcl)
        c.prev_snapshot = flatten(c.model).values;
    return c;
}

// ---------------------------------------------------------------------------
// Contrastive term shared by moon and perfcl.
//
// l = -log( e^{cos(z,pos)/T} / (e^{cos(z,pos)/T} + e^{cos(z,neg)/T}) ),
// averaged over the batch; dz holds the gradient of that mean. The exact
// pairing for perfcl is isolated here so it can be revised in one place.

namespace {

struct ContrastiveOut {
    double mean_loss = 0.0;
    Matrix dz;
};

// d cos(z,u) / dz = u/(|z||u|) - cos * z/|z|^2; zero when either norm is zero.
void add_cos_grad(std::span<const double> z, std::span<const double> u,
                  double coeff, double* out) {
    const std::size_t d = z.size();
    const double nz2 = K().dot(z.data(), z.data(), d);
    const double nu2 = K().dot(u.data(), u.data(), d);
    if (nz2 == 0.0 || nu2 == 0.0) return;
    const double nz = std::sqrt(nz2);
    const double nu = std::sqrt(nu2);
    const double c = K().dot(z.data(), u.data(), d) / (nz * nu);
    for (std::size_t j = 0; j < d; ++j)
        out[j] += coeff * (u[j] / (nz * nu) - c * z[j] / nz2);
}

ContrastiveOut contrastive_pull_push(const Matrix& z, const Matrix& positive,
                                     const Matrix& negative, double temperature) {
    if (z.rows != positive.rows || z.rows != negative.rows ||
        z.cols != positive.cols || z.cols != negative.cols)
        throw DimensionError(
            "contrastive: feature matrices must share one shape");
    ContrastiveOut out;
    out.dz = Matrix(z.rows, z.cols);
    const double n = static_cast<double>(z.rows);
    for (std::size_t i = 0; i < z.rows; ++i) {
        std::span<const double> zi(z.row(i), z.cols);
        std::span<const double> pi(positive.row(i), z.cols);
        std::span<const double> ni(negative.row(i), z.cols);
        const double a = cosine_similarity(zi, pi) / temperature;
        const double b = cosine_similarity(zi, ni) / temperature;
        const double m = std::max(a, b);
        const double ea = std::exp(a - m);
        const double eb = std::exp(b - m);
        out.mean_loss += (-(a - m) + std::log(ea + eb)) / n;
        const double p_pos = ea / (ea + eb);
        const double p_neg = eb / (ea + eb);
        add_cos_grad(zi, pi, (p_pos - 1.0) / (temperature * n), out.dz.row(i));
        add_cos_grad(zi, ni, p_neg / (temperature * n), out.dz.row(i));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Local training steps

struct Batch {
    Matrix x;
    std::vector<int> y;
};

Batch gather(const TabularDataset& d, const std::vector<std::size_t>& idx) {
    Batch b;
    b.x = Matrix(idx.size(), d.dim());
    b.y.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy_n(d.features.row(idx[r]), d.dim(), b.x.row(r));
        b.y.push_back(d.labels[idx[r]]);
    }
    return b;
}

double ce_step(Model& m, OptimizerState& opt, const Batch& b,
               std::span<const double> cw) {
    auto fwd = forward(m, b.x);
    auto loss = bce_loss(fwd.output, b.y, cw);
    auto grads = backward(m, fwd.cache, loss.grad).grads;
    auto params = flatten(m).values;
    optimizer_step(opt, params, grads.values);
    unflatten(m, params);
    return loss.loss;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

const Matrix& seq_features(const ForwardCache& cache) {
    return std::get<SeqCache>(cache).inputs.back();
}

double moon_step(ClientState& c, const Batch& b, const Model& ref_global,
                 const Model& prev_model) {
    const auto& cfg = c.strategy;
    auto fwd = forward(c.model, b.x);
    auto loss = bce_loss(fwd.output, b.y, c.class_weights);
    double total = loss.loss;

    BackwardOptions opts;
    FeatureGrad fg;
    if (cfg.mu_moon != 0.0) {
        const auto& seq = std::get<SequentialModel>(c.model);
        if (seq.layers.size() < 2)
            throw TrainingError(c.client_id,
                                "moon requires an extractor+head model");
        const Matrix& z = seq_features(fwd.cache);
        const Matrix z_glob = seq_features(forward(ref_global, b.x).cache);
        const Matrix z_prev = seq_features(forward(prev_model, b.x).cache);
        auto con = contrastive_pull_push(z, z_glob, z_prev, cfg.temperature);
        total += cfg.mu_moon * con.mean_loss;
        K().scale(cfg.mu_moon, con.dz.data(), con.dz.size());
        fg.layer = seq.layers.size() - 2;
        fg.grad = std::move(con.dz);
        opts.seq_feature_grad = &fg;
    }
    auto grads = backward(c.model, fwd.cache, loss.grad, opts).grads;
    auto params = flatten(c.model).values;
    optimizer_step(c.opt, params, grads.values);
    unflatten(c.model, params);
    return total;
}

double perfcl_step(ClientState& c, const Batch& b, const Model& ref_extractor,
                   const Model& prev_local_extractor) {
    const auto& cfg = c.strategy;
    auto fwd = forward(c.model, b.x);
    auto loss = bce_loss(fwd.output, b.y, c.class_weights);
    double total = loss.loss;

    BackwardOptions opts;
    Matrix dzg, dzl;
    if (cfg.mu_perfcl != 0.0 || cfg.gamma_perfcl != 0.0) {
        const auto& cache = std::get<FendaCache>(fwd.cache);
        const Matrix& z = cache.global_c.output;
        const Matrix& zl = cache.local_c.output;
        if (z.cols != zl.cols)
            throw TrainingError(c.client_id,
                                "perfcl contrastive losses need equal global "
                                "and local latent dims");
        const Matrix z_agg = predict(ref_extractor, b.x);
        const Matrix z_prev = predict(prev_local_extractor, b.x);
        auto con_g = contrastive_pull_push(z, z_agg, z_prev, cfg.temperature);
        auto con_l = contrastive_pull_push(zl, z_prev, z_agg, cfg.temperature);
        total += cfg.mu_perfcl * con_g.mean_loss +
                 cfg.gamma_perfcl * con_l.mean_loss;
        dzg = std::move(con_g.dz);
        dzl = std::move(con_l.dz);
        K().scale(cfg.mu_perfcl, dzg.data(), dzg.size());
        K().scale(cfg.gamma_perfcl, dzl.data(), dzl.size());
        opts.fenda_global_feature_grad = &dzg;
        opts.fenda_local_feature_grad = &dzl;
    }
    auto grads = backward(c.model, fwd.cache, loss.grad, opts).grads;
    auto params = flatten(c.model).values;
    optimizer_step(c.opt, params, grads.values);
    unflatten(c.model, params);
    return total;
}

double apfl_step(ClientState& c, const Batch& b, Model& mixed_scratch) {
    const auto& cfg = c.strategy;
    const auto w_snap = flatten(c.model).values;
    ce_step(c.model, c.opt, b, c.class_weights);

    auto v = flatten(*c.personal_model).values;
    auto bar = v;
    K().scale(c.apfl_alpha, bar.data(), bar.size());
    K().axpy(1.0 - c.apfl_alpha, w_snap.data(), bar.data(), bar.size());
    unflatten(mixed_scratch, bar);

    auto fwd = forward(mixed_scratch, b.x);
    auto loss = bce_loss(fwd.output, b.y, c.class_weights);
    auto g_mixed = backward(mixed_scratch, fwd.cache, loss.grad).grads;

    const double new_alpha = apfl_alpha_update(c.apfl_alpha, g_mixed.values,
                                               w_snap, v, cfg.alpha_lr);
    K().scale(c.apfl_alpha, g_mixed.values.data(), g_mixed.values.size());
    optimizer_step(*c.personal_opt, v, g_mixed.values);
    unflatten(*c.personal_model, v);
    c.apfl_alpha = new_alpha;
    return loss.loss;
}

}  // namespace

ClientUpdate client_update(ClientState& c, const ServerPayload& payload,
                           const TrainSettings& settings) {
    if (c.train.empty())
        throw TrainingError(c.client_id,
                            "client " + std::to_string(c.client_id) +
                                ": empty training split");
    install_payload(c, payload);
    const StrategyKind kind = c.strategy.kind;

    std::vector<double> anchor;  // fedprox / ditto round-start reference
    if (kind == StrategyKind::FedProx) anchor = flatten(c.model).values;
    if (kind == StrategyKind::Ditto) anchor = payload.global_params;

    std::vector<double> x_start;
    if (kind == StrategyKind::Scaffold) {
        if (!payload.scaffold_c)
            throw TrainingError(c.client_id, "scaffold payload is missing c");
        x_start = flatten(c.model).values;
    }

    std::optional<Model> ref_model;   // moon: round-start global model
    std::optional<Model> prev_model;  // moon: previous-round local model
    if (kind == StrategyKind::Moon && c.strategy.mu_moon != 0.0) {
        ref_model = c.model;
        prev_model = c.model;
        unflatten(*prev_model, c.prev_snapshot);
    }
    std::optional<Model> ref_extractor;   // perfcl: aggregated global extractor
    std::optional<Model> prev_extractor;  // perfcl: previous local extractor
    if (kind == StrategyKind::PerFcl &&
        (c.strategy.mu_perfcl != 0.0 || c.strategy.gamma_perfcl != 0.0)) {
        ref_extractor = Model{std::get<FendaModel>(c.model).global_extractor};
        Model prev_full = c.model;
        unflatten(prev_full, c.prev_snapshot);
        prev_extractor = Model{std::get<FendaModel>(prev_full).local_extractor};
    }
    std::optional<Model> mixed_scratch;
    if (kind == StrategyKind::Apfl) mixed_scratch = *c.personal_model;

    double loss_sum = 0.0;
    for (std::size_t step = 0; step < settings.steps; ++step) {
        const Batch b = gather(c.train, c.loader.next_batch(settings.batch_size));
        double loss = 0.0;
        switch (kind) {
            case StrategyKind::FedAvg:
            case StrategyKind::FedAdam:
            case StrategyKind::FedPer:
            case StrategyKind::Fenda:
                loss = ce_step(c.model, c.opt, b, c.class_weights);
                break;
            case StrategyKind::FedProx: {
                auto fwd = forward(c.model, b.x);
                auto l = bce_loss(fwd.output, b.y, c.class_weights);
                auto grads = backward(c.model, fwd.cache, l.grad).grads;
                auto params = flatten(c.model).values;
                loss = l.loss;
                if (c.strategy.mu_prox != 0.0) {
                    K().prox_acc(c.strategy.mu_prox, params.data(), anchor.data(),
                                 grads.values.data(), params.size());
                    loss += 0.5 * c.strategy.mu_prox * sq_dist(params, anchor);
                }
                optimizer_step(c.opt, params, grads.values);
                unflatten(c.model, params);
                break;
            }
            case StrategyKind::Scaffold: {
                auto fwd = forward(c.model, b.x);
                auto l = bce_loss(fwd.output, b.y, c.class_weights);
                auto grads = backward(c.model, fwd.cache, l.grad).grads;
                auto params = flatten(c.model).values;
                K().scaffold_step(params.data(), grads.values.data(),
                                  c.scaffold_ci.data(), payload.scaffold_c->data(),
                                  c.strategy.client_lr, params.size());
                unflatten(c.model, params);
                loss = l.loss;
                break;
            }
            case StrategyKind::Moon:
                loss = c.strategy.mu_moon != 0.0
                           ? moon_step(c, b, *ref_model, *prev_model)
                           : ce_step(c.model, c.opt, b, c.class_weights);
                break;
            case StrategyKind::Ditto: {
                ce_step(c.model, c.opt, b, c.class_weights);
                auto fwd = forward(*c.personal_model, b.x);
                auto l = bce_loss(fwd.output, b.y, c.class_weights);
                auto grads = backward(*c.personal_model, fwd.cache, l.grad).grads;
                auto params = flatten(*c.personal_model).values;
                loss = l.loss;
                if (c.strategy.lambda_ditto != 0.0) {
                    K().prox_acc(c.strategy.lambda_ditto, params.data(),
                                 anchor.data(), grads.values.data(),
                                 params.size());
                    loss += 0.5 * c.strategy.lambda_ditto * sq_dist(params, anchor);
                }
                optimizer_step(*c.personal_opt, params, grads.values);
                unflatten(*c.personal_model, params);
                break;
            }
            case StrategyKind::Apfl:
                loss = apfl_step(c, b, *mixed_scratch);
                break;
            case StrategyKind::PerFcl:
                loss = (c.strategy.mu_perfcl != 0.0 ||
                        c.strategy.gamma_perfcl != 0.0)
                           ? perfcl_step(c, b, *ref_extractor, *prev_extractor)
                           : ce_step(c.model, c.opt, b, c.class_weights);
                break;
        }
        if (!std::isfinite(loss))
            throw DivergenceError(c.client_id,
                                  "client " + std::to_string(c.client_id) +
                                      ": non-finite training loss at local step " +
                                      std::to_string(step));
        loss_sum += loss;
    }

    ClientUpdate u;
    u.client_id = c.client_id;
    u.n_train = c.train.size();
    u.train_loss = loss_sum / static_cast<double>(settings.steps);
    u.payload_params = federated_payload(c.strategy, c.model, c.partition());

    if (kind == StrategyKind::Scaffold) {
        // option-II control variate refresh: ci+ = ci - c + (x - y)/(K lr)
        const auto y_end = flatten(c.model).values;
        const double scale =
            1.0 / (static_cast<double>(settings.steps) * c.strategy.client_lr);
        std::vector<double> ci_new(c.scaffold_ci.size());
        const auto& c_srv = *payload.scaffold_c;
        for (std::size_t i = 0; i < ci_new.size(); ++i)
            ci_new[i] =
                c.scaffold_ci[i] - c_srv[i] + (x_start[i] - y_end[i]) * scale;
        u.scaffold_c_delta = std::vector<double>(ci_new.size());
        K().sub(ci_new.data(), c.scaffold_ci.data(), u.scaffold_c_delta->data(),
                ci_new.size());
        c.scaffold_ci = std::move(ci_new);
    }
    if (kind == StrategyKind::Moon || kind == StrategyKind::PerFcl)
        c.prev_snapshot = flatten(c.model).values;
    return u;
}

// ---------------------------------------------------------------------------
// Server-side aggregation

namespace {

std::vector<std::size_t> canonical_order(const std::vector<ClientUpdate>& u) {
    std::vector<std::size_t> order(u.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return u[a].client_id < u[b].client_id;
    });
    return order;
}

void check_updates(const std::vector<ClientUpdate>& updates) {
    if (updates.empty())
        throw DimensionError("aggregate: no client updates");
    const std::size_t len = updates.front().payload_params.size();
    for (const auto& u : updates)
        if (u.payload_params.size() != len)
            throw DimensionError("aggregate: payload length mismatch (" +
                                 std::to_string(u.payload_params.size()) +
                                 " vs " + std::to_string(len) + ")");
}

}  // namespace

std::vector<double> server_aggregate_fedavg(
    const std::vector<ClientUpdate>& updates) {
    check_updates(updates);
    const std::size_t len = updates.front().payload_params.size();
    std::vector<double> acc(len, 0.0);
    double total = 0.0;
    for (std::size_t i : canonical_order(updates)) {
        const auto& u = updates[i];
        K().weighted_acc(static_cast<double>(u.n_train), u.payload_params.data(),
                         acc.data(), len);
        total += static_cast<double>(u.n_train);
    }
    K().scale(1.0 / total, acc.data(), len);
    return acc;
}

void server_aggregate_fedadam(ServerState& state,
                              const std::vector<ClientUpdate>& updates,
                              const StrategyConfig& cfg) {
    auto avg = server_aggregate_fedavg(updates);
    auto& x = state.global_params;
    if (avg.size() != x.size())
        throw DimensionError("fedadam: payload/state length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double delta = avg[i] - x[i];
        state.fedadam_m[i] = cfg.beta1 * state.fedadam_m[i] +
                             (1.0 - cfg.beta1) * delta;
        state.fedadam_v[i] = cfg.beta2 * state.fedadam_v[i] +
                             (1.0 - cfg.beta2) * delta * delta;
        x[i] += cfg.server_lr * state.fedadam_m[i] /
                (std::sqrt(state.fedadam_v[i]) + cfg.tau);
    }
}

void server_aggregate_scaffold(ServerState& state,
                               const std::vector<ClientUpdate>& updates,
                               double server_lr) {
    check_updates(updates);
    for (const auto& u : updates)
        if (!u.scaffold_c_delta)
            throw DimensionError("scaffold: update from client " +
                                 std::to_string(u.client_id) +
                                 " is missing the control-variate delta");
    const std::size_t len = state.global_params.size();
    const double inv_m = 1.0 / static_cast<double>(updates.size());
    std::vector<double> mean_y(len, 0.0);
    std::vector<double> mean_cd(len, 0.0);
    for (std::size_t i : canonical_order(updates)) {
        K().weighted_acc(inv_m, updates[i].payload_params.data(), mean_y.data(),
                         len);
        K().weighted_acc(inv_m, updates[i].scaffold_c_delta->data(),
                         mean_cd.data(), len);
    }
    for (std::size_t i = 0; i < len; ++i)
        state.global_params[i] += server_lr * (mean_y[i] - state.global_params[i]);
    K().axpy(1.0, mean_cd.data(), state.scaffold_c.data(), len);
}

void server_aggregate(ServerState& state, const StrategyConfig& cfg,
                      const std::vector<ClientUpdate>& updates) {
    switch (cfg.kind) {
        case StrategyKind::FedAdam:
            server_aggregate_fedadam(state, updates, cfg);
            break;
        case StrategyKind::Scaffold:
            server_aggregate_scaffold(state, updates, cfg.server_lr);
            break;
        default:
            state.global_params = server_aggregate_fedavg(updates);
            break;
    }
    state.round += 1;
}

double apfl_alpha_update(double alpha, std::span<const double> mixed_grad,
                         std::span<const double> global_params,
                         std::span<const double> personal_params,
                         double alpha_lr) {
    if (mixed_grad.size() != global_params.size() ||
        mixed_grad.size() != personal_params.size())
        throw DimensionError("apfl_alpha_update: length mismatch");
    std::vector<double> diff(mixed_grad.size());
    K().sub(personal_params.data(), global_params.data(), diff.data(),
            diff.size());
    const double inner = K().dot(diff.data(), mixed_grad.data(), diff.size());
    return std::clamp(alpha - alpha_lr * inner, 0.0, 1.0);
}

std::vector<double> fedadam_drift_demo() {
    const double beta1 = 0.9, beta2 = 0.9, tau = 1e-9, lr = 0.1;
    const double client_value = 0.1;
    double x = 2.0, m = 0.0, v = 0.0;
    std::vector<double> traj;
    traj.reserve(30);
    for (int t = 0; t < 30; ++t) {
        const double delta = client_value - x;
        m = beta1 * m + (1.0 - beta1) * delta;
        v = beta2 * v + (1.0 - beta2) * delta * delta;
        x += lr * m / (std::sqrt(v) + tau);
        traj.push_back(x);
    }
    return traj;
}

}  // namespace fedbench
