#include "fedbench/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <future>

namespace fedbench {

void ExperimentConfig::validate() const {
    if (n_rounds < 1) throw ConfigError("rounds must be at least 1");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (budget.amount < 1) throw ConfigError("local budget must be at least 1");
    if (checkpoint_modes.empty())
        throw ConfigError("at least one checkpoint mode is required");
    if (metrics.empty()) throw ConfigError("at least one metric is required");
    if (train_ratio <= 0.0 || train_ratio >= 1.0)
        throw ConfigError("train_ratio must lie strictly between 0 and 1");
    if (!class_weights.empty() && class_weights.size() != 2)
        throw ConfigError("class_weights must list exactly two values");

    if (is_personalized(strategy.kind)) {
        for (CheckpointMode m : checkpoint_modes)
            if (m == CheckpointMode::Global)
                throw ConfigError(
                    std::string("strategy '") + strategy_name(strategy.kind) +
                    "' keeps client-specific models and has no shared global "
                    "model to checkpoint; use local or latest");
    }

    const bool needs_fenda = strategy.kind == StrategyKind::Fenda ||
                             strategy.kind == StrategyKind::PerFcl;
    if (needs_fenda && !model.fenda)
        throw ConfigError(std::string("strategy '") +
                          strategy_name(strategy.kind) +
                          "' requires the composite two-extractor model");
    if (!needs_fenda && model.fenda)
        throw ConfigError(std::string("strategy '") +
                          strategy_name(strategy.kind) +
                          "' uses a sequential model, not the composite one");
    if (strategy.kind == StrategyKind::Moon && strategy.mu_moon != 0.0 &&
        model.hidden.empty())
        throw ConfigError("moon needs at least one hidden layer to expose "
                          "extractor features");
    if (strategy.kind == StrategyKind::PerFcl &&
        (strategy.mu_perfcl != 0.0 || strategy.gamma_perfcl != 0.0)) {
        if (model.global_hidden.empty() || model.local_hidden.empty() ||
            model.global_hidden.back() != model.local_hidden.back())
            throw ConfigError("perfcl contrastive losses compare global and "
                              "local features and need equal latent dims");
    }
    if (strategy.kind == StrategyKind::FedPer &&
        model.classifier_layers >= model.hidden.size() + 1)
        throw ConfigError("fedper classifier_layers must leave at least one "
                          "extractor layer");
    if (strategy.alpha_init < 0.0 || strategy.alpha_init > 1.0)
        throw ConfigError("alpha_init must lie in [0, 1]");
    if (strategy.client_lr <= 0.0) throw ConfigError("client_lr must be positive");
}

std::vector<ClientSplit> realize_splits(const ExperimentConfig& cfg,
                                        const FederatedDataset& data,
                                        std::uint64_t run_seed) {
    std::vector<ClientSplit> out;
    out.reserve(data.clients.size());
    for (std::size_t i = 0; i < data.clients.size(); ++i) {
        ClientSplit s = data.clients[i];
        resplit_train_val(s, cfg.train_ratio,
                          Rng::stream_seed(run_seed, "val-split", i));
        if (cfg.balance_train)
            s.train = resample_balance(s.train,
                                       Rng::stream_seed(run_seed, "balance", i));
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

double dataset_val_loss(const Model& m, const TabularDataset& val) {
    if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
    return bce_loss(predict(m, val.features), val.labels).loss;
}

double dataset_fingerprint(const TabularDataset& d) {
    double s = 0.0;
    for (double v : d.features.values) s += v;
    return s;
}

}  // namespace

FederatedRun::FederatedRun(const ExperimentConfig& cfg,
                           const FederatedDataset& data, std::uint64_t run_seed,
                           std::size_t threads)
    : cfg_(cfg), threads_(threads), run_seed_(run_seed) {
    cfg_.validate();
    if (data.clients.empty()) throw ConfigError("dataset has no clients");

    auto splits = realize_splits(cfg_, data, run_seed);
    ServerInit si = make_server(cfg_.strategy, cfg_.model, run_seed);
    server_ = std::move(si.state);
    payload_len_ = server_.global_params.size();

    const ServerPayload initial = broadcast_payload(server_, cfg_.strategy);
    for (std::size_t i = 0; i < splits.size(); ++i) {
        ClientState c = make_client(static_cast<int>(i), cfg_.strategy,
                                    cfg_.model, std::move(splits[i].train),
                                    std::move(splits[i].val), initial,
                                    si.template_params, run_seed);
        c.class_weights = cfg_.class_weights;
        clients_.push_back(std::move(c));
        test_splits_.push_back(std::move(splits[i].test));
    }
    for (CheckpointMode m : cfg_.checkpoint_modes)
        stores_.emplace(m, CheckpointStore(m));
}

std::size_t FederatedRun::steps_for_client(const ClientState& c) const {
    if (cfg_.budget.kind == LocalBudget::Kind::Steps) return cfg_.budget.amount;
    return cfg_.budget.amount * c.loader.batches_per_epoch(cfg_.batch_size);
}

RoundRecord FederatedRun::run_round() {
    const ServerPayload payload = broadcast_payload(server_, cfg_.strategy);
    const std::size_t n = clients_.size();

    std::vector<ClientUpdate> updates(n);
    std::vector<std::exception_ptr> errors(n);
    auto train_one = [&](std::size_t i) {
        try {
            TrainSettings ts{cfg_.batch_size, steps_for_client(clients_[i])};
            updates[i] = client_update(clients_[i], payload, ts);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    if (threads_ > 1 && n > 1) {
        std::vector<std::future<void>> futs;
        futs.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            futs.push_back(std::async(std::launch::async, train_one, i));
        for (auto& f : futs) f.get();
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            train_one(i);
            if (errors[i]) break;  // same attribution as the parallel path
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);

    // wire-size audit: payloads carry exactly the federated subset
    for (const auto& u : updates)
        if (u.payload_params.size() * sizeof(double) !=
            payload_len_ * sizeof(double))
            throw DimensionError("round " + std::to_string(history_.size() + 1) +
                                 ": client " + std::to_string(u.client_id) +
                                 " payload holds " +
                                 std::to_string(u.payload_params.size()) +
                                 " values, federated subset is " +
                                 std::to_string(payload_len_));

    server_aggregate(server_, cfg_.strategy, updates);

    const ServerPayload result = broadcast_payload(server_, cfg_.strategy);
    RoundRecord rec;
    rec.round = history_.size() + 1;
    double loss_weighted = 0.0;
    double weight = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        install_payload(clients_[i], result);
        const double vl = dataset_val_loss(clients_[i].eval_model(),
                                           clients_[i].val);
        if (!std::isfinite(vl))
            throw DivergenceError(static_cast<int>(i),
                                  "client " + std::to_string(i) +
                                      ": non-finite validation loss");
        rec.train_loss.push_back(updates[i].train_loss);
        rec.val_loss.push_back(vl);
        rec.n_val.push_back(clients_[i].val.size());
        loss_weighted += static_cast<double>(clients_[i].val.size()) * vl;
        weight += static_cast<double>(clients_[i].val.size());
    }
    rec.aggregated_val_loss = loss_weighted / weight;

    checkpoint_hooks(rec);
    history_.push_back(rec);
    return rec;
}

void FederatedRun::checkpoint_hooks(const RoundRecord& rec) {
    const bool personalized = is_personalized(cfg_.strategy.kind);
    for (auto& [mode, store] : stores_) {
        switch (mode) {
            case CheckpointMode::Global:
                store.maybe_checkpoint(kServerOwner, rec.round,
                                       rec.aggregated_val_loss,
                                       server_.global_params);
                break;
            case CheckpointMode::Local:
                for (std::size_t i = 0; i < clients_.size(); ++i)
                    store.maybe_checkpoint(static_cast<int>(i), rec.round,
                                           rec.val_loss[i],
                                           flatten(clients_[i].eval_model()).values);
                break;
            case CheckpointMode::Latest:
                if (personalized) {
                    for (std::size_t i = 0; i < clients_.size(); ++i)
                        store.maybe_checkpoint(
                            static_cast<int>(i), rec.round, rec.val_loss[i],
                            flatten(clients_[i].eval_model()).values);
                } else {
                    store.maybe_checkpoint(kServerOwner, rec.round,
                                           rec.aggregated_val_loss,
                                           server_.global_params);
                }
                break;
        }
    }
}

RunResult FederatedRun::finish() {
    RunResult result;
    result.run_seed = run_seed_;
    result.history = history_;
    for (const auto& c : clients_)
        result.val_split_fingerprint.push_back(dataset_fingerprint(c.val));

    for (const auto& [mode, store] : stores_) {
        result.checkpoints[mode] = store.entries();
        for (MetricKind kind : cfg_.metrics) {
            std::vector<double> per_client(
                clients_.size(), std::numeric_limits<double>::quiet_NaN());
            auto eval_snapshot = [&](const CheckpointEntry& e,
                                     std::size_t client) {
                Model scratch = cfg_.model.build();
                unflatten(scratch, e.params);
                const auto& test = test_splits_[client];
                if (test.empty()) return;
                try {
                    per_client[client] = evaluate_metric(
                        predict(scratch, test.features), test.labels, kind);
                } catch (const MetricError&) {
                    // single-class test labels: cell stays unavailable
                }
            };
            if (store.has(kServerOwner)) {
                for (std::size_t i = 0; i < clients_.size(); ++i)
                    eval_snapshot(store.entry(kServerOwner), i);
            } else {
                for (std::size_t i = 0; i < clients_.size(); ++i)
                    if (store.has(static_cast<int>(i)))
                        eval_snapshot(store.entry(static_cast<int>(i)), i);
            }
            std::vector<double> finite;
            for (double v : per_client)
                if (std::isfinite(v)) finite.push_back(v);
            MetricReport rep;
            rep.kind = kind;
            rep.per_client = per_client;
            rep.mean_over_clients =
                finite.empty()
                    ? std::numeric_limits<double>::quiet_NaN()
                    : MetricReport::from_values(kind, finite).mean_over_clients;
            result.test_metrics[mode][kind] = std::move(rep);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------

RunResult run_experiment(const ExperimentConfig& cfg,
                         const FederatedDataset& data, std::uint64_t run_seed,
                         std::size_t threads) {
    FederatedRun run(cfg, data, run_seed, threads);
    bool diverged = false;
    int diverged_client = -1;
    std::size_t diverged_round = 0;
    try {
        for (std::size_t r = 0; r < cfg.n_rounds; ++r) run.run_round();
    } catch (const TrainingError& e) {
        diverged = true;
        diverged_client = e.client_id;
        diverged_round = run.rounds_done() + 1;
    }
    RunResult result = run.finish();
    result.diverged = diverged;
    result.diverged_client = diverged_client;
    result.diverged_round = diverged_round;
    return result;
}

std::vector<RunResult> run_replicates(const ExperimentConfig& cfg,
                                      const FederatedDataset& data,
                                      std::size_t threads) {
    cfg.validate();
    std::vector<RunResult> results(cfg.seeds.size());
    if (threads > 1 && cfg.seeds.size() > 1) {
        std::vector<std::future<RunResult>> futs;
        futs.reserve(cfg.seeds.size());
        for (std::uint64_t seed : cfg.seeds)
            futs.push_back(std::async(std::launch::async, [&, seed] {
                return run_experiment(cfg, data, seed, 1);
            }));
        for (std::size_t i = 0; i < futs.size(); ++i) results[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
            results[i] = run_experiment(cfg, data, cfg.seeds[i], threads);
    }
    return results;
}

}  // namespace fedbench
