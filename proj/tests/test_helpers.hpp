#pragma once

#include "fedbench/data.hpp"
#include "fedbench/orchestrator.hpp"
#include "fedbench/strategies.hpp"

namespace fedbench::testutil {

inline FederatedDataset small_synthetic(std::size_t n_clients = 4,
                                        std::size_t n_per_client = 60,
                                        std::uint64_t seed = 7,
                                        double label_shift = 0.1) {
    SyntheticSpec spec;
    spec.n_clients = n_clients;
    spec.n_per_client = n_per_client;
    spec.dim = 6;
    spec.label_shift = label_shift;
    return generate_synthetic_federated(spec, seed);
}

inline ModelSpec small_mlp_spec(std::size_t input_dim = 6) {
    ModelSpec m;
    m.input_dim = input_dim;
    m.hidden = {5};
    return m;
}

inline ModelSpec small_fenda_spec(std::size_t input_dim = 6) {
    ModelSpec m;
    m.fenda = true;
    m.input_dim = input_dim;
    m.global_hidden = {3};
    m.local_hidden = {3};
    m.head_hidden = {};
    return m;
}

inline ExperimentConfig small_config(StrategyKind kind,
                                     std::size_t rounds = 3,
                                     std::size_t steps = 8) {
    ExperimentConfig cfg;
    cfg.name = "test";
    cfg.strategy.kind = kind;
    cfg.strategy.client_lr = 0.01;
    cfg.model = (kind == StrategyKind::Fenda || kind == StrategyKind::PerFcl)
                    ? small_fenda_spec()
                    : small_mlp_spec();
    cfg.n_rounds = rounds;
    cfg.budget = {LocalBudget::Kind::Steps, steps};
    cfg.batch_size = 8;
    cfg.seeds = {1};
    cfg.checkpoint_modes = {CheckpointMode::Latest, CheckpointMode::Local};
    if (!is_personalized(kind))
        cfg.checkpoint_modes.push_back(CheckpointMode::Global);
    cfg.metrics = {MetricKind::Accuracy};
    return cfg;
}

}  // namespace fedbench::testutil
