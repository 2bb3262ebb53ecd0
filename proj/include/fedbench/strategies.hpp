#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedbench/data.hpp"
#include "fedbench/nn.hpp"
#include "fedbench/rng.hpp"

namespace fedbench {

enum class StrategyKind {
    FedAvg,
    FedAdam,
    FedProx,
    Scaffold,
    Moon,
    FedPer,
    Ditto,
    Apfl,
    PerFcl,
    Fenda,
};

const char* strategy_name(StrategyKind k);
StrategyKind strategy_from_name(const std::string& name);
// Personalized strategies keep client-owned parameters and have no single
// shared model, so they support local checkpointing only.
bool is_personalized(StrategyKind k);

struct StrategyConfig {
    StrategyKind kind = StrategyKind::FedAvg;
    double client_lr = 0.01;
    OptKind client_optimizer = OptKind::AdamW;  // scaffold always runs plain sgd
    double weight_decay = 0.01;

    // fedadam / scaffold server side
    double server_lr = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double tau = 1e-9;

    double mu_prox = 0.0;       // fedprox
    double mu_moon = 0.0;       // moon
    double temperature = 0.5;   // moon / perfcl contrastive
    double lambda_ditto = 0.0;  // ditto
    double alpha_init = 0.5;    // apfl
    double alpha_lr = 0.0;      // apfl
    double mu_perfcl = 0.0;     // perfcl, global-feature loss weight
    double gamma_perfcl = 0.0;  // perfcl, local-feature loss weight
};

// Network shape shared by server and clients. `hidden` describes the
// sequential model (or one APFL twin); the *_hidden lists describe the Fenda
// composite. classifier_layers controls the FedPer extractor/classifier cut.
struct ModelSpec {
    bool fenda = false;
    std::size_t input_dim = 13;
    std::vector<std::size_t> hidden = {10};
    std::vector<std::size_t> global_hidden = {5};
    std::vector<std::size_t> local_hidden = {5};
    std::vector<std::size_t> head_hidden = {};
    std::size_t classifier_layers = 1;

    Model build() const;
};

struct ServerPayload {
    std::vector<double> global_params;
    std::optional<std::vector<double>> scaffold_c;
};

struct ClientUpdate {
    int client_id = 0;
    std::vector<double> payload_params;  // federated subset, post-training
    std::size_t n_train = 0;
    double train_loss = std::numeric_limits<double>::quiet_NaN();
    // Filled after aggregation, when clients evaluate the installed model.
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_val = 0;
    std::optional<std::vector<double>> scaffold_c_delta;
};

struct ServerState {
    std::vector<double> global_params;
    std::vector<double> fedadam_m;
    std::vector<double> fedadam_v;
    std::vector<double> scaffold_c;
    std::size_t round = 0;
};

struct TrainingError : std::runtime_error {
    int client_id;
    TrainingError(int client, const std::string& msg)
        : std::runtime_error(msg), client_id(client) {}
};

struct DivergenceError : TrainingError {
    using TrainingError::TrainingError;
};

// Shuffled cycling loader; position persists across rounds and batches never
// span an epoch boundary (the final batch of an epoch may be short).
class BatchLoader {
public:
    BatchLoader(std::size_t n, Rng rng) : rng_(std::move(rng)), order_(n) {
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
        rng_.shuffle(order_);
    }

    std::vector<std::size_t> next_batch(std::size_t batch_size) {
        if (cursor_ >= order_.size()) {
            rng_.shuffle(order_);
            cursor_ = 0;
        }
        const std::size_t take = std::min(batch_size, order_.size() - cursor_);
        std::vector<std::size_t> out(order_.begin() + cursor_,
                                     order_.begin() + cursor_ + take);
        cursor_ += take;
        return out;
    }

    std::size_t batches_per_epoch(std::size_t batch_size) const {
        return (order_.size() + batch_size - 1) / batch_size;
    }

private:
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

struct ClientState {
    int client_id = 0;
    StrategyConfig strategy;
    ModelSpec spec;

    Model model;                         // trainable model / global twin
    std::optional<Model> personal_model; // ditto personal, apfl local twin
    OptimizerState opt;
    std::optional<OptimizerState> personal_opt;

    std::vector<double> scaffold_ci;
    double apfl_alpha = 0.5;
    std::vector<double> prev_snapshot;  // moon / perfcl previous local model

    TabularDataset train;
    TabularDataset val;
    BatchLoader loader;
    std::vector<double> class_weights;  // empty = unweighted bce

    PartitionSpec partition() const;
    // The model this client is evaluated and checkpointed on.
    Model eval_model() const;
    std::size_t trainable_param_count() const;
};

// Builds a client whose federated entries start from the server's initial
// parameters and whose client-owned entries come from a per-client stream.
ClientState make_client(int id, const StrategyConfig& strategy,
                        const ModelSpec& spec, TabularDataset train,
                        TabularDataset val, const ServerPayload& initial,
                        const std::vector<double>& template_params,
                        std::uint64_t run_seed);

struct ServerInit {
    ServerState state;
    std::vector<double> template_params;  // full initial model, for clients
};

ServerInit make_server(const StrategyConfig& strategy, const ModelSpec& spec,
                       std::uint64_t run_seed);

struct TrainSettings {
    std::size_t batch_size = 4;
    std::size_t steps = 100;
};

// Runs `steps` local mini-batch steps with the strategy's objective and
// returns the federated parameter subset plus bookkeeping. Client-owned state
// (personal models, alpha, control variates, snapshots) mutates in place.
ClientUpdate client_update(ClientState& client, const ServerPayload& payload,
                           const TrainSettings& settings);

// Writes the federated subset of a payload into the client's model(s),
// leaving client-owned entries untouched.
void install_payload(ClientState& client, const ServerPayload& payload);

// The parameter subset a strategy federates: everything for the
// full-model strategies, the extractor for fedper, the global twin for apfl,
// the global extractor for fenda/perfcl.
std::vector<double> federated_payload(const StrategyConfig& strategy,
                                      const Model& model,
                                      const PartitionSpec& part);

ServerPayload broadcast_payload(const ServerState& server,
                                const StrategyConfig& strategy);

// Sample-count weighted average in ascending client order.
std::vector<double> server_aggregate_fedavg(
    const std::vector<ClientUpdate>& updates);
void server_aggregate_fedadam(ServerState& state,
                              const std::vector<ClientUpdate>& updates,
                              const StrategyConfig& cfg);
void server_aggregate_scaffold(ServerState& state,
                               const std::vector<ClientUpdate>& updates,
                               double server_lr);
// Dispatches on strategy kind and advances the round counter.
void server_aggregate(ServerState& state, const StrategyConfig& cfg,
                      const std::vector<ClientUpdate>& updates);

// alpha <- clamp(alpha - alpha_lr * <v - w, grad>, 0, 1)
double apfl_alpha_update(double alpha, std::span<const double> mixed_grad,
                         std::span<const double> global_params,
                         std::span<const double> personal_params,
                         double alpha_lr);

// Single-parameter server-side momentum walk: x0 = 2, client value 0.1 every
// round, beta1 = beta2 = 0.9, lr = 0.1, tau = 1e-9. Returns the 30 x values;
// the trajectory goes negative even though every client value is positive.
std::vector<double> fedadam_drift_demo();

}  // namespace fedbench
