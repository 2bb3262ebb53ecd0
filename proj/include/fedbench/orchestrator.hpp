#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedbench/checkpoint.hpp"
#include "fedbench/data.hpp"
#include "fedbench/metrics.hpp"
#include "fedbench/strategies.hpp"

namespace fedbench {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LocalBudget {
    enum class Kind { Steps, Epochs };
    Kind kind = Kind::Steps;
    std::size_t amount = 100;
};

struct ExperimentConfig {
    std::string name = "experiment";
    StrategyConfig strategy;
    ModelSpec model;
    std::size_t n_rounds = 15;
    LocalBudget budget;
    std::size_t batch_size = 4;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<CheckpointMode> checkpoint_modes = {CheckpointMode::Latest,
                                                    CheckpointMode::Local};
    std::vector<MetricKind> metrics = {MetricKind::Accuracy};
    bool balance_train = false;
    std::vector<double> class_weights;  // optional, train loss only
    double train_ratio = 0.8;           // train/val split

    void validate() const;
};

struct RoundRecord {
    std::size_t round = 0;  // 1-based
    std::vector<double> train_loss;      // per client, canonical order
    std::vector<double> val_loss;        // measured after aggregation
    std::vector<std::size_t> n_val;
    double aggregated_val_loss = 0.0;    // n_val-weighted mean

    bool operator==(const RoundRecord&) const = default;
};

struct RunResult {
    std::uint64_t run_seed = 0;
    std::vector<RoundRecord> history;
    bool diverged = false;
    int diverged_client = -1;
    std::size_t diverged_round = 0;
    // mode -> per-owner snapshots that were kept during the run
    std::map<CheckpointMode, std::map<int, CheckpointEntry>> checkpoints;
    // mode -> metric -> per-client test values (NaN marks an unavailable cell)
    std::map<CheckpointMode, std::map<MetricKind, MetricReport>> test_metrics;
    // one value per client identifying the realized validation split
    std::vector<double> val_split_fingerprint;
};

// One federated training run. Owns server and client state; rounds are
// deterministic in (config, dataset, run_seed) regardless of thread count.
class FederatedRun {
public:
    FederatedRun(const ExperimentConfig& cfg, const FederatedDataset& data,
                 std::uint64_t run_seed, std::size_t threads = 1);

    // broadcast -> client updates -> aggregate -> install -> validate ->
    // checkpoint hooks. Throws TrainingError on client failure.
    RoundRecord run_round();

    // Evaluates every requested checkpoint family on the client test splits.
    RunResult finish();

    const ServerState& server() const { return server_; }
    const std::vector<ClientState>& clients() const { return clients_; }
    std::size_t rounds_done() const { return history_.size(); }

private:
    void checkpoint_hooks(const RoundRecord& rec);
    std::size_t steps_for_client(const ClientState& c) const;

    ExperimentConfig cfg_;
    std::size_t threads_;
    ServerState server_;
    std::vector<ClientState> clients_;
    std::vector<TabularDataset> test_splits_;
    std::map<CheckpointMode, CheckpointStore> stores_;
    std::vector<RoundRecord> history_;
    std::uint64_t run_seed_;
    std::size_t payload_len_ = 0;
};

// Realizes per-run train/val splits (and optional class balancing) from the
// dataset pools; the validation split is drawn from run_seed.
std::vector<ClientSplit> realize_splits(const ExperimentConfig& cfg,
                                        const FederatedDataset& data,
                                        std::uint64_t run_seed);

RunResult run_experiment(const ExperimentConfig& cfg,
                         const FederatedDataset& data, std::uint64_t run_seed,
                         std::size_t threads = 1);

// Independent runs, one per seed; a diverged run is recorded and the
// remaining seeds still execute.
std::vector<RunResult> run_replicates(const ExperimentConfig& cfg,
                                      const FederatedDataset& data,
                                      std::size_t threads = 1);

}  // namespace fedbench
