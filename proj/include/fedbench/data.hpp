#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedbench/matrix.hpp"

namespace fedbench {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TabularDataset {
    Matrix features;           // n x d
    std::vector<int> labels;   // length n, values in {0..k-1}
    std::vector<std::string> feature_names;

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }
    bool empty() const { return features.rows == 0; }

    TabularDataset subset(const std::vector<std::size_t>& idx) const;
    static TabularDataset concat(const std::vector<const TabularDataset*>& parts);
};

struct ClientSplit {
    int client_id = 0;
    TabularDataset train;
    TabularDataset val;
    TabularDataset test;
};

enum class Provenance { Csv, Synthetic };

struct FederatedDataset {
    std::vector<ClientSplit> clients;
    Provenance provenance = Provenance::Synthetic;
    std::uint64_t generation_seed = 0;

    std::size_t n_clients() const { return clients.size(); }
    // Copy with empty test splits; hands sweeps a view that cannot leak test data.
    FederatedDataset without_test() const;
};

struct CsvSchema {
    std::string label_column = "label";
    std::optional<std::string> client_id_column;
};

// Parses a comma-separated file with a header row. Feature columns are every
// column not named by the schema; rows keep on-disk order.
TabularDataset load_csv(const std::string& path, const CsvSchema& schema);

// Splits a client-id-tagged dataset into per-client datasets (ids must be
// 0-based and contiguous).
std::vector<TabularDataset> partition_by_client(const TabularDataset& d,
                                                const std::string& path,
                                                const CsvSchema& schema);
std::vector<TabularDataset> load_csv_clients(const std::string& path,
                                             const CsvSchema& schema);

// Uniformly random permutation split, train size = floor(ratio * n).
std::pair<TabularDataset, TabularDataset> split_train_val(
    const TabularDataset& d, double ratio, std::uint64_t seed);

// Re-draws the train/val partition of a client from train+val combined.
void resplit_train_val(ClientSplit& c, double ratio, std::uint64_t seed);

// Oversamples the minority class with replacement until both classes match.
TabularDataset resample_balance(const TabularDataset& train, std::uint64_t seed);

struct SyntheticSpec {
    std::size_t n_clients = 4;
    std::size_t n_per_client = 200;
    std::size_t dim = 13;
    double covariate_shift = 0.0;  // per-client mean offset scale
    double label_shift = 0.0;      // class-prior perturbation, in [0, 1)
    double concept_shift = 0.0;    // decision-boundary rotation angle scale (rad)
    double noise = 0.0;            // widens class overlap
};

// Two Gaussian class blobs around +-margin * w_i with a quadratic warp that
// bends the optimal boundary; w_i is the base direction rotated per client by
// the concept-shift angle. Each client also receives test rows (1/4 of
// n_per_client) drawn from its own distribution; the train/val split is left
// for the per-run resplit.
FederatedDataset generate_synthetic_federated(const SyntheticSpec& spec,
                                              std::uint64_t seed);

// Per-client random orthonormal projection d -> out_dim applied consistently
// to train/val/test. force_identity is a test hook (requires out_dim == d).
FederatedDataset apply_local_projection(const FederatedDataset& fed,
                                        std::size_t out_dim, std::uint64_t seed,
                                        bool force_identity = false);

}  // namespace fedbench
