#include "fedbench/checkpoint.hpp"

#include <stdexcept>

namespace fedbench {

const char* checkpoint_mode_name(CheckpointMode m) {
    switch (m) {
        case CheckpointMode::Latest: return "latest";
        case CheckpointMode::Global: return "global";
        case CheckpointMode::Local: return "local";
    }
    return "?";
}

CheckpointMode checkpoint_mode_from_name(const std::string& name) {
    if (name == "latest") return CheckpointMode::Latest;
    if (name == "global") return CheckpointMode::Global;
    if (name == "local") return CheckpointMode::Local;
    throw std::invalid_argument("unknown checkpoint mode '" + name + "'");
}

void CheckpointStore::maybe_checkpoint(int owner, std::size_t round,
                                       double val_loss,
                                       const std::vector<double>& params) {
    CheckpointEntry& e = entries_[owner];
    const bool replace =
        mode_ == CheckpointMode::Latest ? true : val_loss < e.best_loss;
    if (replace) {
        e.best_loss = val_loss;
        e.params = params;
        e.round_of_best = round;
        e.valid = true;
    }
}

}  // namespace fedbench
