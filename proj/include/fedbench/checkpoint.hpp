#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

namespace fedbench {

enum class CheckpointMode { Latest, Global, Local };

const char* checkpoint_mode_name(CheckpointMode m);
CheckpointMode checkpoint_mode_from_name(const std::string& name);

// Server-owned snapshots use this owner id; clients use their client_id.
inline constexpr int kServerOwner = -1;

struct CheckpointEntry {
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<double> params;
    std::size_t round_of_best = 0;
    bool valid = false;
};

// One snapshot family: per owner the best-so-far (global/local) or most
// recent (latest) model parameters, keyed by validation loss.
class CheckpointStore {
public:
    explicit CheckpointStore(CheckpointMode mode) : mode_(mode) {}

    // Replaces the owner's snapshot iff val_loss strictly improves; latest
    // mode replaces unconditionally.
    void maybe_checkpoint(int owner, std::size_t round, double val_loss,
                          const std::vector<double>& params);

    CheckpointMode mode() const { return mode_; }
    bool has(int owner) const { return entries_.count(owner) > 0; }
    const CheckpointEntry& entry(int owner) const { return entries_.at(owner); }
    const std::map<int, CheckpointEntry>& entries() const { return entries_; }

private:
    CheckpointMode mode_;
    std::map<int, CheckpointEntry> entries_;
};

}  // namespace fedbench
