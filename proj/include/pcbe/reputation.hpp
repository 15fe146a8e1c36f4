#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace pcbe {

using NodeId = std::string;
using GroupId = std::string;

enum class Outcome { kSatisfactory, kUnsatisfactory };

struct ReputationConfig {
    double theta = 0.3;            // delivery / SK-distribution gate
    double eviction_floor = 0.15;  // below this for eviction_epochs -> kicked out
    int eviction_epochs = 5;
    double prior = 0.5;            // score for unknown nodes / zero observations
};

/// Local and global trust. Local scores are the satisfaction ratio a rater has
/// observed for a target; global scores are recomputed once per epoch as a
/// trust-weighted mean of the local scores toward each node, weighting each
/// rater by its own previous-epoch global score. Raters whose global trust has
/// collapsed therefore contribute almost nothing, which damps slander.
class ReputationTable {
  public:
    explicit ReputationTable(ReputationConfig cfg = {}) : cfg_(cfg) {}

    const ReputationConfig& config() const { return cfg_; }

    /// Records one interaction outcome. Throws when rater == target.
    void record_interaction(const NodeId& rater, const NodeId& target, Outcome outcome);

    /// Satisfaction ratio rater -> target, or the prior with no observations.
    double local(const NodeId& rater, const NodeId& target) const;

    /// One synchronous global-trust pass over every node in `universe`,
    /// then eviction bookkeeping. Call once per epoch.
    void run_epoch(const std::set<NodeId>& universe);

    double global(const NodeId& node) const;
    int epoch() const { return epoch_; }

    bool is_evicted(const NodeId& node) const { return evicted_.count(node) > 0; }
    const std::set<NodeId>& evicted() const { return evicted_; }
    /// Nodes newly evicted by the most recent epoch.
    const std::vector<NodeId>& last_evictions() const { return last_evictions_; }

    /// Member with the highest global trust; ties broken by ascending id.
    /// Evicted members are skipped. Throws on an empty (or fully evicted)
    /// community.
    NodeId elect_super_node(const std::set<NodeId>& members) const;

    /// Delivery gate: allow iff the receiver's global trust passes theta and
    /// the receiver has not been evicted.
    bool gate(const NodeId& sender, const NodeId& receiver) const;

    /// Trust trajectory rows: epoch,node_id,global_trust.
    void export_csv(std::ostream& out) const;

  private:
    struct Counts {
        std::uint64_t sat = 0;
        std::uint64_t unsat = 0;
    };

    ReputationConfig cfg_;
    std::map<std::pair<NodeId, NodeId>, Counts> observations_;  // (rater, target)
    std::map<NodeId, double> global_;
    std::map<NodeId, int> below_floor_streak_;
    std::set<NodeId> evicted_;
    std::vector<NodeId> last_evictions_;
    std::vector<std::tuple<int, NodeId, double>> trajectory_;
    int epoch_ = 0;
};

}  // namespace pcbe
