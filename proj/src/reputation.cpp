#include "pcbe/reputation.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

namespace pcbe {

void ReputationTable::record_interaction(const NodeId& rater, const NodeId& target,
                                         Outcome outcome) {
    if (rater == target) throw std::invalid_argument("a node cannot rate itself");
    auto& counts = observations_[{rater, target}];
    if (outcome == Outcome::kSatisfactory) {
        ++counts.sat;
    } else {
        ++counts.unsat;
    }
}

double ReputationTable::local(const NodeId& rater, const NodeId& target) const {
    const auto it = observations_.find({rater, target});
    if (it == observations_.end()) return cfg_.prior;
    const auto& c = it->second;
    const auto total = c.sat + c.unsat;
    if (total == 0) return cfg_.prior;
    return std::clamp(static_cast<double>(c.sat) / static_cast<double>(total), 0.0, 1.0);
}

void ReputationTable::run_epoch(const std::set<NodeId>& universe) {
    ++epoch_;

    // Weighted mean over recorded raters, weights from last epoch's globals.
    std::map<NodeId, double> next;
    for (const auto& node : universe) {
        double weighted = 0.0;
        double total_weight = 0.0;
        for (const auto& [pair, counts] : observations_) {
            const auto& [rater, target] = pair;
            if (target != node) continue;
            const double w = global(rater);
            weighted += w * local(rater, target);
            total_weight += w;
        }
        next[node] = total_weight > 0.0 ? std::clamp(weighted / total_weight, 0.0, 1.0)
                                        : cfg_.prior;
    }
    for (const auto& [node, g] : next) global_[node] = g;

    last_evictions_.clear();
    for (const auto& node : universe) {
        if (evicted_.count(node)) continue;
        auto& streak = below_floor_streak_[node];
        if (global_[node] < cfg_.eviction_floor) {
            ++streak;
        } else {
            streak = 0;
        }
        if (streak >= cfg_.eviction_epochs) {
            evicted_.insert(node);
            last_evictions_.push_back(node);
        }
    }

    for (const auto& node : universe) {
        trajectory_.emplace_back(epoch_, node, global_[node]);
    }
}

double ReputationTable::global(const NodeId& node) const {
    const auto it = global_.find(node);
    return it == global_.end() ? cfg_.prior : it->second;
}

NodeId ReputationTable::elect_super_node(const std::set<NodeId>& members) const {
    const NodeId* best = nullptr;
    double best_score = -1.0;
    for (const auto& m : members) {
        if (evicted_.count(m)) continue;
        const double g = global(m);
        if (g > best_score) {  // ties keep the earlier (lower) id
            best_score = g;
            best = &m;
        }
    }
    if (!best) throw std::invalid_argument("cannot elect a super node from an empty community");
    return *best;
}

bool ReputationTable::gate(const NodeId& /*sender*/, const NodeId& receiver) const {
    if (evicted_.count(receiver)) return false;
    return global(receiver) >= cfg_.theta;
}

void ReputationTable::export_csv(std::ostream& out) const {
    out << "epoch,node_id,global_trust\n";
    for (const auto& [epoch, node, trust] : trajectory_) {
        out << epoch << ',' << node << ',' << trust << '\n';
    }
}

}  // namespace pcbe
