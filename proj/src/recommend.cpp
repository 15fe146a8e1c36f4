#include "pcbe/recommend.hpp"

#include "pcbe/crypto_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>
#include <stdexcept>

namespace pcbe {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kKindSecretKey = "secret-key";
constexpr const char* kKindTrapdoor = "trapdoor";
constexpr const char* kKindEncIndex = "enc-index";
constexpr const char* kKindPlainInterest = "plain-interest-vector";
constexpr const char* kKindResult = "result";

struct Session {
    Simulator* sim = nullptr;
    std::string id;
    NodeId target;
    std::vector<std::string> transcript;

    void log(ordered_json j) {
        j["session"] = id;
        std::string line = j.dump();
        transcript.push_back(line);
        sim->append_log(std::move(line));
    }

    // A protocol message: recorded in the transcript and sent through the
    // overlay so routing, gating and cost accounting all apply.
    bool message(const std::string& phase, const NodeId& from, const NodeId& to,
                 const char* kind, std::size_t bytes) {
        const DeliveryReport rep = sim->send_one_to_one(from, to, kind, bytes);
        ordered_json j;
        j["phase"] = phase;
        j["from"] = from;
        j["to"] = to;
        j["kind"] = kind;
        j["bytes"] = bytes;
        j["status"] = to_string(rep.status);
        log(std::move(j));
        return rep.delivered();
    }
};

/// Trusted peers: friends whose local trust at the rater passes theta, online
/// and still part of the network.
std::vector<NodeId> trusted_friends(const Simulator& sim, const NodeId& node) {
    const auto& rep = sim.reputation();
    std::vector<NodeId> out;
    for (const auto& f : sim.friends_of(node)) {
        if (!sim.is_online(f)) continue;
        if (rep.is_evicted(f)) continue;
        if (rep.local(node, f) >= rep.config().theta) out.push_back(f);
    }
    return out;
}

/// Highest-global-trust super node among the target's joined groups.
/// Ties break toward the lexicographically smaller id.
NodeId pick_designated_super(const Simulator& sim, const NodeId& target) {
    const auto& rep = sim.reputation();
    NodeId best;
    double best_trust = -1.0;
    for (const auto& g : sim.communities_of(target)) {
        const auto super = sim.super_node_of(g);
        if (super.empty()) continue;
        const double trust = rep.global(super);
        if (trust > best_trust || (trust == best_trust && super < best)) {
            best_trust = trust;
            best = super;
        }
    }
    return best;
}

void session_start(Session& s, const char* flow, const RecommendParams& params,
                   const NodeId& designated) {
    const Simulator& sim = *s.sim;
    ordered_json j;
    j["phase"] = "session-start";
    j["flow"] = flow;
    j["target"] = s.target;
    j["designated"] = designated;
    j["k"] = params.k;
    j["mu"] = params.obf.mu;
    j["sigma"] = params.obf.sigma;
    j["friends"] = std::vector<NodeId>(sim.friends_of(s.target).begin(),
                                       sim.friends_of(s.target).end());
    const auto supers = sim.super_nodes();
    j["super_nodes"] = std::vector<NodeId>(supers.begin(), supers.end());
    s.log(std::move(j));
}

void finish(Session& s, SessionOutcome& out, SessionOutcome::Status status) {
    out.status = status;
    ordered_json j;
    j["phase"] = "session-end";
    j["status"] = to_string(status);
    s.log(std::move(j));
    out.transcript = std::move(s.transcript);
}

}  // namespace

const char* to_string(SessionOutcome::Status s) {
    switch (s) {
        case SessionOutcome::Status::kOk: return "ok";
        case SessionOutcome::Status::kEmptyCandidatePool: return "empty-candidate-pool";
        case SessionOutcome::Status::kNoSuperNode: return "no-super-node";
        case SessionOutcome::Status::kSuperNodeOffline: return "super-node-offline";
    }
    return "unknown";
}

namespace {

/// Shared flow driver. The two entry points differ only in how the candidate
/// pool is discovered and how each candidate's index vector is produced.
SessionOutcome run_session(Simulator& sim, const NodeId& target, const RecommendParams& params,
                           SessionFault fault, bool friend_flow) {
    if (params.k == 0) throw std::invalid_argument("k must be >= 1");
    if (!sim.is_online(target)) {
        throw std::invalid_argument("recommendation target must be online: " + target);
    }
    const std::size_t n = sim.dictionary().size();

    SessionOutcome out;
    Session s{&sim, sim.next_session_id(), target, {}};
    out.session_id = s.id;

    const NodeId designated = pick_designated_super(sim, target);
    out.designated_super = designated;
    session_start(s, friend_flow ? "friends" : "groups", params, designated);

    if (designated.empty()) {
        finish(s, out, SessionOutcome::Status::kNoSuperNode);
        return out;
    }
    if (!sim.is_online(designated)) {
        finish(s, out, SessionOutcome::Status::kSuperNodeOffline);
        return out;
    }

    // Phase 1: GenKey at the target.
    const std::uint64_t key_seed = sim.rng().next_u64();
    const SecretKey key = SecretKey::generate(n, key_seed);
    const std::size_t key_bytes = SecretKey::blob_size(n);
    {
        const auto blob = key.save();
        const auto fp = crypto::sha256(std::span<const std::uint8_t>(blob));
        ordered_json j;
        j["phase"] = "genkey";
        j["holder"] = target;
        j["dict_size"] = n;
        j["key_bytes"] = blob.size();
        j["key_fp"] = crypto::to_hex(std::span<const std::uint8_t>(fp.data(), 8));
        s.log(std::move(j));
    }

    // Phase 2: trapdoor to the designated super node.
    const Trapdoor trapdoor = build_trapdoor(sim.interests(target), key, sim.rng());
    {
        const bool plaintext = fault == SessionFault::kPlaintextTrapdoor;
        const std::size_t bytes = plaintext ? serialize_profile(sim.interests(target)).size()
                                            : serialize_trapdoor(trapdoor).size();
        if (!s.message("trapdoor-submit", target, designated,
                       plaintext ? kKindPlainInterest : kKindTrapdoor, bytes)) {
            finish(s, out, SessionOutcome::Status::kSuperNodeOffline);
            return out;
        }
    }

    // Phase 3: SK relay through trusted friends.
    const auto level1 = trusted_friends(sim, target);
    if (level1.empty()) {
        finish(s, out, SessionOutcome::Status::kEmptyCandidatePool);
        return out;
    }

    const auto& target_friends = sim.friends_of(target);
    std::vector<NodeId> pool;          // arrival order
    std::set<NodeId> pool_seen;
    std::set<GroupId> excluded_groups; // group flow only

    if (!friend_flow) {
        for (const auto& g : sim.communities_of(target)) excluded_groups.insert(g);
        for (const auto& g : sim.community_ids()) {
            if (sim.super_node_of(g) == designated) excluded_groups.insert(g);
        }
    }

    if (friend_flow) {
        // Level-by-level relay; nodes at the final depth are the candidates.
        std::vector<NodeId> frontier = {target};
        std::set<NodeId> relayed{target};
        for (int depth = 1; depth <= params.relay_depth; ++depth) {
            std::vector<NodeId> next;
            for (const auto& holder : frontier) {
                for (const auto& peer : trusted_friends(sim, holder)) {
                    if (relayed.count(peer)) continue;
                    if (!s.message("sk-relay", holder, peer, kKindSecretKey, key_bytes)) continue;
                    relayed.insert(peer);
                    next.push_back(peer);
                    if (depth == params.relay_depth) {
                        if (peer == target || target_friends.count(peer)) continue;
                        if (pool_seen.count(peer)) continue;
                        if (pool.size() >= params.pool_cap) continue;
                        pool_seen.insert(peer);
                        pool.push_back(peer);
                    }
                }
            }
            frontier = std::move(next);
        }
    } else {
        std::set<GroupId> groups_seen;
        for (const auto& friend_id : level1) {
            if (!s.message("sk-relay", target, friend_id, kKindSecretKey, key_bytes)) continue;
            for (const auto& g : sim.communities_of(friend_id)) {
                if (excluded_groups.count(g) || groups_seen.count(g)) continue;
                groups_seen.insert(g);
                const auto super = sim.super_node_of(g);
                if (super.empty()) continue;
                if (!s.message("sk-relay", friend_id, super, kKindSecretKey, key_bytes)) continue;
                if (pool.size() >= params.pool_cap) continue;
                if (!pool_seen.insert(g).second) continue;
                pool.push_back(g);
            }
        }
    }

    if (fault == SessionFault::kSkToSuperNode && !pool.empty()) {
        // A misbehaving candidate forwards the key to the scoring super node.
        const NodeId leaker = friend_flow ? pool.front() : sim.super_node_of(pool.front());
        s.message("sk-leak", leaker, designated, kKindSecretKey, key_bytes);
    }

    if (pool.empty()) {
        finish(s, out, SessionOutcome::Status::kEmptyCandidatePool);
        return out;
    }
    out.pool = pool;

    // Phase 4: BuildIndices at the candidates, submission to the designated
    // super node, scoring, ranked ids back to the target.
    std::vector<std::pair<std::string, EncIndex>> received;
    received.reserve(pool.size());
    for (const auto& candidate : pool) {
        InterestModel model;
        NodeId submitter;
        if (friend_flow) {
            model = sim.interests(candidate);
            submitter = candidate;
        } else {
            // The group's super node indexes the group profile, one unit
            // weight per keyword.
            model = init_interest_ids(n, sim.profile_of(candidate).keyword_ids, candidate);
            submitter = sim.super_node_of(candidate);
        }
        EncIndex index = build_index(model, key, params.obf, sim.rng());
        const std::size_t bytes = serialize_index(index).size();
        if (s.message("index-submit", submitter, designated, kKindEncIndex, bytes)) {
            received.emplace_back(candidate, std::move(index));
        }
    }

    if (received.empty()) {
        finish(s, out, SessionOutcome::Status::kEmptyCandidatePool);
        return out;
    }

    {
        ordered_json j;
        j["phase"] = "scoring";
        j["at"] = designated;
        j["candidates"] = received.size();
        j["k"] = params.k;
        s.log(std::move(j));
    }
    out.ranked = top_k(trapdoor, received, params.k);

    {
        ordered_json j;
        j["phase"] = "result";
        j["from"] = designated;
        j["to"] = target;
        j["kind"] = kKindResult;
        j["ids"] = out.ranked;
        s.log(std::move(j));
        sim.send_one_to_one(designated, target, kKindResult, 16 * out.ranked.size() + 8);
    }

    if (friend_flow) {
        // Fire-and-forget add-friend requests; acceptance is out of scope.
        for (const auto& winner : out.ranked) {
            s.message("add-friend-request", target, winner, "add-friend-request", 32);
        }
    }

    finish(s, out, SessionOutcome::Status::kOk);
    return out;
}

}  // namespace

SessionOutcome recommend_friends(Simulator& sim, const NodeId& target,
                                 const RecommendParams& params, SessionFault fault) {
    return run_session(sim, target, params, fault, /*friend_flow=*/true);
}

SessionOutcome recommend_groups(Simulator& sim, const NodeId& target,
                                const RecommendParams& params, SessionFault fault) {
    return run_session(sim, target, params, fault, /*friend_flow=*/false);
}

LeakageReport audit_leakage(const std::vector<std::string>& transcript) {
    LeakageReport report;
    NodeId designated;
    std::set<NodeId> friends;
    std::set<NodeId> supers;
    bool friend_flow = false;

    for (const auto& line : transcript) {
        const auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded()) continue;
        if (j.value("phase", "") == "session-start") {
            designated = j.value("designated", "");
            friend_flow = j.value("flow", "") == "friends";
            for (const auto& f : j.value("friends", std::vector<std::string>{})) friends.insert(f);
            for (const auto& sn : j.value("super_nodes", std::vector<std::string>{})) {
                supers.insert(sn);
            }
            break;
        }
    }

    for (const auto& line : transcript) {
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("kind") || !j.contains("to")) continue;
        const std::string kind = j.value("kind", "");
        const std::string to = j.value("to", "");
        const std::string from = j.value("from", "");

        if (kind == kKindSecretKey && !designated.empty() && to == designated) {
            report.violations.push_back(
                {"sk-to-designated-super", "secret key sent from " + from + " to " + to});
        }
        if (friend_flow && kind == kKindEncIndex && to == designated && friends.count(from)) {
            report.violations.push_back(
                {"index-from-friend", "index from in-friend-list node " + from});
        }
        if (kind == kKindPlainInterest && supers.count(to)) {
            report.violations.push_back(
                {"plaintext-interest-to-super", "plaintext interest vector from " + from + " to " + to});
        }
    }
    return report;
}

}  // namespace pcbe
