#pragma once

#include "pcbe/overlay.hpp"
#include "pcbe/secure_match.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pcbe {

struct RecommendParams {
    std::size_t k = 10;
    ObfuscationParams obf;
    int relay_depth = 2;          // trusted-friend chain length to candidates
    std::size_t pool_cap = 10000; // overflow candidates dropped by arrival order
};

/// Protocol faults injected for the leakage audit's negative tests.
enum class SessionFault {
    kNone,
    kSkToSuperNode,      // one candidate leaks the key to the scoring super node
    kPlaintextTrapdoor,  // the query goes out unencrypted
};

struct SessionOutcome {
    enum class Status {
        kOk,
        kEmptyCandidatePool,
        kNoSuperNode,
        kSuperNodeOffline,  // retriable
    };
    Status status = Status::kOk;
    std::string session_id;
    NodeId designated_super;
    std::vector<std::string> ranked;  // <= k winners: node ids or group ids
    std::vector<std::string> pool;    // realized candidate pool, submission order
    std::vector<std::string> transcript;  // JSONL, one entry per phase/message
};

const char* to_string(SessionOutcome::Status s);

/// Friend recommendation: GenKey at the target, trapdoor to the highest-trust
/// super node among joined groups, SK relayed through trusted friends to their
/// trusted friends, candidate indices scored at the super node, ranked ids
/// back to the target, add-friend requests to the winners.
SessionOutcome recommend_friends(Simulator& sim, const NodeId& target,
                                 const RecommendParams& params,
                                 SessionFault fault = SessionFault::kNone);

/// Group recommendation: SK travels to the trusted friends' joined groups'
/// super nodes, which index their group profiles; the designated super node's
/// own groups and the target's groups are excluded.
SessionOutcome recommend_groups(Simulator& sim, const NodeId& target,
                                const RecommendParams& params,
                                SessionFault fault = SessionFault::kNone);

struct LeakageViolation {
    std::string check;   // sk-to-designated-super | index-from-friend | plaintext-interest-to-super
    std::string detail;
};

struct LeakageReport {
    std::vector<LeakageViolation> violations;
    bool clean() const { return violations.empty(); }
};

/// Structural audit of a session transcript:
///  (a) the secret key never travels to the designated super node,
///  (b) the designated super node receives indices only from outside the
///      target's friend list (friend flow),
///  (c) no plaintext interest vector reaches any super node.
LeakageReport audit_leakage(const std::vector<std::string>& transcript);

}  // namespace pcbe
