#pragma once

#include "pcbe/reputation.hpp"
#include "pcbe/rng.hpp"
#include "pcbe/taxonomy.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace pcbe {

/// Pairwise key for group messaging: Hash(G, U) over a canonical encoding.
std::array<std::uint8_t, 32> derive_group_key(const GroupId& group, const NodeId& user);

/// Per-group broadcast key state. The session key is re-drawn and re-wrapped
/// for every membership change; removed members land in `revoked`.
struct GroupKeyState {
    GroupId group;
    std::uint32_t version = 0;
    std::array<std::uint8_t, 32> session_key{};
    std::set<NodeId> members;
    std::set<NodeId> revoked;
};

/// Group-sealed payload. The wrapped map stands in for the broadcast header;
/// header_bytes is the modelled wire size (fixed part, one entry per
/// recipient, one tombstone per revoked member).
struct SealedBlob {
    GroupId group;
    std::uint32_t key_version = 0;
    std::size_t header_bytes = 0;
    std::map<NodeId, std::array<std::uint8_t, 32>> wrapped;
    std::vector<std::uint8_t> body;
    std::array<std::uint8_t, 32> checksum{};

    std::size_t total_bytes() const { return header_bytes + body.size(); }
};

namespace group_crypto {

constexpr std::size_t kHeaderFixedBytes = 32;
constexpr std::size_t kPerRecipientBytes = 48;
constexpr std::size_t kPerRevokedBytes = 16;

/// Seals a payload to the state's current members.
SealedBlob seal(const GroupKeyState& state, std::span<const std::uint8_t> plaintext);

/// Opens a blob as `member`. Empty result for non-members (no wrapped entry)
/// and for corrupted payloads.
std::optional<std::vector<std::uint8_t>> open(const SealedBlob& blob, const NodeId& member);

}  // namespace group_crypto

struct DeliveryReport {
    enum class Status { kDelivered, kBlockedByReputation, kUndeliverable, kNoRecipients };
    Status status = Status::kUndeliverable;
    std::vector<NodeId> route;  // transmission path, super nodes included
    int hops = 0;               // edges along route
    std::size_t deliveries = 0; // fan-out count for group sends
    std::size_t bytes = 0;      // total bytes across all transmissions

    bool delivered() const { return status == Status::kDelivered; }
};

const char* to_string(DeliveryReport::Status s);

/// Per-tick message/byte accounting.
class CostLedger {
  public:
    void add(long tick, std::uint64_t messages, std::uint64_t bytes);
    std::uint64_t total_messages() const { return total_messages_; }
    std::uint64_t total_bytes() const { return total_bytes_; }
    bool empty() const { return per_tick_.empty(); }

    /// CSV: tick,messages,bytes,cumulative_messages,cumulative_bytes.
    void export_csv(std::ostream& out) const;

  private:
    std::map<long, std::pair<std::uint64_t, std::uint64_t>> per_tick_;
    std::uint64_t total_messages_ = 0;
    std::uint64_t total_bytes_ = 0;
};

struct SimConfig {
    std::uint64_t seed = 1;
    int epoch_ticks = 10;
    ReputationConfig reputation;
};

/// One parsed scenario line.
struct ScriptEvent {
    long tick = 0;
    std::string kind;
    std::vector<std::string> args;
    int line = 0;
};

struct Script {
    std::vector<ScriptEvent> events;  // sorted by tick, file order within a tick
};

/// Deterministic discrete-event model of the community overlay: two-level
/// member/super-node topology, reputation-gated delivery, group-sealed
/// broadcast, churn, and per-tick cost accounting. Single-threaded; all
/// randomness comes from the seeded generator.
class Simulator {
  public:
    Simulator(KeywordDictionary dict, SimConfig cfg);

    // --- world construction (usable mid-run; events land at the current tick)
    void add_node(const NodeId& id, bool malicious = false,
                  const std::vector<std::string>& interest_keywords = {});
    void add_community(const GroupId& id, const std::vector<std::string>& keywords);
    void join(const NodeId& node, const GroupId& group);
    void leave(const NodeId& node, const GroupId& group);
    void add_friend(const NodeId& a, const NodeId& b);
    void set_online(const NodeId& node, bool online);

    // --- messaging
    DeliveryReport send_one_to_one(const NodeId& sender, const NodeId& receiver,
                                   const std::string& payload_kind, std::size_t payload_bytes);
    DeliveryReport send_one_to_group(const NodeId& sender, const GroupId& group,
                                     const std::string& payload_kind, std::size_t payload_bytes);
    /// One group share per joined community.
    std::vector<DeliveryReport> status_update(const NodeId& node, std::size_t payload_bytes);

    // --- scripted runs
    /// Parses the line-oriented scenario format: `<tick> <event-kind> <args...>`
    /// with '#' comments. Throws std::runtime_error carrying the line number.
    static Script parse_script(std::istream& in);
    static Script parse_script_text(const std::string& text);
    void run_script(const Script& script);

    /// Advances simulated time, firing reputation epochs at every multiple of
    /// epoch_ticks crossed on the way.
    void advance_to(long tick);
    /// Forces one reputation epoch at the current tick.
    void force_epoch();

    // --- inspection
    long current_tick() const { return tick_; }
    const KeywordDictionary& dictionary() const { return dict_; }
    ReputationTable& reputation() { return reputation_; }
    const ReputationTable& reputation() const { return reputation_; }
    const CostLedger& costs() const { return costs_; }
    Rng& rng() { return rng_; }
    const SimConfig& config() const { return cfg_; }

    bool has_node(const NodeId& id) const;
    bool is_online(const NodeId& id) const;
    bool is_malicious(const NodeId& id) const;
    const std::set<NodeId>& friends_of(const NodeId& id) const;
    const std::set<GroupId>& communities_of(const NodeId& id) const;
    const InterestModel& interests(const NodeId& id) const;
    void set_interests(const NodeId& id, InterestModel model);
    std::vector<NodeId> node_ids() const;

    bool has_community(const GroupId& id) const;
    const std::set<NodeId>& members_of(const GroupId& id) const;
    const GroupProfile& profile_of(const GroupId& id) const;
    NodeId super_node_of(const GroupId& id) const;
    std::vector<GroupId> community_ids() const;
    /// Every current super node, across all communities.
    std::set<NodeId> super_nodes() const;
    const GroupKeyState& group_keys(const GroupId& id) const;

    const std::vector<std::string>& event_lines() const { return log_lines_; }
    std::string event_log() const;  // newline-joined JSONL
    std::string next_session_id();

    /// Appends an externally produced event line (recommendation sessions log
    /// through this so one run yields one unified log).
    void append_log(std::string jsonl_line);

  private:
    struct Node {
        NodeId id;
        bool online = true;
        bool malicious = false;
        bool evicted = false;
        std::set<GroupId> communities;
        std::set<NodeId> friends;
        InterestModel interests;
    };
    struct Community {
        GroupId id;
        std::set<NodeId> members;
        NodeId super_node;  // empty while the community has no members
        GroupProfile profile;
        GroupKeyState keys;
    };

    Node& require_node(const NodeId& id);
    const Node& require_node(const NodeId& id) const;
    Community& require_community(const GroupId& id);
    const Community& require_community(const GroupId& id) const;

    /// Home community used for routing: lexicographically first joined.
    std::optional<GroupId> home_community(const Node& n) const;
    std::optional<NodeId> home_super(const Node& n) const;
    void rekey(Community& c);
    void elect_super(Community& c);
    void rate(const NodeId& rater, const NodeId& target);
    void run_epoch_now();
    void apply_event(const ScriptEvent& ev);

    KeywordDictionary dict_;
    SimConfig cfg_;
    Rng rng_;
    ReputationTable reputation_;
    CostLedger costs_;
    std::map<NodeId, Node> nodes_;
    std::map<GroupId, Community> communities_;
    std::vector<std::string> log_lines_;
    long tick_ = 0;
    int session_counter_ = 0;
};

}  // namespace pcbe
