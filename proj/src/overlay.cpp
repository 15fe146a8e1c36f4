#include "pcbe/overlay.hpp"

#include "pcbe/crypto_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace pcbe {

using ordered_json = nlohmann::ordered_json;

namespace {

// One-to-one payloads travel under a pairwise key; this models the seal
// overhead (nonce + tag) per transmission.
constexpr std::size_t kPairwiseOverheadBytes = 40;

std::vector<std::uint8_t> keystream_xor(const std::array<std::uint8_t, 32>& key,
                                        std::span<const std::uint8_t> data) {
    std::vector<std::uint8_t> out(data.begin(), data.end());
    std::vector<std::uint8_t> block_input(key.begin(), key.end());
    block_input.resize(36);
    for (std::size_t off = 0, counter = 0; off < out.size(); off += 32, ++counter) {
        for (int i = 0; i < 4; ++i) {
            block_input[32 + i] = static_cast<std::uint8_t>((counter >> (8 * i)) & 0xff);
        }
        const auto block = crypto::sha256(std::span<const std::uint8_t>(block_input));
        for (std::size_t i = 0; i < 32 && off + i < out.size(); ++i) {
            out[off + i] ^= block[i];
        }
    }
    return out;
}

}  // namespace

std::array<std::uint8_t, 32> derive_group_key(const GroupId& group, const NodeId& user) {
    std::string input;
    input.reserve(group.size() + user.size() + 1);
    input += group;
    input.push_back('\0');
    input += user;
    return crypto::sha256(input);
}

namespace group_crypto {

SealedBlob seal(const GroupKeyState& state, std::span<const std::uint8_t> plaintext) {
    SealedBlob blob;
    blob.group = state.group;
    blob.key_version = state.version;
    blob.header_bytes = kHeaderFixedBytes + kPerRecipientBytes * state.members.size() +
                        kPerRevokedBytes * state.revoked.size();
    for (const auto& member : state.members) {
        auto wrap = derive_group_key(state.group, member);
        for (std::size_t i = 0; i < wrap.size(); ++i) wrap[i] ^= state.session_key[i];
        blob.wrapped.emplace(member, wrap);
    }
    blob.body = keystream_xor(state.session_key, plaintext);
    blob.checksum = crypto::sha256(plaintext);
    return blob;
}

std::optional<std::vector<std::uint8_t>> open(const SealedBlob& blob, const NodeId& member) {
    const auto it = blob.wrapped.find(member);
    if (it == blob.wrapped.end()) return std::nullopt;
    auto session_key = derive_group_key(blob.group, member);
    for (std::size_t i = 0; i < session_key.size(); ++i) session_key[i] ^= it->second[i];
    auto plaintext = keystream_xor(session_key, blob.body);
    if (crypto::sha256(std::span<const std::uint8_t>(plaintext)) != blob.checksum) {
        return std::nullopt;
    }
    return plaintext;
}

}  // namespace group_crypto

const char* to_string(DeliveryReport::Status s) {
    switch (s) {
        case DeliveryReport::Status::kDelivered: return "delivered";
        case DeliveryReport::Status::kBlockedByReputation: return "blocked-by-reputation";
        case DeliveryReport::Status::kUndeliverable: return "undeliverable";
        case DeliveryReport::Status::kNoRecipients: return "no-recipients";
    }
    return "unknown";
}

void CostLedger::add(long tick, std::uint64_t messages, std::uint64_t bytes) {
    auto& [m, b] = per_tick_[tick];
    m += messages;
    b += bytes;
    total_messages_ += messages;
    total_bytes_ += bytes;
}

void CostLedger::export_csv(std::ostream& out) const {
    out << "tick,messages,bytes,cumulative_messages,cumulative_bytes\n";
    std::uint64_t cm = 0, cb = 0;
    for (const auto& [tick, mb] : per_tick_) {
        cm += mb.first;
        cb += mb.second;
        out << tick << ',' << mb.first << ',' << mb.second << ',' << cm << ',' << cb << '\n';
    }
}

Simulator::Simulator(KeywordDictionary dict, SimConfig cfg)
    : dict_(std::move(dict)), cfg_(cfg), rng_(cfg.seed), reputation_(cfg.reputation) {
    if (cfg_.epoch_ticks < 1) throw std::invalid_argument("epoch_ticks must be >= 1");
}

Simulator::Node& Simulator::require_node(const NodeId& id) {
    const auto it = nodes_.find(id);
    if (it == nodes_.end()) throw std::invalid_argument("unknown node: " + id);
    return it->second;
}

const Simulator::Node& Simulator::require_node(const NodeId& id) const {
    const auto it = nodes_.find(id);
    if (it == nodes_.end()) throw std::invalid_argument("unknown node: " + id);
    return it->second;
}

Simulator::Community& Simulator::require_community(const GroupId& id) {
    const auto it = communities_.find(id);
    if (it == communities_.end()) throw std::invalid_argument("unknown community: " + id);
    return it->second;
}

const Simulator::Community& Simulator::require_community(const GroupId& id) const {
    const auto it = communities_.find(id);
    if (it == communities_.end()) throw std::invalid_argument("unknown community: " + id);
    return it->second;
}

void Simulator::add_node(const NodeId& id, bool malicious,
                         const std::vector<std::string>& interest_keywords) {
    if (nodes_.count(id)) throw std::invalid_argument("duplicate node: " + id);
    Node n;
    n.id = id;
    n.malicious = malicious;
    if (!interest_keywords.empty()) {
        n.interests = init_interest(dict_, interest_keywords, id);
    } else {
        n.interests.owner = id;
    }
    nodes_.emplace(id, std::move(n));

    ordered_json j;
    j["t"] = tick_;
    j["kind"] = "node";
    j["id"] = id;
    j["behavior"] = malicious ? "malicious" : "honest";
    append_log(j.dump());
}

void Simulator::add_community(const GroupId& id, const std::vector<std::string>& keywords) {
    if (communities_.count(id)) throw std::invalid_argument("duplicate community: " + id);
    std::vector<std::uint32_t> ids;
    ids.reserve(keywords.size());
    for (const auto& kw : keywords) ids.push_back(dict_.require(kw));
    Community c;
    c.id = id;
    c.profile = GroupProfile(id, std::move(ids), dict_);
    c.keys.group = id;
    communities_.emplace(id, std::move(c));

    ordered_json j;
    j["t"] = tick_;
    j["kind"] = "community";
    j["id"] = id;
    j["keywords"] = keywords;
    append_log(j.dump());
}

void Simulator::rekey(Community& c) {
    c.keys.group = c.id;
    c.keys.members = c.members;
    c.keys.version += 1;
    for (auto& byte : c.keys.session_key) {
        byte = static_cast<std::uint8_t>(rng_.below(256));
    }
}

void Simulator::elect_super(Community& c) {
    if (c.members.empty()) {
        c.super_node.clear();
        return;
    }
    c.super_node = reputation_.elect_super_node(c.members);
}

void Simulator::join(const NodeId& node, const GroupId& group) {
    auto& n = require_node(node);
    auto& c = require_community(group);
    if (n.evicted) throw std::invalid_argument("evicted node cannot join: " + node);
    if (c.members.count(node)) return;
    c.members.insert(node);
    c.keys.revoked.erase(node);
    n.communities.insert(group);
    rekey(c);
    if (c.super_node.empty()) elect_super(c);
    // Algorithm-1 fold: joining a group bumps the member's interest model
    // with the group's keyword profile.
    n.interests = update_interest(n.interests, {c.profile}, dict_.size());

    ordered_json j;
    j["t"] = tick_;
    j["kind"] = "join";
    j["node"] = node;
    j["group"] = group;
    j["super"] = c.super_node;
    append_log(j.dump());
}

void Simulator::leave(const NodeId& node, const GroupId& group) {
    auto& n = require_node(node);
    auto& c = require_community(group);
    if (!c.members.count(node)) return;
    c.members.erase(node);
    c.keys.revoked.insert(node);
    n.communities.erase(group);
    rekey(c);
    if (c.super_node == node) elect_super(c);

    ordered_json j;
    j["t"] = tick_;
    j["kind"] = "leave";
    j["node"] = node;
    j["group"] = group;
    append_log(j.dump());
}

void Simulator::add_friend(const NodeId& a, const NodeId& b) {
    if (a == b) throw std::invalid_argument("a node cannot befriend itself");
    auto& na = require_node(a);
    auto& nb = require_node(b);
    na.friends.insert(b);
    nb.friends.insert(a);

    ordered_json j;
    j["t"] = tick_;
    j["kind"] = "add-friend";
    j["a"] = a;
    j["b"] = b;
    append_log(j.dump());
}

void Simulator::set_online(const NodeId& node, bool online) {
    require_node(node).online = online;
    ordered_json j;
    j["t"] = tick_;
    j["kind"] = online ? "online" : "offline";
    j["node"] = node;
    append_log(j.dump());
}

std::optional<GroupId> Simulator::home_community(const Node& n) const {
    if (n.communities.empty()) return std::nullopt;
    return *n.communities.begin();
}

std::optional<NodeId> Simulator::home_super(const Node& n) const {
    const auto home = home_community(n);
    if (!home) return std::nullopt;
    const auto& c = require_community(*home);
    if (c.super_node.empty()) return std::nullopt;
    return c.super_node;
}

void Simulator::rate(const NodeId& rater, const NodeId& target) {
    if (rater == target) return;
    const auto& r = require_node(rater);
    const auto& t = require_node(target);
    // Honest nodes report what they saw; malicious nodes invert it (slander
    // honest peers, whitewash fellow attackers).
    const bool satisfied = r.malicious ? t.malicious : !t.malicious;
    reputation_.record_interaction(rater, target,
                                   satisfied ? Outcome::kSatisfactory : Outcome::kUnsatisfactory);
}

DeliveryReport Simulator::send_one_to_one(const NodeId& sender, const NodeId& receiver,
                                          const std::string& payload_kind,
                                          std::size_t payload_bytes) {
    const auto& s = require_node(sender);
    const auto& r = require_node(receiver);

    DeliveryReport report;
    const std::size_t sealed_bytes = payload_bytes + kPairwiseOverheadBytes;

    if (sender == receiver) {
        // Local hand-off, no transmission.
        report.status = s.online && !s.evicted ? DeliveryReport::Status::kDelivered
                                               : DeliveryReport::Status::kUndeliverable;
        if (report.delivered()) report.route = {sender};
    } else if (!s.online || s.evicted) {
        report.status = DeliveryReport::Status::kUndeliverable;
    } else if (!reputation_.gate(sender, receiver)) {
        // "Confirmed by super node": the sender's super node (or the sender
        // itself for local traffic) checks the receiver's reputation first.
        report.status = DeliveryReport::Status::kBlockedByReputation;
    } else if (!r.online || r.evicted) {
        report.status = DeliveryReport::Status::kUndeliverable;
    } else {
        std::vector<NodeId> route;
        bool shared_community = false;
        for (const auto& g : s.communities) {
            if (r.communities.count(g)) {
                shared_community = true;
                break;
            }
        }
        if (shared_community) {
            route = {sender, receiver};
        } else {
            const auto ss = home_super(s);
            const auto rs = home_super(r);
            if (!ss || !rs) {
                report.status = DeliveryReport::Status::kUndeliverable;  // no super-node path
            } else {
                route = {sender, *ss, *rs, receiver};
                route.erase(std::unique(route.begin(), route.end()), route.end());
            }
        }
        if (!route.empty()) {
            report.status = DeliveryReport::Status::kDelivered;
            report.route = route;
            report.hops = static_cast<int>(route.size()) - 1;
            report.bytes = sealed_bytes * static_cast<std::size_t>(report.hops);
            costs_.add(tick_, static_cast<std::uint64_t>(report.hops), report.bytes);
            rate(receiver, sender);
        }
    }

    ordered_json j;
    j["t"] = tick_;
    j["kind"] = "send-one";
    j["from"] = sender;
    j["to"] = receiver;
    j["payload"] = payload_kind;
    j["status"] = to_string(report.status);
    j["route"] = report.route;
    j["hops"] = report.hops;
    j["bytes"] = report.bytes;
    append_log(j.dump());
    return report;
}

DeliveryReport Simulator::send_one_to_group(const NodeId& sender, const GroupId& group,
                                            const std::string& payload_kind,
                                            std::size_t payload_bytes) {
    const auto& s = require_node(sender);
    auto& c = require_community(group);

    DeliveryReport report;
    std::vector<NodeId> recipients;
    for (const auto& m : c.members) {
        if (m == sender) continue;
        const auto& node = require_node(m);
        if (node.online && !node.evicted) recipients.push_back(m);
    }

    if (!s.online || s.evicted) {
        report.status = DeliveryReport::Status::kUndeliverable;
    } else if (c.members.empty() || recipients.empty()) {
        report.status = DeliveryReport::Status::kNoRecipients;
    } else if (c.super_node.empty() || !reputation_.gate(sender, c.super_node)) {
        report.status = DeliveryReport::Status::kBlockedByReputation;
    } else {
        // Route to the group's super node, then one sealed broadcast fanning
        // out to every online member.
        std::vector<NodeId> route;
        if (s.communities.count(group) || sender == c.super_node) {
            route = {sender, c.super_node};
        } else {
            const auto ss = home_super(s);
            if (ss) {
                route = {sender, *ss, c.super_node};
            } else {
                route = {sender, c.super_node};  // communityless sender contacts directly
            }
        }
        route.erase(std::unique(route.begin(), route.end()), route.end());

        const std::vector<std::uint8_t> payload(payload_bytes, 0);
        const SealedBlob blob = group_crypto::seal(c.keys, payload);

        report.status = DeliveryReport::Status::kDelivered;
        report.route = route;
        report.hops = static_cast<int>(route.size()) - 1;
        report.deliveries = recipients.size();
        report.bytes =
            blob.total_bytes() * (static_cast<std::size_t>(report.hops) + recipients.size());
        costs_.add(tick_, static_cast<std::uint64_t>(report.hops) + recipients.size(),
                   report.bytes);
        for (const auto& m : recipients) rate(m, sender);
    }

    ordered_json j;
    j["t"] = tick_;
    j["kind"] = "send-group";
    j["from"] = sender;
    j["group"] = group;
    j["payload"] = payload_kind;
    j["status"] = to_string(report.status);
    j["route"] = report.route;
    j["hops"] = report.hops;
    j["deliveries"] = report.deliveries;
    j["bytes"] = report.bytes;
    append_log(j.dump());
    return report;
}

std::vector<DeliveryReport> Simulator::status_update(const NodeId& node,
                                                     std::size_t payload_bytes) {
    const auto& n = require_node(node);
    std::vector<DeliveryReport> reports;
    const auto joined = n.communities;  // copy: sends may not mutate, but be safe
    for (const auto& g : joined) {
        reports.push_back(send_one_to_group(node, g, "status-update", payload_bytes));
    }
    return reports;
}

void Simulator::run_epoch_now() {
    std::set<NodeId> universe;
    for (const auto& [id, n] : nodes_) {
        if (!n.evicted) universe.insert(id);
    }
    if (universe.empty()) return;
    reputation_.run_epoch(universe);

    for (const auto& id : reputation_.last_evictions()) {
        auto& n = nodes_.at(id);
        n.evicted = true;
        n.online = false;
        const auto joined = n.communities;
        for (const auto& g : joined) {
            auto& c = communities_.at(g);
            c.members.erase(id);
            c.keys.revoked.insert(id);
            n.communities.erase(g);
            rekey(c);
            if (c.super_node == id) elect_super(c);
        }
        ordered_json ev;
        ev["t"] = tick_;
        ev["kind"] = "evicted";
        ev["node"] = id;
        append_log(ev.dump());
    }

    ordered_json j;
    j["t"] = tick_;
    j["kind"] = "epoch";
    j["epoch"] = reputation_.epoch();
    ordered_json supers = ordered_json::object();
    for (auto& [gid, c] : communities_) {
        elect_super(c);
        if (!c.super_node.empty()) supers[gid] = c.super_node;
    }
    j["supers"] = supers;
    j["evicted"] = reputation_.last_evictions();
    append_log(j.dump());
}

void Simulator::advance_to(long tick) {
    if (tick < tick_) throw std::invalid_argument("cannot rewind the simulator");
    while (tick_ < tick) {
        ++tick_;
        if (tick_ % cfg_.epoch_ticks == 0) run_epoch_now();
    }
}

void Simulator::force_epoch() { run_epoch_now(); }

Script Simulator::parse_script(std::istream& in) {
    Script script;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        ScriptEvent ev;
        ev.line = line_no;
        if (!(ls >> ev.tick)) {
            std::string probe;
            std::istringstream(line) >> probe;
            if (probe.empty()) continue;  // blank / comment-only line
            throw std::runtime_error("scenario line " + std::to_string(line_no) +
                                     ": expected an integer tick");
        }
        if (ev.tick < 0) {
            throw std::runtime_error("scenario line " + std::to_string(line_no) +
                                     ": tick must be non-negative");
        }
        if (!(ls >> ev.kind)) {
            throw std::runtime_error("scenario line " + std::to_string(line_no) +
                                     ": missing event kind");
        }
        std::string arg;
        while (ls >> arg) ev.args.push_back(arg);
        script.events.push_back(std::move(ev));
    }
    std::stable_sort(script.events.begin(), script.events.end(),
                     [](const ScriptEvent& a, const ScriptEvent& b) { return a.tick < b.tick; });
    return script;
}

Script Simulator::parse_script_text(const std::string& text) {
    std::istringstream in(text);
    return parse_script(in);
}

void Simulator::apply_event(const ScriptEvent& ev) {
    const auto need = [&ev](std::size_t n) {
        if (ev.args.size() < n) {
            throw std::runtime_error("scenario line " + std::to_string(ev.line) + ": '" + ev.kind +
                                     "' needs " + std::to_string(n) + " arguments");
        }
    };
    const auto split_keywords = [](const std::string& csv) {
        std::vector<std::string> out;
        std::string item;
        std::istringstream ss(csv);
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) out.push_back(item);
        }
        return out;
    };
    const auto parse_bytes = [&ev](const std::string& s) {
        try {
            return static_cast<std::size_t>(std::stoull(s));
        } catch (const std::exception&) {
            throw std::runtime_error("scenario line " + std::to_string(ev.line) +
                                     ": invalid byte count '" + s + "'");
        }
    };

    try {
        if (ev.kind == "node") {
            need(2);
            const bool malicious = ev.args[1] == "malicious";
            if (!malicious && ev.args[1] != "honest") {
                throw std::runtime_error("behavior must be honest|malicious");
            }
            add_node(ev.args[0], malicious,
                     ev.args.size() > 2 ? split_keywords(ev.args[2]) : std::vector<std::string>{});
        } else if (ev.kind == "community") {
            need(2);
            add_community(ev.args[0], split_keywords(ev.args[1]));
        } else if (ev.kind == "join") {
            need(2);
            join(ev.args[0], ev.args[1]);
        } else if (ev.kind == "leave") {
            need(2);
            leave(ev.args[0], ev.args[1]);
        } else if (ev.kind == "add-friend") {
            need(2);
            add_friend(ev.args[0], ev.args[1]);
        } else if (ev.kind == "send-one") {
            need(4);
            send_one_to_one(ev.args[0], ev.args[1], ev.args[2], parse_bytes(ev.args[3]));
        } else if (ev.kind == "send-group") {
            need(4);
            send_one_to_group(ev.args[0], ev.args[1], ev.args[2], parse_bytes(ev.args[3]));
        } else if (ev.kind == "status-update") {
            need(2);
            status_update(ev.args[0], parse_bytes(ev.args[1]));
        } else if (ev.kind == "file-share") {
            need(3);
            if (has_community(ev.args[1])) {
                send_one_to_group(ev.args[0], ev.args[1], "file-share", parse_bytes(ev.args[2]));
            } else {
                send_one_to_one(ev.args[0], ev.args[1], "file-share", parse_bytes(ev.args[2]));
            }
        } else if (ev.kind == "online") {
            need(1);
            set_online(ev.args[0], true);
        } else if (ev.kind == "offline") {
            need(1);
            set_online(ev.args[0], false);
        } else if (ev.kind == "epoch-tick") {
            force_epoch();
        } else {
            throw std::runtime_error("unknown event kind '" + ev.kind + "'");
        }
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error("scenario line " + std::to_string(ev.line) + ": " + e.what());
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        if (what.rfind("scenario line", 0) == 0) throw;
        throw std::runtime_error("scenario line " + std::to_string(ev.line) + ": " + what);
    }
}

void Simulator::run_script(const Script& script) {
    for (const auto& ev : script.events) {
        advance_to(ev.tick);
        apply_event(ev);
    }
}

bool Simulator::has_node(const NodeId& id) const { return nodes_.count(id) > 0; }
bool Simulator::is_online(const NodeId& id) const { return require_node(id).online; }
bool Simulator::is_malicious(const NodeId& id) const { return require_node(id).malicious; }

const std::set<NodeId>& Simulator::friends_of(const NodeId& id) const {
    return require_node(id).friends;
}

const std::set<GroupId>& Simulator::communities_of(const NodeId& id) const {
    return require_node(id).communities;
}

const InterestModel& Simulator::interests(const NodeId& id) const {
    return require_node(id).interests;
}

void Simulator::set_interests(const NodeId& id, InterestModel model) {
    require_node(id).interests = std::move(model);
}

std::vector<NodeId> Simulator::node_ids() const {
    std::vector<NodeId> ids;
    ids.reserve(nodes_.size());
    for (const auto& [id, _] : nodes_) ids.push_back(id);
    return ids;
}

bool Simulator::has_community(const GroupId& id) const { return communities_.count(id) > 0; }

const std::set<NodeId>& Simulator::members_of(const GroupId& id) const {
    return require_community(id).members;
}

const GroupProfile& Simulator::profile_of(const GroupId& id) const {
    return require_community(id).profile;
}

NodeId Simulator::super_node_of(const GroupId& id) const {
    return require_community(id).super_node;
}

std::vector<GroupId> Simulator::community_ids() const {
    std::vector<GroupId> ids;
    ids.reserve(communities_.size());
    for (const auto& [id, _] : communities_) ids.push_back(id);
    return ids;
}

std::set<NodeId> Simulator::super_nodes() const {
    std::set<NodeId> supers;
    for (const auto& [_, c] : communities_) {
        if (!c.super_node.empty()) supers.insert(c.super_node);
    }
    return supers;
}

const GroupKeyState& Simulator::group_keys(const GroupId& id) const {
    return require_community(id).keys;
}

std::string Simulator::event_log() const {
    std::string out;
    for (const auto& line : log_lines_) {
        out += line;
        out += '\n';
    }
    return out;
}

std::string Simulator::next_session_id() {
    return "session-" + std::to_string(++session_counter_);
}

void Simulator::append_log(std::string jsonl_line) { log_lines_.push_back(std::move(jsonl_line)); }

}  // namespace pcbe
