#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pcbe/reputation.hpp"
#include "pcbe/rng.hpp"

#include <sstream>

using namespace pcbe;

namespace {

void repeat(ReputationTable& table, const NodeId& rater, const NodeId& target, Outcome o,
            int times) {
    for (int i = 0; i < times; ++i) table.record_interaction(rater, target, o);
}

}  // namespace

TEST_CASE("local score is the satisfaction ratio with a prior") {
    ReputationTable table;
    CHECK(table.local("a", "b") == 0.5);  // zero observations -> prior

    table.record_interaction("a", "b", Outcome::kSatisfactory);
    CHECK(table.local("a", "b") == 1.0);

    repeat(table, "a", "c", Outcome::kSatisfactory, 3);
    table.record_interaction("a", "c", Outcome::kUnsatisfactory);
    CHECK(table.local("a", "c") == 0.75);

    CHECK_THROWS_AS(table.record_interaction("a", "a", Outcome::kSatisfactory),
                    std::invalid_argument);
}

TEST_CASE("all-satisfactory community converges to full trust") {
    ReputationTable table;
    const std::set<NodeId> universe{"a", "b", "c"};
    for (const auto& x : universe) {
        for (const auto& y : universe) {
            if (x != y) table.record_interaction(x, y, Outcome::kSatisfactory);
        }
    }
    table.run_epoch(universe);
    for (const auto& x : universe) CHECK(table.global(x) == 1.0);
    table.run_epoch(universe);
    for (const auto& x : universe) CHECK(table.global(x) == 1.0);  // fixed point
}

TEST_CASE("all-zero locals drive the global to zero monotonically") {
    ReputationTable table;
    const std::set<NodeId> universe{"a", "b", "c", "m"};
    // Honest triangle rates satisfactorily; everyone rates m unsatisfactory.
    for (const auto& x : {"a", "b", "c"}) {
        for (const auto& y : {"a", "b", "c"}) {
            if (x != std::string(y)) {
                table.record_interaction(x, y, Outcome::kSatisfactory);
            }
        }
        table.record_interaction(x, "m", Outcome::kUnsatisfactory);
    }
    // Hand-iteration of the recurrence: every rater of m reports local 0, so
    // the weighted mean is 0 from the first epoch onward.
    double prev = 1.0;
    for (int epoch = 1; epoch <= 3; ++epoch) {
        table.run_epoch(universe);
        const double g = table.global("m");
        CHECK(g <= prev);
        CHECK(g == 0.0);
        prev = g;
    }
}

TEST_CASE("isolated node keeps the prior") {
    ReputationTable table;
    table.run_epoch({"alone"});
    CHECK(table.global("alone") == 0.5);
}

TEST_CASE("super node election picks maximal trust with id tie-break") {
    ReputationTable table;
    // b earns trust 1.0, a stays at the 0.5 prior, c sinks to 0.
    table.record_interaction("a", "b", Outcome::kSatisfactory);
    table.record_interaction("b", "c", Outcome::kUnsatisfactory);
    table.run_epoch({"a", "b", "c"});
    CHECK(table.global("b") == 1.0);
    CHECK(table.global("a") == 0.5);
    CHECK(table.elect_super_node({"a", "b", "c"}) == "b");

    ReputationTable fresh;
    fresh.run_epoch({"a", "b"});
    CHECK(fresh.elect_super_node({"a", "b"}) == "a");  // tie at the prior

    CHECK_THROWS_AS(fresh.elect_super_node({}), std::invalid_argument);
}

TEST_CASE("leadership changes once a misbehaving super node's trust drops") {
    ReputationTable table;
    const std::set<NodeId> community{"a", "b", "c"};
    // Epoch 1: a is rated well and leads.
    table.record_interaction("b", "a", Outcome::kSatisfactory);
    table.record_interaction("c", "a", Outcome::kSatisfactory);
    table.run_epoch(community);
    CHECK(table.elect_super_node(community) == "a");

    // a turns malicious; b keeps a clean record. Next epoch flips the lead.
    repeat(table, "b", "a", Outcome::kUnsatisfactory, 5);
    repeat(table, "c", "a", Outcome::kUnsatisfactory, 5);
    table.record_interaction("a", "b", Outcome::kSatisfactory);
    table.record_interaction("c", "b", Outcome::kSatisfactory);
    table.run_epoch(community);
    CHECK(table.global("a") < table.global("b"));
    CHECK(table.elect_super_node(community) == "b");
}

TEST_CASE("gate thresholds on receiver trust") {
    ReputationTable table;  // theta = 0.3
    table.record_interaction("x", "good", Outcome::kSatisfactory);
    repeat(table, "x", "bad", Outcome::kUnsatisfactory, 9);
    table.record_interaction("y", "bad", Outcome::kSatisfactory);  // one apologist
    repeat(table, "y", "bad", Outcome::kUnsatisfactory, 2);
    table.run_epoch({"x", "y", "good", "bad"});
    CHECK(table.global("good") >= 0.9);
    CHECK(table.global("bad") < 0.3);
    CHECK(table.gate("anyone", "good"));
    CHECK(!table.gate("anyone", "bad"));
}

TEST_CASE("persistent low trust leads to eviction after E epochs") {
    ReputationConfig cfg;
    cfg.eviction_epochs = 5;
    ReputationTable table(cfg);
    const std::set<NodeId> universe{"a", "b", "m"};
    table.record_interaction("a", "b", Outcome::kSatisfactory);
    table.record_interaction("b", "a", Outcome::kSatisfactory);
    table.record_interaction("a", "m", Outcome::kUnsatisfactory);
    table.record_interaction("b", "m", Outcome::kUnsatisfactory);

    for (int epoch = 1; epoch <= 4; ++epoch) {
        table.run_epoch(universe);
        CHECK(!table.is_evicted("m"));
    }
    table.run_epoch(universe);
    CHECK(table.is_evicted("m"));
    CHECK(!table.is_evicted("a"));
    CHECK(table.last_evictions() == std::vector<NodeId>{"m"});
    CHECK(!table.gate("a", "m"));
}

TEST_CASE("recovering above the floor resets the eviction streak") {
    ReputationConfig cfg;
    cfg.eviction_epochs = 3;
    ReputationTable table(cfg);
    const std::set<NodeId> universe{"a", "b", "v"};
    table.record_interaction("a", "b", Outcome::kSatisfactory);
    table.record_interaction("a", "v", Outcome::kUnsatisfactory);

    table.run_epoch(universe);
    table.run_epoch(universe);
    CHECK(!table.is_evicted("v"));

    // Redemption: sustained satisfactory ratings lift v above the floor.
    repeat(table, "a", "v", Outcome::kSatisfactory, 20);
    repeat(table, "b", "v", Outcome::kSatisfactory, 20);
    table.run_epoch(universe);
    CHECK(table.global("v") > cfg.eviction_floor);
    table.run_epoch(universe);
    table.run_epoch(universe);
    CHECK(!table.is_evicted("v"));
}

TEST_CASE("scores stay within [0,1] under arbitrary interaction sequences") {
    Rng rng(99);
    ReputationTable table;
    std::set<NodeId> universe;
    for (int i = 0; i < 10; ++i) universe.insert("n" + std::to_string(i));
    for (int step = 0; step < 500; ++step) {
        const auto a = "n" + std::to_string(rng.below(10));
        const auto b = "n" + std::to_string(rng.below(10));
        if (a == b) continue;
        table.record_interaction(a, b,
                                 rng.bit() ? Outcome::kSatisfactory : Outcome::kUnsatisfactory);
        if (step % 37 == 0) table.run_epoch(universe);
        for (const auto& x : universe) {
            for (const auto& y : universe) {
                if (x != y) {
                    const double l = table.local(x, y);
                    CHECK(l >= 0.0);
                    CHECK(l <= 1.0);
                }
            }
            const double g = table.global(x);
            CHECK(g >= 0.0);
            CHECK(g <= 1.0);
        }
    }
}

TEST_CASE("a node with only satisfactory ratings never loses local trust") {
    ReputationTable table;
    double last = 0.0;
    for (int i = 0; i < 20; ++i) {
        table.record_interaction("r", "good", Outcome::kSatisfactory);
        const double l = table.local("r", "good");
        CHECK(l >= last);
        last = l;
    }
    CHECK(last == 1.0);
}

TEST_CASE("near-zero-trust raters contribute negligibly (sybil damping)") {
    ReputationTable table;
    const std::set<NodeId> universe{"h1", "h2", "h3", "sybil", "victim"};
    // The sybil first earns a zero reputation.
    for (const auto& h : {"h1", "h2", "h3"}) {
        table.record_interaction(h, "sybil", Outcome::kUnsatisfactory);
    }
    table.run_epoch(universe);
    CHECK(table.global("sybil") == 0.0);

    // Honest raters praise the victim; the sybil slanders with many reports.
    for (const auto& h : {"h1", "h2", "h3"}) {
        table.record_interaction(h, "victim", Outcome::kSatisfactory);
    }
    repeat(table, "sybil", "victim", Outcome::kUnsatisfactory, 100);
    table.run_epoch(universe);
    // Weighted mean: the slander carries weight 0, honest weight dominates.
    CHECK(table.global("victim") == 1.0);
}

TEST_CASE("csv export carries the trust trajectory") {
    ReputationTable table;
    table.record_interaction("a", "b", Outcome::kSatisfactory);
    table.run_epoch({"a", "b"});
    table.run_epoch({"a", "b"});
    std::ostringstream out;
    table.export_csv(out);
    const auto text = out.str();
    CHECK(text.rfind("epoch,node_id,global_trust\n", 0) == 0);
    CHECK(text.find("1,b,1\n") != std::string::npos);
    CHECK(text.find("2,b,1\n") != std::string::npos);
}
