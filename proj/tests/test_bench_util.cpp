#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pcbe/bench_util.hpp"

#include <sstream>

using namespace pcbe;

TEST_CASE("kb formatting rounds half up at 4 decimals") {
    // 800 B = 0.78125 KB: a half-way case that must round up, not to even.
    CHECK(bench::format_kb4(800) == "0.7813");
    CHECK(bench::format_kb4(400) == "0.3906");    // 0.390625 truncates
    CHECK(bench::format_kb4(1600) == "1.5625");   // exact
    CHECK(bench::format_kb4(32016) == "31.2656");
    CHECK(bench::format_kb4(48016) == "46.8906");
    CHECK(bench::format_kb4(96016) == "93.7656");
    CHECK(bench::format_kb4(0) == "0.0000");
    CHECK(bench::format_kb4(1024) == "1.0000");
}

TEST_CASE("csv escaping quotes only when needed") {
    CHECK(bench::csv_escape("plain") == "plain");
    CHECK(bench::csv_escape("a,b") == "\"a,b\"");
    CHECK(bench::csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(bench::csv_escape("line\nbreak") == "\"line\nbreak\"");
}

TEST_CASE("csv writer emits meta rows then rows") {
    std::ostringstream out;
    bench::CsvWriter csv(out);
    csv.meta("seed", "42");
    csv.header({"a", "b"});
    csv.row({"1", "x,y"});
    CHECK(out.str() == "# meta: seed=42\na,b\n1,\"x,y\"\n");
}

TEST_CASE("median timing is positive and finite") {
    const double ms = bench::median_ms([] {
        volatile int sink = 0;
        for (int i = 0; i < 10000; ++i) sink += i;
    }, {1, 5});
    CHECK(ms >= 0.0);
    CHECK(ms < 1000.0);
}
