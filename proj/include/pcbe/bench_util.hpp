#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace pcbe::bench {

struct TimingPolicy {
    int warmups = 3;
    int reps = 11;
};

/// Median wall-clock milliseconds over `policy.reps` runs after warmups.
double median_ms(const std::function<void()>& fn, TimingPolicy policy = {});

/// Kilobytes at 4 decimals with half-up rounding, e.g. 800 bytes -> "0.7813".
std::string format_kb4(std::uint64_t bytes);

/// CSV with `# meta:` comment rows ahead of the header. Fields containing
/// commas, quotes or newlines are quoted per RFC 4180.
class CsvWriter {
  public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}
    void meta(const std::string& key, const std::string& value);
    void header(const std::vector<std::string>& columns);
    void row(const std::vector<std::string>& fields);

  private:
    std::ostream& out_;
};

std::string csv_escape(const std::string& field);

}  // namespace pcbe::bench
