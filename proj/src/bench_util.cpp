#include "pcbe/bench_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace pcbe::bench {

double median_ms(const std::function<void()>& fn, TimingPolicy policy) {
    using clock = std::chrono::steady_clock;
    for (int i = 0; i < policy.warmups; ++i) fn();
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(policy.reps));
    for (int i = 0; i < policy.reps; ++i) {
        const auto t0 = clock::now();
        fn();
        const auto t1 = clock::now();
        samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t mid = samples.size() / 2;
    if (samples.size() % 2 == 1) return samples[mid];
    return 0.5 * (samples[mid - 1] + samples[mid]);
}

std::string format_kb4(std::uint64_t bytes) {
    // bytes/1024 is exact in binary; scale to 1e4 and round half up.
    const double kb = static_cast<double>(bytes) / 1024.0;
    const auto scaled = static_cast<long long>(std::floor(kb * 1e4 + 0.5));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%lld.%04lld", scaled / 10000, scaled % 10000);
    return buf;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (const char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void CsvWriter::meta(const std::string& key, const std::string& value) {
    out_ << "# meta: " << key << '=' << value << '\n';
}

void CsvWriter::header(const std::vector<std::string>& columns) { row(columns); }

void CsvWriter::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        out_ << csv_escape(fields[i]);
    }
    out_ << '\n';
}

}  // namespace pcbe::bench
