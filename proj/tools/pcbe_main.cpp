// pcbe: bench harness, scenario runner, key tool and gateway daemon.
// Exit codes: 0 success, 1 error, 2 acceptance-band violation in a bench.

#include "pcbe/bench_util.hpp"
#include "pcbe/gateway.hpp"
#include "pcbe/recommend.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <thread>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

using namespace pcbe;

namespace {

constexpr const char* kCsvVersion = "1";
constexpr int kExitBandViolation = 2;

struct OutStream {
    std::ostream* out = &std::cout;
    std::unique_ptr<std::ofstream> file;
};

OutStream open_out(const std::string& path) {
    OutStream os;
    if (path.empty() || path == "-") return os;
    os.file = std::make_unique<std::ofstream>(path);
    if (!*os.file) throw std::runtime_error("cannot open output file: " + path);
    os.out = os.file.get();
    return os;
}

std::string fmt_ms(double ms) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", ms);
    return buf;
}

std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

InterestModel random_model(std::size_t n, std::size_t m, std::uint32_t max_weight, Rng& rng) {
    InterestModel model;
    while (model.weights.size() < m) {
        model.weights[static_cast<std::uint32_t>(rng.below(n))] =
            1 + static_cast<std::uint32_t>(rng.below(max_weight));
    }
    return model;
}

int bench_sizes(const std::vector<std::size_t>& dict_sizes, std::uint64_t seed,
                const std::string& out_path) {
    auto os = open_out(out_path);
    bench::CsvWriter csv(*os.out);
    csv.meta("bench", "sizes");
    csv.meta("version", kCsvVersion);
    csv.meta("seed", std::to_string(seed));
    csv.meta("format", "u32 dim header + 2*(n+2) float32; payload excludes the header");
    csv.header({"n", "trapdoor_payload_bytes", "trapdoor_kb", "index_payload_bytes", "index_kb"});

    Rng rng(seed);
    for (const auto n : dict_sizes) {
        const auto dim = static_cast<Eigen::Index>(n + 2);
        Trapdoor t{Eigen::VectorXd(dim), Eigen::VectorXd(dim)};
        EncIndex ix{Eigen::VectorXd(dim), Eigen::VectorXd(dim)};
        for (Eigen::Index i = 0; i < dim; ++i) {
            t.a[i] = rng.uniform(-10, 10);
            t.b[i] = rng.uniform(-10, 10);
            ix.a[i] = rng.uniform(-10, 10);
            ix.b[i] = rng.uniform(-10, 10);
        }
        const auto t_payload = serialize_trapdoor(t).size() - 4;
        const auto i_payload = serialize_index(ix).size() - 4;
        csv.row({std::to_string(n), std::to_string(t_payload), bench::format_kb4(t_payload),
                 std::to_string(i_payload), bench::format_kb4(i_payload)});
    }
    return 0;
}

int bench_profile_sizes(const std::vector<std::size_t>& ms, std::uint64_t seed,
                        const std::string& out_path) {
    auto os = open_out(out_path);
    bench::CsvWriter csv(*os.out);
    csv.meta("bench", "profile-sizes");
    csv.meta("version", kCsvVersion);
    csv.meta("seed", std::to_string(seed));
    csv.meta("format", "per entry: u32 keyword index + float32 weight (8 bytes)");
    csv.header({"m", "payload_bytes", "kb"});

    Rng rng(seed);
    for (const auto m : ms) {
        const auto model = random_model(std::max<std::size_t>(2 * m, 4000), m, 9, rng);
        const auto bytes = serialize_profile(model);
        csv.row({std::to_string(m), std::to_string(bytes.size()),
                 bench::format_kb4(bytes.size())});
    }
    return 0;
}

int bench_gen_time(const std::vector<std::size_t>& dict_sweep,
                   const std::vector<std::size_t>& k_sweep, std::size_t fixed_k,
                   std::uint64_t seed, int reps, int warmups, const std::string& out_path) {
    auto os = open_out(out_path);
    bench::CsvWriter csv(*os.out);
    csv.meta("bench", "gen-time");
    csv.meta("version", kCsvVersion);
    csv.meta("seed", std::to_string(seed));
    csv.meta("timing", "median of " + std::to_string(reps) + " after " +
                           std::to_string(warmups) + " warmups");
    csv.meta("bands", "k-flatness<=1.25; growth<=1.5x quadratic");
    csv.header({"op", "n", "k", "median_ms"});

    Rng rng(seed);
    const bench::TimingPolicy policy{warmups, reps};
    bool band_violated = false;

    std::vector<double> trapdoor_ms;
    for (const auto n : dict_sweep) {
        const auto key = SecretKey::generate(n, rng.next_u64());
        const auto k = std::min(fixed_k, n);
        const auto model = random_model(n, k, 4, rng);
        Trapdoor t_sink;
        EncIndex i_sink;
        const double t_ms =
            bench::median_ms([&] { t_sink = build_trapdoor(model, key, rng); }, policy);
        const double i_ms = bench::median_ms(
            [&] { i_sink = build_index(model, key, {0.0, 1.0}, rng); }, policy);
        trapdoor_ms.push_back(t_ms);
        csv.row({"trapdoor", std::to_string(n), std::to_string(k), fmt_ms(t_ms)});
        csv.row({"index", std::to_string(n), std::to_string(k), fmt_ms(i_ms)});
    }

    if (dict_sweep.size() >= 2) {
        if (trapdoor_ms.back() <= trapdoor_ms.front()) {
            std::cerr << "band violation: generation time did not grow across the dict sweep\n";
            band_violated = true;
        }
        for (std::size_t i = 1; i < dict_sweep.size(); ++i) {
            const double dim_ratio = static_cast<double>(dict_sweep[i] + 2) /
                                     static_cast<double>(dict_sweep[i - 1] + 2);
            if (trapdoor_ms[i] > 1.5 * dim_ratio * dim_ratio * trapdoor_ms[i - 1]) {
                std::cerr << "band violation: growth faster than quadratic between n="
                          << dict_sweep[i - 1] << " and n=" << dict_sweep[i] << "\n";
                band_violated = true;
            }
        }
    }

    if (!k_sweep.empty()) {
        const auto n = dict_sweep.back();
        const auto key = SecretKey::generate(n, rng.next_u64());
        std::vector<double> k_ms;
        for (const auto k : k_sweep) {
            const auto model = random_model(n, std::min(k, n), 4, rng);
            Trapdoor sink;
            const double ms =
                bench::median_ms([&] { sink = build_trapdoor(model, key, rng); }, policy);
            k_ms.push_back(ms);
            csv.row({"trapdoor-k-sweep", std::to_string(n), std::to_string(k), fmt_ms(ms)});
        }
        const auto [lo, hi] = std::minmax_element(k_ms.begin(), k_ms.end());
        if (*hi / *lo > 1.25) {
            std::cerr << "band violation: generation time varies " << (*hi / *lo)
                      << "x across the k sweep (band 1.25)\n";
            band_violated = true;
        }
    }
    return band_violated ? kExitBandViolation : 0;
}

int bench_score_time(const std::vector<std::size_t>& candidates_sweep,
                     const std::vector<std::size_t>& dict_sweep, std::size_t k,
                     std::uint64_t seed, int reps, int warmups, const std::string& out_path) {
    auto os = open_out(out_path);
    bench::CsvWriter csv(*os.out);
    csv.meta("bench", "score-time");
    csv.meta("version", kCsvVersion);
    csv.meta("seed", std::to_string(seed));
    csv.meta("timing", "median of " + std::to_string(reps) + " after " +
                           std::to_string(warmups) + " warmups");
    csv.meta("bands", "doubling ratio in [1.6, 2.4]");
    csv.header({"n", "candidates", "k", "median_ms"});

    Rng rng(seed);
    const bench::TimingPolicy policy{warmups, reps};
    bool band_violated = false;

    std::map<std::pair<std::size_t, std::size_t>, double> measured;
    for (const auto n : dict_sweep) {
        const auto key = SecretKey::generate(n, rng.next_u64());
        const auto qm = random_model(n, std::min<std::size_t>(20, n), 4, rng);
        const auto trapdoor = build_trapdoor(qm, key, rng);
        std::vector<std::pair<std::string, EncIndex>> pool;
        pool.reserve(candidates_sweep.back());
        for (const auto candidates : candidates_sweep) {
            while (pool.size() < candidates) {
                pool.emplace_back(
                    "c" + std::to_string(1000000 + pool.size()),
                    build_index(random_model(n, std::min<std::size_t>(20, n), 4, rng), key,
                                {0.0, 1.0}, rng));
            }
            std::vector<std::string> sink;
            const double ms =
                bench::median_ms([&] { sink = top_k(trapdoor, pool, k); }, policy);
            measured[{n, candidates}] = ms;
            csv.row({std::to_string(n), std::to_string(candidates), std::to_string(k),
                     fmt_ms(ms)});
        }
    }

    const auto check_ratio = [&band_violated](double ratio, const std::string& what) {
        if (ratio < 1.6 || ratio > 2.4) {
            std::cerr << "band violation: " << what << " ratio " << ratio
                      << " outside [1.6, 2.4]\n";
            band_violated = true;
        }
    };
    for (const auto n : dict_sweep) {
        for (std::size_t i = 1; i < candidates_sweep.size(); ++i) {
            if (candidates_sweep[i] == 2 * candidates_sweep[i - 1]) {
                check_ratio(measured[{n, candidates_sweep[i]}] /
                                measured[{n, candidates_sweep[i - 1]}],
                            "candidate doubling at n=" + std::to_string(n));
            }
        }
    }
    for (std::size_t i = 1; i < dict_sweep.size(); ++i) {
        if (dict_sweep[i] == 2 * dict_sweep[i - 1]) {
            for (const auto candidates : candidates_sweep) {
                check_ratio(
                    measured[{dict_sweep[i], candidates}] / measured[{dict_sweep[i - 1], candidates}],
                    "dictionary doubling at candidates=" + std::to_string(candidates));
            }
        }
    }
    return band_violated ? kExitBandViolation : 0;
}

int bench_precision(const std::vector<double>& sigma_sweep, int trials, std::size_t pool_size,
                    std::size_t k, std::size_t n, std::uint64_t seed,
                    const std::string& out_path) {
    auto os = open_out(out_path);
    bench::CsvWriter csv(*os.out);
    csv.meta("bench", "precision");
    csv.meta("version", kCsvVersion);
    csv.meta("seed", std::to_string(seed));
    csv.meta("pool", std::to_string(pool_size));
    csv.meta("k", std::to_string(k));
    csv.meta("n", std::to_string(n));
    csv.meta("bands", "mean precision non-increasing across the sigma sweep");
    csv.header({"sigma", "mean_precision", "trials"});

    Rng rng(seed);
    std::vector<double> avg(sigma_sweep.size(), 0.0);
    for (int trial = 0; trial < trials; ++trial) {
        const auto key = SecretKey::generate(n, rng.next_u64());
        const auto qm = random_model(n, std::min<std::size_t>(12, n), 4, rng);
        const auto trapdoor = build_trapdoor(qm, key, rng);

        std::vector<InterestModel> models;
        models.reserve(pool_size);
        std::vector<std::pair<std::string, double>> plain_scores;
        const auto q = to_plain_vector(qm, n);
        for (std::size_t c = 0; c < pool_size; ++c) {
            models.push_back(random_model(n, std::min<std::size_t>(16, n), 4, rng));
            const auto d = to_plain_vector(models.back(), n);
            plain_scores.emplace_back("c" + std::to_string(100000 + c), q.dot(d));
        }
        auto ranked = plain_scores;
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        std::vector<std::string> reference;
        for (std::size_t i = 0; i < ranked.size() && i < k; ++i) reference.push_back(ranked[i].first);

        for (std::size_t s = 0; s < sigma_sweep.size(); ++s) {
            std::vector<std::pair<std::string, EncIndex>> pool;
            pool.reserve(pool_size);
            for (std::size_t c = 0; c < pool_size; ++c) {
                pool.emplace_back(plain_scores[c].first,
                                  build_index(models[c], key, {0.0, sigma_sweep[s]}, rng));
            }
            const auto got = top_k(trapdoor, pool, k);
            std::size_t hits = 0;
            for (const auto& id : got) {
                if (std::find(reference.begin(), reference.end(), id) != reference.end()) ++hits;
            }
            avg[s] += static_cast<double>(hits) / static_cast<double>(reference.size());
        }
    }

    bool band_violated = false;
    for (std::size_t s = 0; s < sigma_sweep.size(); ++s) {
        avg[s] /= trials;
        csv.row({fmt_num(sigma_sweep[s]), fmt_num(avg[s]), std::to_string(trials)});
        if (s > 0 && avg[s] > avg[s - 1]) band_violated = true;
    }
    if (band_violated) {
        std::cerr << "band violation: mean precision rose along the sigma sweep\n";
        return kExitBandViolation;
    }
    return 0;
}

Simulator make_scripted_sim(const std::string& scenario_path, std::uint64_t seed,
                            std::size_t dict_size, const std::string& taxonomy_path) {
    SimConfig cfg;
    cfg.seed = seed;
    auto dict = taxonomy_path.empty() ? KeywordDictionary::synthetic(dict_size)
                                      : KeywordDictionary::load_file(taxonomy_path);
    Simulator sim(std::move(dict), cfg);
    std::ifstream in(scenario_path);
    if (!in) throw std::runtime_error("cannot open scenario: " + scenario_path);
    sim.run_script(Simulator::parse_script(in));
    return sim;
}

int bench_sim_cost(const std::string& scenario_path, std::uint64_t seed, std::size_t dict_size,
                   const std::string& taxonomy_path, const std::string& out_path) {
    auto sim = make_scripted_sim(scenario_path, seed, dict_size, taxonomy_path);
    auto os = open_out(out_path);
    bench::CsvWriter csv(*os.out);
    csv.meta("bench", "sim-cost");
    csv.meta("version", kCsvVersion);
    csv.meta("seed", std::to_string(seed));
    csv.meta("scenario", scenario_path);
    csv.meta("total_messages", std::to_string(sim.costs().total_messages()));
    csv.meta("total_bytes", std::to_string(sim.costs().total_bytes()));
    sim.costs().export_csv(*os.out);
    return 0;
}

int sim_run(const std::string& scenario_path, std::uint64_t seed, std::size_t dict_size,
            const std::string& taxonomy_path, const std::string& log_path,
            const std::string& costs_path, const std::string& trust_path) {
    auto sim = make_scripted_sim(scenario_path, seed, dict_size, taxonomy_path);
    if (!log_path.empty()) {
        auto os = open_out(log_path);
        *os.out << sim.event_log();
    }
    if (!costs_path.empty()) {
        auto os = open_out(costs_path);
        sim.costs().export_csv(*os.out);
    }
    if (!trust_path.empty()) {
        auto os = open_out(trust_path);
        sim.reputation().export_csv(*os.out);
    }
    std::cout << "events=" << sim.event_lines().size()
              << " messages=" << sim.costs().total_messages()
              << " bytes=" << sim.costs().total_bytes()
              << " epochs=" << sim.reputation().epoch()
              << " evicted=" << sim.reputation().evicted().size() << "\n";
    return 0;
}

std::atomic<bool> g_shutdown{false};

int gateway_serve(const std::string& bind, int port, const std::string& secrets_path,
                  std::size_t dict_size, const std::string& mac_algo) {
    GatewayConfig cfg;
    cfg.bind = bind;
    cfg.port = port;
    cfg.dict_size = dict_size;
    cfg.mac_algo = mac_algo;
    cfg.senders = load_secrets_file(secrets_path);

    GatewayServer server(cfg);
    if (!server.start()) {
        std::cerr << "failed to bind " << bind << ":" << port << "\n";
        return 1;
    }
    std::cout << "gateway listening on " << bind << ":" << server.port() << " (n=" << dict_size
              << ", senders=" << cfg.senders.size() << ")\n";

    std::signal(SIGINT, [](int) { g_shutdown = true; });
    std::signal(SIGTERM, [](int) { g_shutdown = true; });
    while (!g_shutdown) {
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
    }
    server.stop();
    return 0;
}

int keygen(std::size_t n, std::uint64_t seed, const std::string& out_path) {
    const auto key = SecretKey::generate(n, seed);
    const auto blob = key.save();
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        std::cerr << "cannot open " << out_path << "\n";
        return 1;
    }
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size()));
    std::cout << "wrote " << blob.size() << " bytes (n=" << n << ", dim=" << key.dim() << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PCBE protocol toolbox: benches, overlay simulator, gateway"};
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    std::string out_path = "-";

    // --- bench
    auto* bench = app.add_subcommand("bench", "storage and timing benchmarks (CSV output)");
    bench->require_subcommand(1);

    auto* sizes = bench->add_subcommand("sizes", "trapdoor/index payload sizes per dictionary");
    std::vector<std::size_t> dict_sizes{4000, 6000, 8000, 10000, 12000};
    sizes->add_option("--dict-sizes", dict_sizes, "dictionary sizes")->delimiter(',');
    sizes->add_option("--seed", seed, "rng seed");
    sizes->add_option("--out", out_path, "output path or -");

    auto* profile = bench->add_subcommand("profile-sizes", "interest-profile payload sizes");
    std::vector<std::size_t> profile_ms{50, 100, 200, 400, 800};
    profile->add_option("--m", profile_ms, "profile keyword counts")->delimiter(',');
    profile->add_option("--seed", seed, "rng seed");
    profile->add_option("--out", out_path, "output path or -");

    auto* gen = bench->add_subcommand("gen-time", "trapdoor/index generation timing");
    std::vector<std::size_t> gen_dict{512, 1024, 2048};
    std::vector<std::size_t> gen_k{16, 64, 256};
    std::size_t gen_fixed_k = 50;
    int reps = 11, warmups = 3;
    gen->add_option("--dict-sweep", gen_dict, "dictionary sizes")->delimiter(',');
    gen->add_option("--k-sweep", gen_k, "interest keyword counts")->delimiter(',');
    gen->add_option("--k", gen_fixed_k, "keyword count for the dict sweep");
    gen->add_option("--reps", reps, "timing repetitions");
    gen->add_option("--warmups", warmups, "warmup runs");
    gen->add_option("--seed", seed, "rng seed");
    gen->add_option("--out", out_path, "output path or -");

    auto* score = bench->add_subcommand("score-time", "scoring and ranking timing");
    std::vector<std::size_t> score_candidates{500, 1000};
    std::vector<std::size_t> score_dict{512, 1024};
    std::size_t score_k = 50;
    score->add_option("--candidates-sweep", score_candidates, "candidate counts")->delimiter(',');
    score->add_option("--dict-sweep", score_dict, "dictionary sizes")->delimiter(',');
    score->add_option("--k", score_k, "top-k cut");
    score->add_option("--reps", reps, "timing repetitions");
    score->add_option("--warmups", warmups, "warmup runs");
    score->add_option("--seed", seed, "rng seed");
    score->add_option("--out", out_path, "output path or -");

    auto* precision = bench->add_subcommand("precision", "ranking precision vs sigma");
    std::vector<double> sigma_sweep{0, 0.5, 1, 2, 5};
    int trials = 100;
    std::size_t pool_size = 1000, precision_k = 50, precision_n = 64;
    precision->add_option("--sigma-sweep", sigma_sweep, "sigma values")->delimiter(',');
    precision->add_option("--trials", trials, "trials per sigma");
    precision->add_option("--pool", pool_size, "candidate pool size");
    precision->add_option("--k", precision_k, "top-k cut");
    precision->add_option("--n", precision_n, "dictionary size");
    precision->add_option("--seed", seed, "rng seed");
    precision->add_option("--out", out_path, "output path or -");

    auto* sim_cost = bench->add_subcommand("sim-cost", "communication cost of a scenario");
    std::string scenario_path, taxonomy_path;
    std::size_t sim_dict_size = 64;
    sim_cost->add_option("--scenario", scenario_path, "scenario script")->required();
    sim_cost->add_option("--dict-size", sim_dict_size, "synthetic dictionary size");
    sim_cost->add_option("--taxonomy", taxonomy_path, "taxonomy fixture path");
    sim_cost->add_option("--seed", seed, "rng seed");
    sim_cost->add_option("--out", out_path, "output path or -");

    // --- sim
    auto* sim = app.add_subcommand("sim", "overlay simulator");
    auto* run = sim->add_subcommand("run", "run a scenario script");
    std::string log_path, costs_path, trust_path;
    run->add_option("--scenario", scenario_path, "scenario script")->required();
    run->add_option("--seed", seed, "rng seed");
    run->add_option("--dict-size", sim_dict_size, "synthetic dictionary size");
    run->add_option("--taxonomy", taxonomy_path, "taxonomy fixture path");
    run->add_option("--log", log_path, "event log output (JSON lines)");
    run->add_option("--costs", costs_path, "cost ledger CSV output");
    run->add_option("--trust", trust_path, "trust trajectory CSV output");

    // --- gateway
    auto* gateway = app.add_subcommand("gateway", "REST gateway");
    auto* serve = gateway->add_subcommand("serve", "run the gateway server");
    std::string bind = "127.0.0.1", secrets_path, mac_algo = "SHA1";
    int port = 8080;
    std::size_t gw_dict_size = 64;
    serve->add_option("--bind", bind, "bind address");
    serve->add_option("--port", port, "port (0 picks a free one)");
    serve->add_option("--secrets", secrets_path, "tier secrets file")->required();
    serve->add_option("--dict-size", gw_dict_size, "dictionary size n");
    serve->add_option("--mac-algo", mac_algo, "MAC digest: SHA1 or SHA256");

    // --- keygen
    auto* kg = app.add_subcommand("keygen", "generate and persist a secret key");
    std::size_t kg_n = 64;
    std::string kg_out = "key.bin";
    kg->add_option("--n", kg_n, "dictionary size");
    kg->add_option("--seed", seed, "rng seed");
    kg->add_option("--out", kg_out, "output file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sizes->parsed()) return bench_sizes(dict_sizes, seed, out_path);
        if (profile->parsed()) return bench_profile_sizes(profile_ms, seed, out_path);
        if (gen->parsed()) {
            return bench_gen_time(gen_dict, gen_k, gen_fixed_k, seed, reps, warmups, out_path);
        }
        if (score->parsed()) {
            return bench_score_time(score_candidates, score_dict, score_k, seed, reps, warmups,
                                    out_path);
        }
        if (precision->parsed()) {
            return bench_precision(sigma_sweep, trials, pool_size, precision_k, precision_n,
                                   seed, out_path);
        }
        if (sim_cost->parsed()) {
            return bench_sim_cost(scenario_path, seed, sim_dict_size, taxonomy_path, out_path);
        }
        if (run->parsed()) {
            return sim_run(scenario_path, seed, sim_dict_size, taxonomy_path, log_path,
                           costs_path, trust_path);
        }
        if (serve->parsed()) {
            return gateway_serve(bind, port, secrets_path, gw_dict_size, mac_algo);
        }
        if (kg->parsed()) return keygen(kg_n, seed, kg_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
