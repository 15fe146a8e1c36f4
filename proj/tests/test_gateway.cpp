#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support/gateway_client.hpp"
#include "support/oracles.hpp"

#include "pcbe/gateway.hpp"
#include "pcbe/secure_match.hpp"

#include <json.hpp>

#include <fstream>

using namespace pcbe;
using nlohmann::json;

namespace {

constexpr const char* kSender = "alice";
constexpr const char* kSecret = "wonderland-topsecret";

GatewayConfig test_config(std::size_t n = 8) {
    GatewayConfig cfg;
    cfg.dict_size = n;
    cfg.senders[kSender] = {kSecret, 0};
    return cfg;
}

std::string body_str(const std::vector<std::uint8_t>& bytes) {
    return std::string(bytes.begin(), bytes.end());
}

}  // namespace

TEST_CASE("auth verification accepts well-formed envelopes per tier") {
    AuthState auth({{kSender, {kSecret, 0}}});
    const std::int64_t now = 1'700'000'000;

    for (const auto tier : {AuthTier::kBasic, AuthTier::kMiddle, AuthTier::kHigh}) {
        EnvelopeFields env;
        env.sender = kSender;
        env.timestamp = std::to_string(now);
        if (tier != AuthTier::kBasic) env.nonce = "nonce-" + std::to_string(static_cast<int>(tier));
        if (tier == AuthTier::kHigh) {
            env.otp = AuthState::compute_otp(kSecret, auth.otp_counter(kSender));
        }
        env.mac = AuthState::compute_mac(
            "SHA1", kSecret,
            AuthState::canonical_string("POST", "/x", env.sender, env.timestamp, env.nonce,
                                        env.otp, "body"));
        CHECK(auth.verify(tier, env, "POST", "/x", "body", now) == AuthResult::kOk);
    }
}

TEST_CASE("auth monotonicity: a high-tier envelope passes every lower tier") {
    const std::int64_t now = 1'700'000'000;
    EnvelopeFields env;
    env.sender = kSender;
    env.timestamp = std::to_string(now);
    env.nonce = "n1";
    env.otp = AuthState::compute_otp(kSecret, 0);
    env.mac = AuthState::compute_mac(
        "SHA1", kSecret,
        AuthState::canonical_string("GET", "/r", env.sender, env.timestamp, env.nonce, env.otp,
                                    ""));
    // Fresh state per tier so the nonce window does not interfere.
    for (const auto tier : {AuthTier::kBasic, AuthTier::kMiddle, AuthTier::kHigh}) {
        AuthState auth({{kSender, {kSecret, 0}}});
        CHECK(auth.verify(tier, env, "GET", "/r", "", now) == AuthResult::kOk);
    }
}

TEST_CASE("auth rejects tampering, replays, skew and stale OTPs") {
    AuthState auth({{kSender, {kSecret, 0}}});
    const std::int64_t now = 1'700'000'000;

    EnvelopeFields env;
    env.sender = kSender;
    env.timestamp = std::to_string(now);
    env.nonce = "n-1";
    env.mac = AuthState::compute_mac(
        "SHA1", kSecret,
        AuthState::canonical_string("POST", "/p", env.sender, env.timestamp, env.nonce, "",
                                    "payload"));

    CHECK(auth.verify(AuthTier::kMiddle, env, "POST", "/p", "tampered", now) ==
          AuthResult::kBadMac);
    CHECK(auth.verify(AuthTier::kMiddle, env, "POST", "/p", "payload", now) == AuthResult::kOk);
    CHECK(auth.verify(AuthTier::kMiddle, env, "POST", "/p", "payload", now) ==
          AuthResult::kReplayedNonce);

    EnvelopeFields skewed = env;
    skewed.timestamp = std::to_string(now - 3600);
    skewed.nonce = "n-2";
    skewed.mac = AuthState::compute_mac(
        "SHA1", kSecret,
        AuthState::canonical_string("POST", "/p", kSender, skewed.timestamp, skewed.nonce, "",
                                    "payload"));
    CHECK(auth.verify(AuthTier::kMiddle, skewed, "POST", "/p", "payload", now) ==
          AuthResult::kSkewedTimestamp);

    EnvelopeFields unknown = env;
    unknown.sender = "mallory";
    CHECK(auth.verify(AuthTier::kBasic, unknown, "POST", "/p", "payload", now) ==
          AuthResult::kUnknownSender);

    // Advance the OTP counter, then present the old password again.
    EnvelopeFields high = env;
    high.nonce = "n-3";
    high.otp = AuthState::compute_otp(kSecret, 0);
    high.mac = AuthState::compute_mac(
        "SHA1", kSecret,
        AuthState::canonical_string("POST", "/p", kSender, high.timestamp, high.nonce, high.otp,
                                    "payload"));
    CHECK(auth.verify(AuthTier::kHigh, high, "POST", "/p", "payload", now) == AuthResult::kOk);

    EnvelopeFields stale = env;
    stale.nonce = "n-4";
    stale.otp = AuthState::compute_otp(kSecret, 0);  // counter is now 1
    stale.mac = AuthState::compute_mac(
        "SHA1", kSecret,
        AuthState::canonical_string("POST", "/p", kSender, stale.timestamp, stale.nonce,
                                    stale.otp, "payload"));
    CHECK(auth.verify(AuthTier::kHigh, stale, "POST", "/p", "payload", now) == AuthResult::kBadOtp);
}

TEST_CASE("default MAC is a 20-byte HMAC-SHA1 tag, stronger hash available") {
    const auto sha1_tag = AuthState::compute_mac("SHA1", kSecret, "canonical");
    CHECK(sha1_tag.size() == 40);  // hex of 20 bytes
    const auto sha256_tag = AuthState::compute_mac("SHA256", kSecret, "canonical");
    CHECK(sha256_tag.size() == 64);
    CHECK(sha1_tag != sha256_tag.substr(0, 40));
}

TEST_CASE("gateway serves the full session flow over HTTP") {
    GatewayServer server(test_config(8));
    REQUIRE(server.start());
    httplib::Client client("127.0.0.1", server.port());
    gwtest::Signer signer(kSender, kSecret);

    // Session creation requires the middle tier.
    const std::string session_body = R"({"target":"u1","k":3,"mu":0.0,"sigma":0.0})";
    auto env = signer.headers(AuthTier::kMiddle, "POST", "/v1/session", session_body);
    auto created = client.Post("/v1/session", env.headers, session_body, "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 201);
    const auto sid = json::parse(created->body).at("session").get<std::string>();

    // Premature result: nothing scored yet -> 425.
    const std::string result_path = "/v1/session/" + sid + "/result";
    env = signer.headers(AuthTier::kHigh, "GET", result_path, "");
    auto early = client.Get(result_path, env.headers);
    REQUIRE(early);
    CHECK(early->status == 425);

    // Build a tiny matching instance; sigma=0 keeps ranking exact.
    Rng rng(99);
    const std::size_t n = 8;
    const auto key = SecretKey::generate(n, 4321);
    const auto qm = oracles::random_model(n, 3, 4, rng);
    const auto trapdoor_bytes = serialize_trapdoor(build_trapdoor(qm, key, rng));

    const std::string trapdoor_path = "/v1/session/" + sid + "/trapdoor";
    env = signer.headers(AuthTier::kMiddle, "POST", trapdoor_path, body_str(trapdoor_bytes));
    auto tp = client.Post(trapdoor_path, env.headers, body_str(trapdoor_bytes),
                          "application/octet-stream");
    REQUIRE(tp);
    CHECK(tp->status == 200);

    std::vector<std::pair<std::string, Eigen::VectorXd>> plain;
    const std::string index_path = "/v1/session/" + sid + "/index";
    for (int c = 0; c < 6; ++c) {
        const auto dm = oracles::random_model(n, 2 + rng.below(5), 4, rng);
        const std::string id = "c" + std::to_string(10 + c);
        plain.emplace_back(id, to_plain_vector(dm, n));
        const auto index_bytes = serialize_index(build_index(dm, key, {0.0, 0.0}, rng));
        env = signer.headers(AuthTier::kBasic, "POST", index_path, body_str(index_bytes));
        auto up = client.Post(index_path + "?candidate=" + id, env.headers, body_str(index_bytes),
                              "application/octet-stream");
        REQUIRE(up);
        CHECK(up->status == 200);
        CHECK(json::parse(up->body).at("accepted").get<bool>());
    }

    env = signer.headers(AuthTier::kHigh, "GET", result_path, "");
    auto result = client.Get(result_path + "?k=3", env.headers);
    REQUIRE(result);
    REQUIRE(result->status == 200);
    const auto ids = json::parse(result->body).get<std::vector<std::string>>();
    CHECK(ids == oracles::plaintext_top_k(to_plain_vector(qm, n), plain, 3));

    server.stop();
}

TEST_CASE("gateway rejects malformed payloads and unknown sessions") {
    GatewayServer server(test_config(8));
    REQUIRE(server.start());
    httplib::Client client("127.0.0.1", server.port());
    gwtest::Signer signer(kSender, kSecret);

    auto env = signer.headers(AuthTier::kMiddle, "POST", "/v1/session", "{}");
    auto bad_body = client.Post("/v1/session", env.headers, "{}", "application/json");
    REQUIRE(bad_body);
    CHECK(bad_body->status == 400);

    const std::string body = R"({"target":"u1"})";
    env = signer.headers(AuthTier::kMiddle, "POST", "/v1/session", body);
    auto created = client.Post("/v1/session", env.headers, body, "application/json");
    REQUIRE(created->status == 201);
    const auto sid = json::parse(created->body).at("session").get<std::string>();

    // Truncated vector payload -> 400.
    Rng rng(5);
    const auto key = SecretKey::generate(8, 7);
    auto bytes = serialize_trapdoor(build_trapdoor(oracles::random_model(8, 2, 3, rng), key, rng));
    bytes.pop_back();
    const std::string trapdoor_path = "/v1/session/" + sid + "/trapdoor";
    env = signer.headers(AuthTier::kMiddle, "POST", trapdoor_path, body_str(bytes));
    auto truncated = client.Post(trapdoor_path, env.headers, body_str(bytes),
                                 "application/octet-stream");
    REQUIRE(truncated);
    CHECK(truncated->status == 400);

    // Wrong dimension (n=16 against a dict_size-8 gateway) -> 400.
    const auto big_key = SecretKey::generate(16, 9);
    const auto big = serialize_trapdoor(
        build_trapdoor(oracles::random_model(16, 2, 3, rng), big_key, rng));
    env = signer.headers(AuthTier::kMiddle, "POST", trapdoor_path, body_str(big));
    auto wrong_dim = client.Post(trapdoor_path, env.headers, body_str(big),
                                 "application/octet-stream");
    REQUIRE(wrong_dim);
    CHECK(wrong_dim->status == 400);

    // Unknown session -> 404.
    env = signer.headers(AuthTier::kMiddle, "POST", "/v1/session/ghost/trapdoor", body_str(big));
    auto ghost = client.Post("/v1/session/ghost/trapdoor", env.headers, body_str(big),
                             "application/octet-stream");
    REQUIRE(ghost);
    CHECK(ghost->status == 404);

    // Missing candidate parameter -> 400.
    const std::string index_path = "/v1/session/" + sid + "/index";
    const auto idx = serialize_index(
        build_index(oracles::random_model(8, 2, 3, rng), key, {0, 0}, rng));
    env = signer.headers(AuthTier::kBasic, "POST", index_path, body_str(idx));
    auto no_candidate = client.Post(index_path, env.headers, body_str(idx),
                                    "application/octet-stream");
    REQUIRE(no_candidate);
    CHECK(no_candidate->status == 400);

    server.stop();
}

TEST_CASE("gateway accepts table-scale binary payloads") {
    GatewayServer server(test_config(4000));
    REQUIRE(server.start());
    httplib::Client client("127.0.0.1", server.port());
    gwtest::Signer signer(kSender, kSecret);

    const std::string body = R"({"target":"u1"})";
    auto env = signer.headers(AuthTier::kMiddle, "POST", "/v1/session", body);
    auto created = client.Post("/v1/session", env.headers, body, "application/json");
    REQUIRE(created->status == 201);
    const auto sid = json::parse(created->body).at("session").get<std::string>();

    // 4-byte header + 32016 payload bytes for a 4002-dimension vector pair.
    Rng rng(17);
    const auto dim = static_cast<Eigen::Index>(4002);
    EncIndex big{Eigen::VectorXd(dim), Eigen::VectorXd(dim)};
    for (Eigen::Index i = 0; i < dim; ++i) {
        big.a[i] = rng.uniform(-1, 1);
        big.b[i] = rng.uniform(-1, 1);
    }
    const auto bytes = serialize_index(big);
    CHECK(bytes.size() == 4 + 32016);

    const std::string index_path = "/v1/session/" + sid + "/index";
    env = signer.headers(AuthTier::kBasic, "POST", index_path, body_str(bytes));
    auto up = client.Post(index_path + "?candidate=c1", env.headers, body_str(bytes),
                          "application/octet-stream");
    REQUIRE(up);
    CHECK(up->status == 200);
    server.stop();
}

TEST_CASE("gateway enforces tier security over HTTP") {
    GatewayServer server(test_config(8));
    REQUIRE(server.start());
    httplib::Client client("127.0.0.1", server.port());
    gwtest::Signer signer(kSender, kSecret);

    const std::string body = R"({"target":"u1"})";

    // Tampered body after signing -> 401.
    auto env = signer.headers(AuthTier::kMiddle, "POST", "/v1/session", body);
    auto tampered = client.Post("/v1/session", env.headers, R"({"target":"mallory"})",
                                "application/json");
    REQUIRE(tampered);
    CHECK(tampered->status == 401);

    // Captured request resent verbatim -> 409.
    env = signer.headers(AuthTier::kMiddle, "POST", "/v1/session", body);
    auto first = client.Post("/v1/session", env.headers, body, "application/json");
    REQUIRE(first->status == 201);
    auto replay = client.Post("/v1/session", env.headers, body, "application/json");
    REQUIRE(replay);
    CHECK(replay->status == 409);

    // Stale one-time password -> 401.
    const std::string session_json = json::parse(first->body).at("session").get<std::string>();
    const std::string result_path = "/v1/session/" + session_json + "/result";
    auto good = signer.headers(AuthTier::kHigh, "GET", result_path, "");
    auto r1 = client.Get(result_path, good.headers);  // consumes counter 0 (425 is fine)
    REQUIRE(r1);
    CHECK(r1->status == 425);
    signer.set_otp_counter(0);  // rewind: the next request presents a used password
    auto stale = signer.headers(AuthTier::kHigh, "GET", result_path, "");
    auto r2 = client.Get(result_path, stale.headers);
    REQUIRE(r2);
    CHECK(r2->status == 401);

    server.stop();
}

TEST_CASE("secrets file loading") {
    const auto path = std::string("test_secrets.json");
    {
        std::ofstream out(path);
        out << R"({"senders":{"alice":{"secret":"s1","otp_counter":5},"bob":{"secret":"s2"}}})";
    }
    const auto senders = load_secrets_file(path);
    REQUIRE(senders.size() == 2);
    CHECK(senders.at("alice").secret == "s1");
    CHECK(senders.at("alice").otp_counter == 5);
    CHECK(senders.at("bob").otp_counter == 0);
    std::remove(path.c_str());
}
