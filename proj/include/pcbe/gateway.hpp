#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>

namespace pcbe {

enum class AuthTier { kBasic, kMiddle, kHigh };

/// Auth material carried in request headers.
struct EnvelopeFields {
    std::string sender;
    std::string timestamp;  // unix seconds, decimal
    std::string nonce;      // middle tier and above
    std::string otp;        // high tier
    std::string mac;        // hex tag over the canonical string
};

enum class AuthResult {
    kOk,
    kUnknownSender,
    kBadMac,
    kSkewedTimestamp,
    kMissingNonce,
    kReplayedNonce,
    kBadOtp,
};

const char* to_string(AuthResult r);

struct SenderSecrets {
    std::string secret;
    std::uint64_t otp_counter = 0;  // next expected one-time-password index
};

/// Tiered request verification: basic = MAC over the canonical request plus a
/// bounded timestamp skew; middle adds single-use nonces (per-sender LRU
/// window); high adds a counter-based one-time password. Every tier runs all
/// checks of the tiers below it.
class AuthState {
  public:
    explicit AuthState(std::map<std::string, SenderSecrets> senders,
                       std::string mac_algo = "SHA1", std::int64_t skew_seconds = 60,
                       std::size_t nonce_window = 128);

    AuthResult verify(AuthTier tier, const EnvelopeFields& env, std::string_view method,
                      std::string_view path, std::string_view body, std::int64_t now_unix);

    /// Canonical MAC input: method, path, sender, timestamp, nonce, otp and
    /// the SHA-256 body digest, newline-joined.
    static std::string canonical_string(std::string_view method, std::string_view path,
                                        std::string_view sender, std::string_view timestamp,
                                        std::string_view nonce, std::string_view otp,
                                        std::string_view body);
    static std::string compute_mac(std::string_view algo, std::string_view secret,
                                   std::string_view canonical);
    /// 16-hex-digit one-time password for a given counter position.
    static std::string compute_otp(std::string_view secret, std::uint64_t counter);

    std::uint64_t otp_counter(const std::string& sender) const;
    const std::string& mac_algo() const { return mac_algo_; }

  private:
    struct NonceWindow {
        std::list<std::string> order;
        std::set<std::string> seen;
    };

    std::map<std::string, SenderSecrets> senders_;
    std::map<std::string, NonceWindow> nonces_;
    std::string mac_algo_;
    std::int64_t skew_seconds_;
    std::size_t nonce_window_;
    mutable std::mutex mutex_;
};

struct GatewayConfig {
    std::string bind = "127.0.0.1";
    int port = 0;  // 0 picks a free port
    std::size_t dict_size = 64;
    std::string mac_algo = "SHA1";
    std::map<std::string, SenderSecrets> senders;
};

/// Reads a secrets file: {"senders": {"<id>": {"secret": "...", "otp_counter": 0}}}.
std::map<std::string, SenderSecrets> load_secrets_file(const std::string& path);

/// REST surface for the recommendation protocol, under /v1:
///   POST /v1/session                (middle) -> 201 {"session": id}
///   POST /v1/session/{id}/trapdoor  (middle) -> 200, binary wire payload
///   POST /v1/session/{id}/index     (basic)  -> 200, ?candidate= required
///   GET  /v1/session/{id}/result    (high)   -> 200 ranked ids, 425 if early
/// Sessions live in memory; scoring runs at most once per session.
class GatewayServer {
  public:
    explicit GatewayServer(GatewayConfig cfg);
    ~GatewayServer();
    GatewayServer(const GatewayServer&) = delete;
    GatewayServer& operator=(const GatewayServer&) = delete;

    /// Binds and serves on a background thread. Returns false if the bind
    /// fails. stop() joins the thread.
    bool start();
    void stop();
    int port() const;
    const GatewayConfig& config() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace pcbe
