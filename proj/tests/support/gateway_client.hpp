#pragma once

// Signed-request helper shared by the gateway tests and the acceptance suite.

#include "pcbe/gateway.hpp"

#include <httplib.h>

// glibc's <resolv.h> (dragged in by httplib) leaks a function-like `_res`
// macro that mangles Eigen headers included later in the same TU.
#ifdef _res
#undef _res
#endif

#include <atomic>
#include <cstdint>
#include <ctime>
#include <string>

namespace gwtest {

/// Client-side signer for one sender identity. Tracks the nonce and OTP
/// counters; `headers` produces a fresh envelope for each request.
class Signer {
  public:
    /// `tag` discriminates nonce streams when several signers share one
    /// sender identity (e.g. load-generator workers).
    Signer(std::string sender, std::string secret, std::string mac_algo = "SHA1",
           std::string tag = {})
        : sender_(std::move(sender)), secret_(std::move(secret)), algo_(std::move(mac_algo)),
          tag_(std::move(tag)) {}

    struct Envelope {
        httplib::Headers headers;
        std::string nonce;
        std::string otp;
    };

    Envelope headers(pcbe::AuthTier tier, const std::string& method, const std::string& path,
                     const std::string& body) {
        Envelope env;
        const std::string timestamp = std::to_string(::time(nullptr));
        if (tier != pcbe::AuthTier::kBasic) {
            env.nonce = sender_ + tag_ + "-n" + std::to_string(++nonce_counter_);
        }
        if (tier == pcbe::AuthTier::kHigh) {
            env.otp = pcbe::AuthState::compute_otp(secret_, otp_counter_++);
        }
        const auto canonical = pcbe::AuthState::canonical_string(method, path, sender_, timestamp,
                                                                 env.nonce, env.otp, body);
        env.headers = {
            {"X-Auth-Sender", sender_},
            {"X-Auth-Timestamp", timestamp},
            {"X-Auth-Nonce", env.nonce},
            {"X-Auth-OTP", env.otp},
            {"X-Auth-MAC", pcbe::AuthState::compute_mac(algo_, secret_, canonical)},
        };
        return env;
    }

    const std::string& sender() const { return sender_; }
    std::uint64_t otp_counter() const { return otp_counter_; }
    void set_otp_counter(std::uint64_t c) { otp_counter_ = c; }

  private:
    std::string sender_;
    std::string secret_;
    std::string algo_;
    std::string tag_;
    std::atomic<std::uint64_t> nonce_counter_{0};
    std::uint64_t otp_counter_ = 0;
};

}  // namespace gwtest
