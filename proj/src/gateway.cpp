#include "pcbe/gateway.hpp"

#include "pcbe/crypto_util.hpp"
#include "pcbe/secure_match.hpp"

#define CPPHTTPLIB_LISTEN_BACKLOG 128
#include <httplib.h>
// glibc's <resolv.h> (dragged in by httplib) leaks a `_res` macro that would
// mangle any Eigen header included after this point.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include <atomic>
#include <charconv>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace pcbe {

using nlohmann::json;

const char* to_string(AuthResult r) {
    switch (r) {
        case AuthResult::kOk: return "ok";
        case AuthResult::kUnknownSender: return "unknown-sender";
        case AuthResult::kBadMac: return "bad-mac";
        case AuthResult::kSkewedTimestamp: return "skewed-timestamp";
        case AuthResult::kMissingNonce: return "missing-nonce";
        case AuthResult::kReplayedNonce: return "replayed-nonce";
        case AuthResult::kBadOtp: return "bad-otp";
    }
    return "unknown";
}

AuthState::AuthState(std::map<std::string, SenderSecrets> senders, std::string mac_algo,
                     std::int64_t skew_seconds, std::size_t nonce_window)
    : senders_(std::move(senders)),
      mac_algo_(std::move(mac_algo)),
      skew_seconds_(skew_seconds),
      nonce_window_(nonce_window) {}

std::string AuthState::canonical_string(std::string_view method, std::string_view path,
                                        std::string_view sender, std::string_view timestamp,
                                        std::string_view nonce, std::string_view otp,
                                        std::string_view body) {
    std::string s;
    s.reserve(method.size() + path.size() + sender.size() + timestamp.size() + nonce.size() +
              otp.size() + 70);
    s.append(method);
    s.push_back('\n');
    s.append(path);
    s.push_back('\n');
    s.append(sender);
    s.push_back('\n');
    s.append(timestamp);
    s.push_back('\n');
    s.append(nonce);
    s.push_back('\n');
    s.append(otp);
    s.push_back('\n');
    s.append(crypto::to_hex(crypto::sha256(body)));
    return s;
}

std::string AuthState::compute_mac(std::string_view algo, std::string_view secret,
                                   std::string_view canonical) {
    return crypto::to_hex(crypto::hmac(algo, secret, canonical));
}

std::string AuthState::compute_otp(std::string_view secret, std::uint64_t counter) {
    const std::string input = "otp:" + std::to_string(counter);
    return crypto::to_hex(crypto::hmac("SHA256", secret, input)).substr(0, 16);
}

namespace {

bool constant_time_equal(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    unsigned char acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc |= static_cast<unsigned char>(a[i]) ^ static_cast<unsigned char>(b[i]);
    }
    return acc == 0;
}

}  // namespace

AuthResult AuthState::verify(AuthTier tier, const EnvelopeFields& env, std::string_view method,
                             std::string_view path, std::string_view body,
                             std::int64_t now_unix) {
    std::lock_guard<std::mutex> lock(mutex_);

    const auto sender_it = senders_.find(env.sender);
    if (sender_it == senders_.end()) return AuthResult::kUnknownSender;
    auto& sender = sender_it->second;

    std::int64_t ts = 0;
    const auto [p, ec] =
        std::from_chars(env.timestamp.data(), env.timestamp.data() + env.timestamp.size(), ts);
    if (ec != std::errc() || p != env.timestamp.data() + env.timestamp.size()) {
        return AuthResult::kSkewedTimestamp;
    }
    if (ts < now_unix - skew_seconds_ || ts > now_unix + skew_seconds_) {
        return AuthResult::kSkewedTimestamp;
    }

    const std::string canonical =
        canonical_string(method, path, env.sender, env.timestamp, env.nonce, env.otp, body);
    const std::string expected_mac = compute_mac(mac_algo_, sender.secret, canonical);
    if (!constant_time_equal(expected_mac, env.mac)) return AuthResult::kBadMac;

    if (tier == AuthTier::kBasic) return AuthResult::kOk;

    if (env.nonce.empty()) return AuthResult::kMissingNonce;
    auto& window = nonces_[env.sender];
    if (window.seen.count(env.nonce)) return AuthResult::kReplayedNonce;
    window.seen.insert(env.nonce);
    window.order.push_back(env.nonce);
    while (window.order.size() > nonce_window_) {
        window.seen.erase(window.order.front());
        window.order.pop_front();
    }

    if (tier == AuthTier::kMiddle) return AuthResult::kOk;

    const std::string expected_otp = compute_otp(sender.secret, sender.otp_counter);
    if (!constant_time_equal(expected_otp, env.otp)) return AuthResult::kBadOtp;
    sender.otp_counter += 1;
    return AuthResult::kOk;
}

std::uint64_t AuthState::otp_counter(const std::string& sender) const {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = senders_.find(sender);
    if (it == senders_.end()) throw std::invalid_argument("unknown sender: " + sender);
    return it->second.otp_counter;
}

std::map<std::string, SenderSecrets> load_secrets_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open secrets file: " + path);
    json j;
    in >> j;
    std::map<std::string, SenderSecrets> senders;
    for (const auto& [id, entry] : j.at("senders").items()) {
        SenderSecrets s;
        s.secret = entry.at("secret").get<std::string>();
        s.otp_counter = entry.value("otp_counter", 0ull);
        senders.emplace(id, std::move(s));
    }
    return senders;
}

namespace {

struct GatewaySession {
    std::string id;
    std::string target;
    std::size_t k = 10;
    double mu = 0.0;
    double sigma = 1.0;
    std::optional<Trapdoor> trapdoor;
    std::vector<std::pair<std::string, EncIndex>> indices;
    std::set<std::string> candidate_ids;
    std::optional<std::vector<std::string>> results;
    std::mutex mutex;
};

EnvelopeFields envelope_from(const httplib::Request& req) {
    EnvelopeFields env;
    env.sender = req.get_header_value("X-Auth-Sender");
    env.timestamp = req.get_header_value("X-Auth-Timestamp");
    env.nonce = req.get_header_value("X-Auth-Nonce");
    env.otp = req.get_header_value("X-Auth-OTP");
    env.mac = req.get_header_value("X-Auth-MAC");
    return env;
}

void fail(httplib::Response& res, int status, const std::string& error) {
    json j;
    j["error"] = error;
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

int status_for(AuthResult r) {
    return r == AuthResult::kReplayedNonce ? 409 : 401;
}

}  // namespace

struct GatewayServer::Impl {
    GatewayConfig cfg;
    AuthState auth;
    httplib::Server server;
    std::thread thread;
    std::atomic<int> bound_port{0};

    std::mutex sessions_mutex;
    std::map<std::string, std::shared_ptr<GatewaySession>> sessions;
    int session_counter = 0;

    explicit Impl(GatewayConfig c)
        : cfg(std::move(c)), auth(cfg.senders, cfg.mac_algo) {
        server.new_task_queue = [] { return new httplib::ThreadPool(64); };
        server.set_tcp_nodelay(true);
        routes();
    }

    bool authorize(AuthTier tier, const httplib::Request& req, httplib::Response& res) {
        const auto env = envelope_from(req);
        const auto now = static_cast<std::int64_t>(::time(nullptr));
        const auto result = auth.verify(tier, env, req.method, req.path, req.body, now);
        if (result != AuthResult::kOk) {
            fail(res, status_for(result), to_string(result));
            return false;
        }
        return true;
    }

    std::shared_ptr<GatewaySession> find_session(const std::string& id) {
        std::lock_guard<std::mutex> lock(sessions_mutex);
        const auto it = sessions.find(id);
        return it == sessions.end() ? nullptr : it->second;
    }

    void routes() {
        server.Post("/v1/session", [this](const httplib::Request& req, httplib::Response& res) {
            if (!authorize(AuthTier::kMiddle, req, res)) return;
            const auto body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.contains("target") || !body["target"].is_string()) {
                return fail(res, 400, "body must carry a target node id");
            }
            auto session = std::make_shared<GatewaySession>();
            session->target = body["target"].get<std::string>();
            long long k = 10;
            try {
                k = body.value("k", 10ll);
                session->mu = body.value("mu", 0.0);
                session->sigma = body.value("sigma", 1.0);
            } catch (const json::exception&) {
                return fail(res, 400, "k/mu/sigma have the wrong types");
            }
            if (k < 1) return fail(res, 400, "k must be >= 1");
            if (session->sigma < 0) return fail(res, 400, "sigma must be >= 0");
            session->k = static_cast<std::size_t>(k);
            {
                std::lock_guard<std::mutex> lock(sessions_mutex);
                session->id = "s-" + std::to_string(++session_counter);
                sessions.emplace(session->id, session);
            }
            json j;
            j["session"] = session->id;
            res.status = 201;
            res.set_content(j.dump(), "application/json");
        });

        server.Post(R"(/v1/session/([^/]+)/trapdoor)",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        if (!authorize(AuthTier::kMiddle, req, res)) return;
                        auto session = find_session(req.matches[1]);
                        if (!session) return fail(res, 404, "unknown session");
                        std::vector<std::uint8_t> bytes(req.body.begin(), req.body.end());
                        Trapdoor t;
                        try {
                            t = parse_trapdoor(bytes);
                        } catch (const std::exception& e) {
                            return fail(res, 400, e.what());
                        }
                        if (static_cast<std::size_t>(t.a.size()) != cfg.dict_size + 2) {
                            return fail(res, 400, "trapdoor dimension does not match dictionary");
                        }
                        std::lock_guard<std::mutex> lock(session->mutex);
                        if (session->results) return fail(res, 409, "session already scored");
                        session->trapdoor = std::move(t);
                        res.set_content("{\"accepted\":true}", "application/json");
                    });

        server.Post(R"(/v1/session/([^/]+)/index)",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        if (!authorize(AuthTier::kBasic, req, res)) return;
                        auto session = find_session(req.matches[1]);
                        if (!session) return fail(res, 404, "unknown session");
                        if (!req.has_param("candidate")) {
                            return fail(res, 400, "candidate query parameter required");
                        }
                        const std::string candidate = req.get_param_value("candidate");
                        std::vector<std::uint8_t> bytes(req.body.begin(), req.body.end());
                        EncIndex idx;
                        try {
                            idx = parse_index(bytes);
                        } catch (const std::exception& e) {
                            return fail(res, 400, e.what());
                        }
                        if (static_cast<std::size_t>(idx.a.size()) != cfg.dict_size + 2) {
                            return fail(res, 400, "index dimension does not match dictionary");
                        }
                        std::lock_guard<std::mutex> lock(session->mutex);
                        if (session->results) return fail(res, 409, "session already scored");
                        // First submission per candidate wins; duplicates are dropped.
                        const bool fresh = session->candidate_ids.insert(candidate).second;
                        if (fresh) session->indices.emplace_back(candidate, std::move(idx));
                        json j;
                        j["accepted"] = fresh;
                        res.set_content(j.dump(), "application/json");
                    });

        server.Get(R"(/v1/session/([^/]+)/result)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       if (!authorize(AuthTier::kHigh, req, res)) return;
                       auto session = find_session(req.matches[1]);
                       if (!session) return fail(res, 404, "unknown session");
                       std::size_t k = session->k;
                       if (req.has_param("k")) {
                           try {
                               k = std::stoul(req.get_param_value("k"));
                           } catch (const std::exception&) {
                               return fail(res, 400, "invalid k");
                           }
                           if (k < 1) return fail(res, 400, "invalid k");
                       }
                       std::lock_guard<std::mutex> lock(session->mutex);
                       if (!session->trapdoor || session->indices.empty()) {
                           return fail(res, 425, "scoring not finished");
                       }
                       if (!session->results) {
                           session->results = top_k(*session->trapdoor, session->indices,
                                                    session->indices.size());
                       }
                       const auto& all = *session->results;
                       json j = json::array();
                       for (std::size_t i = 0; i < all.size() && i < k; ++i) j.push_back(all[i]);
                       res.set_content(j.dump(), "application/json");
                   });
    }
};

GatewayServer::GatewayServer(GatewayConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

GatewayServer::~GatewayServer() { stop(); }

bool GatewayServer::start() {
    int port = impl_->cfg.port;
    if (port == 0) {
        port = impl_->server.bind_to_any_port(impl_->cfg.bind);
        if (port <= 0) return false;
    } else if (!impl_->server.bind_to_port(impl_->cfg.bind, port)) {
        return false;
    }
    impl_->bound_port = port;
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return true;
}

void GatewayServer::stop() {
    if (impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
    }
}

int GatewayServer::port() const { return impl_->bound_port; }

const GatewayConfig& GatewayServer::config() const { return impl_->cfg; }

}  // namespace pcbe
