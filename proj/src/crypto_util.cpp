#include "pcbe/crypto_util.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <memory>
#include <stdexcept>

namespace pcbe::crypto {

Digest256 sha256(std::span<const std::uint8_t> data) {
    Digest256 out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != out.size()) {
        throw std::runtime_error("sha256 failed");
    }
    return out;
}

Digest256 sha256(std::string_view data) {
    return sha256(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

std::vector<std::uint8_t> hmac(std::string_view algo, std::string_view key,
                               std::string_view data) {
    using MacPtr = std::unique_ptr<EVP_MAC, decltype(&EVP_MAC_free)>;
    using CtxPtr = std::unique_ptr<EVP_MAC_CTX, decltype(&EVP_MAC_CTX_free)>;

    MacPtr mac(EVP_MAC_fetch(nullptr, "HMAC", nullptr), EVP_MAC_free);
    if (!mac) throw std::runtime_error("HMAC unavailable");
    CtxPtr ctx(EVP_MAC_CTX_new(mac.get()), EVP_MAC_CTX_free);
    if (!ctx) throw std::runtime_error("HMAC ctx alloc failed");

    std::string algo_s(algo);
    OSSL_PARAM params[] = {
        OSSL_PARAM_construct_utf8_string("digest", algo_s.data(), 0),
        OSSL_PARAM_construct_end(),
    };
    if (EVP_MAC_init(ctx.get(), reinterpret_cast<const unsigned char*>(key.data()),
                     key.size(), params) != 1) {
        throw std::runtime_error("HMAC init failed");
    }
    if (EVP_MAC_update(ctx.get(), reinterpret_cast<const unsigned char*>(data.data()),
                       data.size()) != 1) {
        throw std::runtime_error("HMAC update failed");
    }
    std::size_t out_len = 0;
    std::vector<std::uint8_t> out(EVP_MAX_MD_SIZE);
    if (EVP_MAC_final(ctx.get(), out.data(), &out_len, out.size()) != 1) {
        throw std::runtime_error("HMAC final failed");
    }
    out.resize(out_len);
    return out;
}

std::string to_hex(std::span<const std::uint8_t> data) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

}  // namespace pcbe::crypto
