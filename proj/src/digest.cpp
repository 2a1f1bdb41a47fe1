#include "blend/digest.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include "blend/errors.hpp"

namespace blend {

Sha256 sha256(std::span<const std::byte> bytes) {
    Sha256 out{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
        throw BlendError("SHA-256 computation failed");
    }
    return out;
}

Sha256 hmac_sha256(std::string_view key, std::string_view message) {
    Sha256 out{};
    unsigned int len = 0;
    const auto* result = HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()),
                              reinterpret_cast<const unsigned char*>(message.data()), message.size(), out.data(), &len);
    if (result == nullptr || len != out.size()) {
        throw BlendError("HMAC-SHA256 computation failed");
    }
    return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0xF]);
    }
    return out;
}

}  // namespace blend
