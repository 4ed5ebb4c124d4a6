#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace gradcert {

// FNV-1a, 64-bit. Used for parameter digests, config hashes and artifact
// checksums; stability across runs matters more than collision resistance.
class Fnv1a {
public:
    void update(const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            state_ ^= static_cast<std::uint64_t>(p[i]);
            state_ *= 0x100000001b3ull;
        }
    }

    void update(const std::string& s) { update(s.data(), s.size()); }

    void update_u64(std::uint64_t v) { update(&v, sizeof v); }

    void update_f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        update_u64(bits);
    }

    void update_f64(const std::vector<double>& vs) {
        for (double v : vs) update_f64(v);
    }

    std::uint64_t value() const { return state_; }

    std::string hex() const {
        static const char* digits = "0123456789abcdef";
        std::string out(16, '0');
        std::uint64_t v = state_;
        for (int i = 15; i >= 0; --i) {
            out[static_cast<std::size_t>(i)] = digits[v & 0xf];
            v >>= 4;
        }
        return out;
    }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ull;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
    Fnv1a h;
    h.update(data, len);
    return h.value();
}

inline std::string fnv1a64_hex(const std::string& s) {
    Fnv1a h;
    h.update(s);
    return h.hex();
}

}  // namespace gradcert
