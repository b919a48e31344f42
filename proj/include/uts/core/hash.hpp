#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace uts {

/// Incremental FNV-1a 64-bit. Non-cryptographic; used for dataset and
/// config fingerprints where only change detection matters.
class Fnv1a64 {
public:
    Fnv1a64& update(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }

    template <typename T>
    Fnv1a64& update_value(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        return update(&v, sizeof(T));
    }

    Fnv1a64& update_string(const std::string& s) { return update(s.data(), s.size()); }

    std::uint64_t digest() const { return state_; }
    std::string hex() const;

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t v);

}  // namespace uts
