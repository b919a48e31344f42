#include "uts/core/hash.hpp"

#include <array>

namespace uts {

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::string Fnv1a64::hex() const { return to_hex(state_); }

}  // namespace uts
