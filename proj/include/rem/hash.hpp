#ifndef REM_HASH_HPP
#define REM_HASH_HPP

#include <cstdint>
#include <string>

namespace rem {

// FNV-1a 64-bit. Used for model-spec fingerprints and checkpoint checksums;
// stability across runs matters, cryptographic strength does not.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

std::string hex64(std::uint64_t v);

}  // namespace rem

#endif  // REM_HASH_HPP
