#pragma once

// Reference computations used as test oracles. Written from the layout
// definitions with plain arithmetic; none of them calls into the library's
// codecs.

#include <cstdint>
#include <string>
#include <vector>

namespace oracle {

// Object-pointer compression: keep the low 48 bits, drop 4 alignment bits.
inline std::uint64_t encode_pointer(std::uint64_t addr) { return (addr % (1ULL << 48)) / 16; }
inline std::uint64_t decode_pointer(std::uint64_t bits) { return 0xFFFF000000000000ULL + bits * 16; }

// Handle entry: pointer bits in the low 44 bits, access in the high 20.
inline std::uint64_t pack_entry(std::uint64_t pointer_bits, std::uint64_t access_bits) {
  return pointer_bits + access_bits * (1ULL << 44);
}
inline std::uint64_t entry_pointer_bits(std::uint64_t raw) { return raw % (1ULL << 44); }
inline std::uint64_t entry_access_bits(std::uint64_t raw) { return raw / (1ULL << 44); }

// SID body: revision, count, 6-byte authority, then 4 bytes per subauthority.
inline std::uint64_t sid_size(std::uint64_t subauthorities) { return 1 + 1 + 6 + 4 * subauthorities; }

// Groups that fit in the 512-byte token buffer when every group uses an
// 8-byte record plus a SID with `subauthorities` subauthorities.
inline std::uint64_t token_fit(std::uint64_t subauthorities) { return 512 / (8 + sid_size(subauthorities)); }

// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes,
                             std::uint64_t h = 14695981039346656037ULL) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

inline void append_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

struct Group {
  std::uint64_t authority;
  std::vector<std::uint32_t> subs;
  std::uint32_t attributes;
};

// "S-1-5-32-544" split by hand.
inline Group group(const std::string& text, std::uint32_t attributes) {
  Group g{0, {}, attributes};
  std::vector<std::uint64_t> parts;
  std::uint64_t cur = 0;
  for (std::size_t i = 4; i <= text.size(); ++i) {  // skip "S-1-"
    if (i == text.size() || text[i] == '-') {
      parts.push_back(cur);
      cur = 0;
    } else {
      cur = cur * 10 + static_cast<std::uint64_t>(text[i] - '0');
    }
  }
  g.authority = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) g.subs.push_back(static_cast<std::uint32_t>(parts[i]));
  return g;
}

inline std::vector<std::uint8_t> sid_bytes(const Group& g) {
  std::vector<std::uint8_t> out{1, static_cast<std::uint8_t>(g.subs.size())};
  for (int i = 5; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((g.authority >> (8 * i)) & 0xFF));
  for (auto s : g.subs) append_le32(out, s);
  return out;
}

// Hash input: count, then per group its attributes and SID body.
inline std::uint64_t sid_hash(const std::vector<Group>& groups) {
  std::vector<std::uint8_t> stream;
  append_le32(stream, static_cast<std::uint32_t>(groups.size()));
  for (const auto& g : groups) {
    append_le32(stream, g.attributes);
    const auto body = sid_bytes(g);
    stream.insert(stream.end(), body.begin(), body.end());
  }
  return fnv1a64(stream);
}

// Enclave switches for a sequence of accessing enclave ids.
inline std::uint64_t switches(const std::vector<int>& sequence) {
  std::uint64_t n = 0;
  for (std::size_t i = 1; i < sequence.size(); ++i) n += sequence[i] != sequence[i - 1];
  return n;
}

}  // namespace oracle
