#include "khs/sim_memory.hpp"

#include <algorithm>
#include <utility>

namespace khs {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::AddressSpaceExhausted: return "AddressSpaceExhausted";
    case Errc::DoubleFree: return "DoubleFree";
    case Errc::WildAccess: return "WildAccess";
    case Errc::MisalignedAddress: return "MisalignedAddress";
    case Errc::MalformedToken: return "MalformedToken";
    case Errc::TableFull: return "TableFull";
    case Errc::InvalidHandle: return "InvalidHandle";
    case Errc::TokenBufferOverflow: return "TokenBufferOverflow";
    case Errc::UnknownProcess: return "UnknownProcess";
    case Errc::UnknownDriver: return "UnknownDriver";
    case Errc::SecretNotFound: return "SecretNotFound";
    case Errc::DonorTooLarge: return "DonorTooLarge";
    case Errc::AlreadyStarted: return "AlreadyStarted";
    case Errc::NotStarted: return "NotStarted";
    case Errc::DuplicateDriver: return "DuplicateDriver";
    case Errc::RuleConflict: return "RuleConflict";
    case Errc::SystemHalted: return "SystemHalted";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationError: return "ValidationError";
  }
  return "Unknown";
}

const char* to_string(AccessKind kind) noexcept {
  return kind == AccessKind::Read ? "Read" : "Write";
}

const char* to_string(AccessDecision decision) noexcept {
  return decision == AccessDecision::Allow ? "Allow" : "RedirectFake";
}

namespace {

std::uint64_t round_up(std::uint64_t size) {
  return (size + kAllocAlignment - 1) & ~(kAllocAlignment - 1);
}

template <typename T>
T load_le(const Bytes& b) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

template <typename T>
Bytes store_le(T v) {
  Bytes b(sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  return b;
}

}  // namespace

SimMemory::SimMemory(Address base, std::uint64_t capacity) : base_(base), capacity_(capacity) {}

Region SimMemory::alloc(std::uint64_t size, std::string tag) {
  if (size == 0) throw SimError(Errc::AddressSpaceExhausted, "zero-sized allocation");
  const std::uint64_t rounded = round_up(size);
  if (rounded < size) throw SimError(Errc::AddressSpaceExhausted, "size overflow");

  std::optional<std::uint64_t> offset;
  for (auto it = free_list_.begin(); it != free_list_.end(); ++it) {
    if (it->second >= rounded) {
      offset = it->first;
      const std::uint64_t rest = it->second - rounded;
      free_list_.erase(it);
      if (rest > 0) free_list_.emplace(*offset + rounded, rest);
      break;
    }
  }
  if (!offset) {
    if (rounded > capacity_ - bump_) {
      throw SimError(Errc::AddressSpaceExhausted,
                     "cannot fit " + std::to_string(size) + " bytes");
    }
    offset = bump_;
    bump_ += rounded;
  }

  Region region{base_ + *offset, size, std::move(tag)};
  live_.emplace(region.base.value, Block{region, Bytes(size, 0)});
  return region;
}

void SimMemory::free(const Region& region) {
  auto it = live_.find(region.base.value);
  if (it == live_.end() || it->second.region.length != region.length) {
    throw SimError(Errc::DoubleFree, "region is not live");
  }
  live_.erase(it);
  const std::uint64_t offset = region.base - base_;
  std::uint64_t start = offset;
  std::uint64_t size = round_up(region.length);

  // Coalesce with neighbours so reuse stays first-fit by address.
  auto next = free_list_.find(start + size);
  if (next != free_list_.end()) {
    size += next->second;
    free_list_.erase(next);
  }
  auto prev = free_list_.lower_bound(start);
  if (prev != free_list_.begin()) {
    --prev;
    if (prev->first + prev->second == start) {
      start = prev->first;
      size += prev->second;
      free_list_.erase(prev);
    }
  }
  if (start + size == bump_) {
    bump_ = start;
  } else {
    free_list_.emplace(start, size);
  }
}

SimMemory::Block& SimMemory::block_for(Address addr, std::uint64_t len) {
  auto it = live_.upper_bound(addr.value);
  if (it != live_.begin()) {
    --it;
    if (len > 0 && it->second.region.contains(addr, len)) return it->second;
  }
  throw SimError(Errc::WildAccess, "access outside any live region");
}

AccessDecision SimMemory::decide(const Agent& agent, Address addr, std::uint64_t len,
                                 AccessKind kind) {
  return policy_ ? policy_(agent, addr, len, kind) : AccessDecision::Allow;
}

void SimMemory::record(const Agent& agent, Address addr, std::uint64_t len, AccessKind kind,
                       AccessDecision decision) {
  if (decision == AccessDecision::RedirectFake) ++blocked_;
  log_.push_back(AccessLogEntry{agent, addr, len, kind, decision, next_sequence_++,
                                scopes_.empty() ? std::string{} : scopes_.back()});
}

Bytes SimMemory::read_bytes(const Agent& agent, Address addr, std::uint64_t len) {
  Block& block = block_for(addr, len);
  const AccessDecision decision = decide(agent, addr, len, AccessKind::Read);
  record(agent, addr, len, AccessKind::Read, decision);
  if (decision == AccessDecision::RedirectFake) return Bytes(len, 0);
  const auto first = block.bytes.begin() + static_cast<std::ptrdiff_t>(addr - block.region.base);
  return Bytes(first, first + static_cast<std::ptrdiff_t>(len));
}

void SimMemory::write_bytes(const Agent& agent, Address addr, std::span<const std::uint8_t> data) {
  Block& block = block_for(addr, data.size());
  const AccessDecision decision = decide(agent, addr, data.size(), AccessKind::Write);
  record(agent, addr, data.size(), AccessKind::Write, decision);
  if (decision == AccessDecision::RedirectFake) {
    absorbed_ += data.size();
    return;
  }
  std::copy(data.begin(), data.end(),
            block.bytes.begin() + static_cast<std::ptrdiff_t>(addr - block.region.base));
}

std::uint64_t SimMemory::read_u64(const Agent& agent, Address addr) {
  return load_le<std::uint64_t>(read_bytes(agent, addr, 8));
}
std::uint32_t SimMemory::read_u32(const Agent& agent, Address addr) {
  return load_le<std::uint32_t>(read_bytes(agent, addr, 4));
}
std::uint16_t SimMemory::read_u16(const Agent& agent, Address addr) {
  return load_le<std::uint16_t>(read_bytes(agent, addr, 2));
}
void SimMemory::write_u64(const Agent& agent, Address addr, std::uint64_t value) {
  write_bytes(agent, addr, store_le(value));
}
void SimMemory::write_u32(const Agent& agent, Address addr, std::uint32_t value) {
  write_bytes(agent, addr, store_le(value));
}
void SimMemory::write_u16(const Agent& agent, Address addr, std::uint16_t value) {
  write_bytes(agent, addr, store_le(value));
}

void SimMemory::install_policy(AccessPolicy policy) { policy_ = std::move(policy); }

Bytes SimMemory::inspect(Address addr, std::uint64_t len) const {
  auto it = live_.upper_bound(addr.value);
  if (it != live_.begin()) {
    --it;
    const Block& block = it->second;
    if (len > 0 && block.region.contains(addr, len)) {
      const auto first =
          block.bytes.begin() + static_cast<std::ptrdiff_t>(addr - block.region.base);
      return Bytes(first, first + static_cast<std::ptrdiff_t>(len));
    }
  }
  throw SimError(Errc::WildAccess, "inspect outside any live region");
}

bool SimMemory::is_live(const Region& region) const {
  auto it = live_.find(region.base.value);
  return it != live_.end() && it->second.region.length == region.length;
}

std::optional<Region> SimMemory::region_containing(Address addr) const {
  auto it = live_.upper_bound(addr.value);
  if (it == live_.begin()) return std::nullopt;
  --it;
  if (!it->second.region.contains(addr, 1)) return std::nullopt;
  return it->second.region;
}

std::vector<Region> SimMemory::live_regions(const std::string& tag) const {
  std::vector<Region> out;
  for (const auto& [base, block] : live_) {
    if (block.region.tag == tag) out.push_back(block.region);
  }
  return out;
}

std::vector<Region> SimMemory::live_regions() const {
  std::vector<Region> out;
  out.reserve(live_.size());
  for (const auto& [base, block] : live_) out.push_back(block.region);
  return out;
}

SimMemory::Scope::Scope(SimMemory& mem, std::string name) : mem_(mem) {
  mem_.scopes_.push_back(std::move(name));
}

SimMemory::Scope::~Scope() { mem_.scopes_.pop_back(); }

}  // namespace khs
