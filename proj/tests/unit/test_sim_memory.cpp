#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "khs/sim_memory.hpp"

using namespace khs;

namespace {

const Agent kDriver{AgentKind::Driver, "d", 1};

AccessPolicy deny_drivers() {
  return [](const Agent& a, Address, std::uint64_t, AccessKind) {
    return a.is_kernel() ? AccessDecision::Allow : AccessDecision::RedirectFake;
  };
}

}  // namespace

TEST(SimMemory, AllocIsAlignedAndZeroFilled) {
  SimMemory mem;
  const Region r = mem.alloc(32, "FCB");
  EXPECT_EQ(r.base.value & 0xF, 0u);
  EXPECT_EQ(r.length, 32u);
  EXPECT_EQ(r.tag, "FCB");
  EXPECT_EQ(mem.read_bytes(Agent::kernel(), r.base, r.length), Bytes(32, 0));
}

TEST(SimMemory, FirstAllocationStartsAtBase) {
  SimMemory mem;
  EXPECT_EQ(mem.alloc(1, "x").base, kDefaultSpaceBase);
}

TEST(SimMemory, SmallAllocationsAreDisjoint) {
  SimMemory mem;
  const Region a = mem.alloc(1, "x");
  const Region b = mem.alloc(1, "y");
  EXPECT_TRUE(a.end() <= b.base || b.end() <= a.base);
}

TEST(SimMemory, RandomAllocFreeKeepsLiveRegionsDisjointAndAligned) {
  SimMemory mem;
  std::mt19937_64 rng(7);
  std::vector<Region> live;
  for (int step = 0; step < 2000; ++step) {
    if (!live.empty() && rng() % 3 == 0) {
      const std::size_t i = rng() % live.size();
      mem.free(live[i]);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      live.push_back(mem.alloc(1 + rng() % 200, "t"));
    }
  }
  auto sorted = live;
  std::sort(sorted.begin(), sorted.end(), [](const Region& a, const Region& b) { return a.base < b.base; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    EXPECT_EQ(sorted[i].base.value % kAllocAlignment, 0u);
    if (i > 0) {
      EXPECT_LE(sorted[i - 1].end(), sorted[i].base);
    }
    EXPECT_TRUE(mem.is_live(sorted[i]));
  }
  EXPECT_EQ(mem.live_regions().size(), live.size());
}

TEST(SimMemory, ReusedRegionIsZeroed) {
  SimMemory mem;
  const Region r = mem.alloc(16, "t");
  mem.write_bytes(Agent::kernel(), r.base, Bytes(16, 0xAB));
  mem.free(r);
  const Region again = mem.alloc(16, "t");
  EXPECT_EQ(mem.read_bytes(Agent::kernel(), again.base, 16), Bytes(16, 0));
}

TEST(SimMemory, FreeTwiceIsDoubleFree) {
  SimMemory mem;
  const Region r = mem.alloc(8, "t");
  mem.free(r);
  try {
    mem.free(r);
    FAIL() << "expected DoubleFree";
  } catch (const SimError& e) {
    EXPECT_EQ(e.code(), Errc::DoubleFree);
  }
}

TEST(SimMemory, ExhaustedSpaceThrows) {
  SimMemory mem(kDefaultSpaceBase, 64);
  mem.alloc(48, "t");
  try {
    mem.alloc(32, "t");
    FAIL() << "expected AddressSpaceExhausted";
  } catch (const SimError& e) {
    EXPECT_EQ(e.code(), Errc::AddressSpaceExhausted);
  }
}

TEST(SimMemory, WriteReadRoundtrip) {
  SimMemory mem;
  const Region r = mem.alloc(8, "t");
  mem.write_bytes(Agent::kernel(), r.base, Bytes{1, 2, 3});
  EXPECT_EQ(mem.read_bytes(Agent::kernel(), r.base, 3), (Bytes{1, 2, 3}));
}

TEST(SimMemory, IntegerHelpersAreLittleEndian) {
  SimMemory mem;
  const Region r = mem.alloc(16, "t");
  mem.write_u64(Agent::kernel(), r.base, 0x0102030405060708ULL);
  EXPECT_EQ(mem.inspect(r.base, 8), (Bytes{8, 7, 6, 5, 4, 3, 2, 1}));
  mem.write_u32(Agent::kernel(), r.base + 8, 0xA0B0C0D0);
  EXPECT_EQ(mem.read_u16(Agent::kernel(), r.base + 8), 0xC0D0);
  EXPECT_EQ(mem.read_u32(Agent::kernel(), r.base + 8), 0xA0B0C0D0u);
}

TEST(SimMemory, WildAccessOutsideLiveRegions) {
  SimMemory mem;
  const Region r = mem.alloc(16, "t");
  EXPECT_THROW(mem.read_bytes(Agent::kernel(), r.base + 0x1000, 1), SimError);
  EXPECT_THROW(mem.read_bytes(Agent::kernel(), r.base + 8, 16), SimError);  // runs off the end
  mem.free(r);
  try {
    mem.read_bytes(Agent::kernel(), r.base, 1);
    FAIL() << "expected WildAccess";
  } catch (const SimError& e) {
    EXPECT_EQ(e.code(), Errc::WildAccess);
  }
}

TEST(SimMemory, DeniedReadReturnsZeros) {
  SimMemory mem;
  const Region r = mem.alloc(8, "t");
  mem.write_bytes(Agent::kernel(), r.base, Bytes{9, 9, 9, 9});
  mem.install_policy(deny_drivers());
  EXPECT_EQ(mem.read_bytes(kDriver, r.base, 4), Bytes(4, 0));
  EXPECT_EQ(mem.read_bytes(Agent::kernel(), r.base, 4), Bytes(4, 9));
}

TEST(SimMemory, BlockedWriteIsAbsorbedAndLogged) {
  SimMemory mem;
  const Region r = mem.alloc(8, "t");
  mem.write_bytes(Agent::kernel(), r.base, Bytes{0x11});
  mem.install_policy(deny_drivers());
  mem.write_bytes(kDriver, r.base, Bytes{0xFF});
  EXPECT_EQ(mem.read_bytes(Agent::kernel(), r.base, 1), Bytes{0x11});
  const auto& entry = mem.log()[mem.log().size() - 2];
  EXPECT_EQ(entry.agent, kDriver);
  EXPECT_EQ(entry.kind, AccessKind::Write);
  EXPECT_EQ(entry.decision, AccessDecision::RedirectFake);
  EXPECT_EQ(mem.blocked_count(), 1u);
  EXPECT_EQ(mem.absorbed_write_bytes(), 1u);
}

TEST(SimMemory, PolicyCanBeReplaced) {
  SimMemory mem;
  const Region r = mem.alloc(8, "t");
  mem.write_bytes(Agent::kernel(), r.base, Bytes{5});
  EXPECT_EQ(mem.read_bytes(kDriver, r.base, 1), Bytes{5});
  mem.install_policy(deny_drivers());
  EXPECT_EQ(mem.read_bytes(kDriver, r.base, 1), Bytes{0});
  mem.install_policy([](const Agent&, Address, std::uint64_t, AccessKind) { return AccessDecision::Allow; });
  EXPECT_EQ(mem.read_bytes(kDriver, r.base, 1), Bytes{5});
  mem.install_policy({});
  EXPECT_EQ(mem.read_bytes(kDriver, r.base, 1), Bytes{5});
}

TEST(SimMemory, LogRecordsEveryMediatedAccessInOrder) {
  SimMemory mem;
  const Region r = mem.alloc(8, "t");
  const auto before = mem.log().size();
  {
    SimMemory::Scope scope(mem, "outer");
    mem.read_bytes(kDriver, r.base, 2);
    mem.write_bytes(Agent::kernel(), r.base + 2, Bytes{1});
  }
  mem.inspect(r.base, 8);
  ASSERT_EQ(mem.log().size(), before + 2);
  const auto& a = mem.log()[before];
  const auto& b = mem.log()[before + 1];
  EXPECT_EQ(a.kind, AccessKind::Read);
  EXPECT_EQ(a.length, 2u);
  EXPECT_EQ(a.scope, "outer");
  EXPECT_EQ(b.addr, r.base + 2);
  EXPECT_LT(a.sequence, b.sequence);
}

TEST(SimMemory, RegionLookupByAddressAndTag) {
  SimMemory mem;
  const Region a = mem.alloc(24, "A");
  const Region b = mem.alloc(24, "B");
  EXPECT_EQ(mem.region_containing(a.base + 23), a);
  EXPECT_EQ(mem.region_containing(b.base), b);
  EXPECT_FALSE(mem.region_containing(b.base + 0x10000).has_value());
  EXPECT_EQ(mem.live_regions("B"), std::vector<Region>{b});
}

TEST(SimMemory, IdenticalOperationsGiveIdenticalLayouts) {
  auto script = [] {
    SimMemory mem;
    std::vector<std::uint64_t> bases;
    std::mt19937_64 rng(99);
    std::vector<Region> live;
    for (int i = 0; i < 300; ++i) {
      if (!live.empty() && rng() % 4 == 0) {
        mem.free(live.back());
        live.pop_back();
      } else {
        live.push_back(mem.alloc(1 + rng() % 100, "t"));
        bases.push_back(live.back().base.value);
      }
    }
    return bases;
  };
  EXPECT_EQ(script(), script());
}
