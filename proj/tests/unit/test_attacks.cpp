#include <gtest/gtest.h>

#include "oracles.hpp"
#include "world.hpp"

using namespace khs;
using testworld::bytes;
using testworld::contains;
using testworld::World;

namespace {

// The oracle for file content is the store itself.
Bytes store_content(Kernel& k, const std::string& path) { return k.file(path)->content; }

Bytes repeat(const Bytes& b, int n) {
  Bytes out;
  for (int i = 0; i < n; ++i) out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

TEST(FileObjectHijack, ReadsSecretWithoutProtection) {
  World w;
  const auto out = attack_file_object_hijack(w.kernel(), w.attacker_ctx, w.decoy_handle, "secret.txt");
  EXPECT_TRUE(out.succeeded);
  EXPECT_EQ(out.observed, store_content(w.kernel(), "secret.txt"));
  EXPECT_FALSE(out.bug_check);
  EXPECT_EQ(out.bytes_patched, 24u);  // three u64 fields
}

TEST(FileObjectHijack, WriteProtectedFileObjectYieldsDecoy) {
  World w(true);
  const auto out = attack_file_object_hijack(w.kernel(), w.attacker_ctx, w.decoy_handle, "secret.txt");
  EXPECT_FALSE(out.succeeded);
  EXPECT_EQ(out.observed, store_content(w.kernel(), "decoy.txt"));
  EXPECT_FALSE(contains(out.observed, testworld::kSecret));
}

TEST(FileObjectHijack, SecretMustBeOpen) {
  World w(false, false, false);
  const auto h = w.kernel().zw_create_file(w.attacker_ctx, "decoy.txt", access::kGenericReadWrite, 0).handle;
  try {
    attack_file_object_hijack(w.kernel(), w.attacker_ctx, h, "secret.txt");
    FAIL() << "expected SecretNotFound";
  } catch (const SimError& e) {
    EXPECT_EQ(e.code(), Errc::SecretNotFound);
  }
}

TEST(HandleTableHijack, PatchesOnlyThePointerSpan) {
  World w;
  auto& mem = w.memory();
  const Address entry = w.kernel().handle_table().entry_address(w.decoy_handle);
  const Bytes before = mem.inspect(entry, 8);
  const auto log_start = mem.log().size();

  const auto out = attack_handle_table_hijack(w.kernel(), w.attacker_ctx, w.decoy_handle, "secret.txt");
  EXPECT_TRUE(out.succeeded);
  EXPECT_EQ(out.observed, store_content(w.kernel(), "secret.txt"));
  EXPECT_EQ(out.bytes_patched, layout::kObjectPointerSpan);

  // Every attacker write falls within the low six bytes of its own entry.
  for (std::size_t i = log_start; i < mem.log().size(); ++i) {
    const auto& e = mem.log()[i];
    if (e.agent != w.attacker || e.kind != AccessKind::Write) continue;
    EXPECT_GE(e.addr, entry);
    EXPECT_LE(e.addr + e.length, entry + layout::kObjectPointerSpan);
  }

  const Bytes after = mem.inspect(entry, 8);
  std::uint64_t raw_before = 0;
  std::uint64_t raw_after = 0;
  for (int i = 7; i >= 0; --i) {
    raw_before = raw_before * 256 + before[static_cast<std::size_t>(i)];
    raw_after = raw_after * 256 + after[static_cast<std::size_t>(i)];
  }
  EXPECT_EQ(oracle::entry_access_bits(raw_after), oracle::entry_access_bits(raw_before));
  EXPECT_EQ(oracle::decode_pointer(oracle::entry_pointer_bits(raw_after)),
            w.kernel().open_instance(w.secret_handle)->object_header.base.value);
}

TEST(HandleTableHijack, ProtectedEntryStaysPutAndDecoyIsRead) {
  World w(true);
  auto& mem = w.memory();
  const Address entry = w.kernel().handle_table().entry_address(w.decoy_handle);
  const Bytes before = mem.inspect(entry, 8);
  const auto out = attack_handle_table_hijack(w.kernel(), w.attacker_ctx, w.decoy_handle, "secret.txt");
  EXPECT_FALSE(out.succeeded);
  EXPECT_EQ(mem.inspect(entry, 8), before);
  EXPECT_EQ(out.observed, store_content(w.kernel(), "decoy.txt"));
  EXPECT_FALSE(contains(out.observed, testworld::kSecret));
}

TEST(NtfsHijack, SkippingOwnerPatchBugChecksOnFirstAccess) {
  World w;
  const auto out =
      attack_ntfs_hijack(w.kernel(), w.attacker_ctx, w.decoy_handle, "secret.txt", {.do_step2 = false, .accesses = 1});
  EXPECT_FALSE(out.succeeded);
  EXPECT_EQ(out.bug_check, 0xE3u);
  EXPECT_TRUE(out.observed.empty());
}

TEST(NtfsHijack, FullStepsEveryAccessSucceed) {
  World w;
  const auto out = attack_ntfs_hijack(w.kernel(), w.attacker_ctx, w.decoy_handle, "secret.txt",
                                      {.do_step2 = true, .accesses = 3, .recopy_each_access = true});
  EXPECT_TRUE(out.succeeded);
  EXPECT_EQ(out.observed, repeat(store_content(w.kernel(), "secret.txt"), 3));
  EXPECT_FALSE(out.bug_check);
  EXPECT_FALSE(w.kernel().halted());
}

TEST(NtfsHijack, SingleCopyBugChecksOnSecondAccess) {
  World w;
  const auto out = attack_ntfs_hijack(w.kernel(), w.attacker_ctx, w.decoy_handle, "secret.txt",
                                      {.do_step2 = true, .accesses = 2, .recopy_each_access = false});
  EXPECT_FALSE(out.succeeded);
  EXPECT_EQ(out.bug_check, 0xE3u);
  EXPECT_EQ(out.observed, store_content(w.kernel(), "secret.txt"));  // first access got through
}

TEST(NtfsHijack, ProtectedFcbRedirectsCopy) {
  World w(true);
  const Address mine = w.kernel().open_instance(w.decoy_handle)->fcb_block.base;
  const Bytes before = w.memory().inspect(mine, 48);
  const auto out = attack_ntfs_hijack(w.kernel(), w.attacker_ctx, w.decoy_handle, "secret.txt",
                                      {.do_step2 = true, .accesses = 3, .recopy_each_access = true});
  EXPECT_FALSE(out.succeeded);
  EXPECT_FALSE(out.bug_check);
  EXPECT_EQ(out.observed, repeat(store_content(w.kernel(), "decoy.txt"), 3));
  EXPECT_FALSE(contains(out.observed, testworld::kSecret));
  // The kernel's own bookkeeping (op stamp) moved; the attacker's copy did not land.
  EXPECT_EQ(w.memory().read_u64(Agent::kernel(), mine + layout::kFcbFileId),
            w.kernel().file("decoy.txt")->file_id);
  EXPECT_EQ(Bytes(before.begin(), before.begin() + 16), w.memory().inspect(mine, 16));
}

TEST(TokenHijack, EvadesHashAndSwapDetection) {
  World w(false, false, false);
  EXPECT_FALSE(w.kernel().privileged_op(w.attacker_ctx));
  const auto out = attack_token_hijack(w.kernel(), w.attacker, w.malware.pid, w.system.pid);
  EXPECT_TRUE(out.succeeded);
  EXPECT_TRUE(*out.privileged);
  EXPECT_TRUE(*out.hash_valid);
  EXPECT_TRUE(out.swap_flagged.empty());
  EXPECT_TRUE(w.kernel().privileged_op(w.attacker_ctx));
  EXPECT_TRUE(verify_sid_hash(w.memory(), Agent::kernel(), w.malware.token.base));
  EXPECT_TRUE(w.kernel().detect_token_swap().empty());
  // The target keeps its own token object.
  EXPECT_EQ(w.memory().read_u64(Agent::kernel(), w.malware.eprocess.base + layout::kEprocessTokenRef),
            w.malware.token.base.value);
}

TEST(TokenHijack, SelfCopyChangesNothing) {
  World w(false, false, false);
  const Bytes before = w.memory().inspect(w.malware.token.base, layout::kTokenSize);
  attack_token_hijack(w.kernel(), w.attacker, w.malware.pid, w.malware.pid);
  EXPECT_EQ(w.memory().inspect(w.malware.token.base, layout::kTokenSize), before);
}

TEST(TokenHijack, DataOnlyEnclaveKeepsTokenIntact) {
  for (bool preloaded : {false, true}) {
    World w(true, preloaded, false);
    const Bytes before = w.memory().inspect(w.malware.token.base, layout::kTokenSize);
    const auto out = attack_token_hijack(w.kernel(), w.attacker, w.malware.pid, w.system.pid);
    EXPECT_FALSE(out.succeeded) << preloaded;
    EXPECT_FALSE(*out.privileged) << preloaded;
    EXPECT_EQ(w.memory().inspect(w.malware.token.base, layout::kTokenSize), before) << preloaded;
  }
}

TEST(GroupPatchLegacy, HashGateDenies) {
  World w(false, false, false);
  const auto out = attack_group_patch_legacy(w.kernel(), w.attacker, w.malware.pid);
  EXPECT_FALSE(out.succeeded);
  EXPECT_FALSE(*out.privileged);
  EXPECT_FALSE(*out.hash_valid);
  const Token t = read_token(w.memory(), Agent::kernel(), w.malware.token.base);
  EXPECT_NE(compute_sid_hash(t.user_and_groups), t.sid_hash);
  EXPECT_EQ(t.user_and_groups.back().sid, Sid::parse(well_known::kAdministrators));
}

TEST(GroupPatchLegacy, ProtectedTokenUnchanged) {
  World w(true, false, false);
  const Bytes before = w.memory().inspect(w.malware.token.base, layout::kTokenSize);
  attack_group_patch_legacy(w.kernel(), w.attacker, w.malware.pid);
  EXPECT_EQ(w.memory().inspect(w.malware.token.base, layout::kTokenSize), before);
}

TEST(TokenSwap, WorksButIsFlagged) {
  World w(false, false, false);
  const auto out = attack_token_swap(w.kernel(), w.attacker, w.malware.pid, w.system.pid);
  EXPECT_TRUE(out.succeeded);
  EXPECT_TRUE(*out.privileged);
  EXPECT_EQ(out.swap_flagged, std::vector<std::uint64_t>{w.malware.pid});
  EXPECT_EQ(out.bytes_patched, 8u);
}

TEST(TokenSwap, SwapBackClearsDetection) {
  World w(false, false, false);
  attack_token_swap(w.kernel(), w.attacker, w.malware.pid, w.system.pid);
  w.memory().write_u64(w.attacker, w.malware.eprocess.base + layout::kEprocessTokenRef, w.malware.token.base.value);
  EXPECT_TRUE(w.kernel().detect_token_swap().empty());
}

TEST(TokenSwap, ProtectedTokenRefUnchanged) {
  World w(true, false, false);
  const Address ref = w.malware.eprocess.base + layout::kEprocessTokenRef;
  const auto out = attack_token_swap(w.kernel(), w.attacker, w.malware.pid, w.system.pid);
  EXPECT_FALSE(out.succeeded);
  EXPECT_EQ(w.memory().read_u64(Agent::kernel(), ref), w.malware.token.base.value);
  EXPECT_TRUE(out.swap_flagged.empty());
}

TEST(AttackNames, KnownSet) {
  EXPECT_TRUE(is_attack_name("ntfs_hijack"));
  EXPECT_FALSE(is_attack_name("create_file"));
}
