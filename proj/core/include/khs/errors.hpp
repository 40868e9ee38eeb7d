#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace khs {

enum class Errc {
  AddressSpaceExhausted,
  DoubleFree,
  WildAccess,
  MisalignedAddress,
  MalformedToken,
  TableFull,
  InvalidHandle,
  TokenBufferOverflow,
  UnknownProcess,
  UnknownDriver,
  SecretNotFound,
  DonorTooLarge,
  AlreadyStarted,
  NotStarted,
  DuplicateDriver,
  RuleConflict,
  SystemHalted,
  ParseError,
  ValidationError,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure the simulator reports as an error (as opposed to an
/// NTSTATUS or a bug check) is a SimError carrying one Errc.
class SimError : public std::runtime_error {
 public:
  SimError(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Simulated BSOD. Thrown out of the syscall that detected the fault; the
/// kernel is halted by the time this propagates.
class BugCheck : public std::exception {
 public:
  explicit BugCheck(std::uint32_t code) : code_(code) {}

  std::uint32_t code() const noexcept { return code_; }
  const char* what() const noexcept override { return "simulated bug check"; }

 private:
  std::uint32_t code_;
};

}  // namespace khs
