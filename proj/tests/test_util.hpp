#pragma once

#include <optional>
#include <string>
#include <utility>

#include "trajctl/errors.hpp"

namespace testutil {

// Runs fn and reports the ErrorCode it threw, if any; empty when it returned
// normally or threw something that is not a trajctl::Error.
template <typename Fn>
std::optional<trajctl::ErrorCode> thrown_code(Fn&& fn) {
  try {
    std::forward<Fn>(fn)();
  } catch (const trajctl::Error& e) {
    return e.code();
  } catch (...) {
    return std::nullopt;
  }
  return std::nullopt;
}

// Message of the Error fn throws ("" when it does not throw one).
template <typename Fn>
std::string thrown_message(Fn&& fn) {
  try {
    std::forward<Fn>(fn)();
  } catch (const trajctl::Error& e) {
    return e.what();
  } catch (...) {
  }
  return "";
}

}  // namespace testutil
