#ifndef DIRACFLOW_TESTS_SUPPORT_HPP
#define DIRACFLOW_TESTS_SUPPORT_HPP

#include <gtest/gtest.h>

#include <functional>

#include "diracflow/error.hpp"

// Passes when fn throws diracflow::Error of the given kind.
inline ::testing::AssertionResult throws_kind(const std::function<void()>& fn, diracflow::ErrorKind kind) {
  try {
    fn();
  } catch (const diracflow::Error& e) {
    if (e.kind() == kind) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure() << "wrong kind: " << e.what();
  }
  return ::testing::AssertionFailure() << "nothing thrown";
}

#define EXPECT_THROW_KIND(stmt, kind) EXPECT_TRUE(throws_kind([&] { (void)(stmt); }, kind))

#endif
