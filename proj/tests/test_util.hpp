#pragma once

#include <gtest/gtest.h>

#include "condrec/error.hpp"

/// Asserts that `stmt` throws condrec::Error carrying `errc`.
#define EXPECT_ERRC(stmt, errc)                                                        \
  do {                                                                                 \
    try {                                                                              \
      stmt;                                                                            \
      ADD_FAILURE() << "expected " << ::condrec::errc_name(errc) << ", nothing thrown"; \
    } catch (const ::condrec::Error& e__) {                                            \
      EXPECT_EQ(e__.code(), errc) << e__.what();                                       \
    }                                                                                  \
  } while (0)
