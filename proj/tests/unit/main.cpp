#include <gtest/gtest.h>

#include "fitbd/log.hpp"

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  fitbd::set_log_level(fitbd::LogLevel::kSilent);
  return RUN_ALL_TESTS();
}
