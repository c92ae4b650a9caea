#pragma once

#include "modalign/modalign.h"

namespace modalign_cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

inline int exit_code_for(ma_status s) {
  switch (s) {
    case MA_OK:
      return kExitOk;
    case MA_ERR_INVALID_ARGUMENT:
    case MA_ERR_NULL_ARGUMENT:
      return kExitUsage;
    case MA_ERR_NUMERICAL:
      return kExitNumerical;
    default:
      return kExitData;
  }
}

}  // namespace modalign_cli
