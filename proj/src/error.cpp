#include "kgqa/error.hpp"

namespace kgqa {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kConfig:
      return "config-error";
    case ErrorCode::kData:
      return "data-error";
    case ErrorCode::kRemote:
      return "remote-error";
  }
  return "error";
}

}  // namespace kgqa
