#pragma once

#include <fmt/format.h>
#include <string>

namespace wdexp {

// 17 significant digits round-trips any double.
inline std::string num(double v) { return fmt::format("{:.17g}", v); }

}  // namespace wdexp
