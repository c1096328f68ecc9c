#pragma once

#include <string_view>

namespace xsrank {

enum class Side { Long, Short };

inline std::string_view to_string(Side s) { return s == Side::Long ? "long" : "short"; }

}  // namespace xsrank
