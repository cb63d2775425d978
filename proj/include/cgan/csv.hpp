#pragma once

#include <optional>
#include <string>

namespace cgan {

// 17 significant digits, locale independent.
std::string format_real(double v);

// Empty string for an absent value.
std::string format_optional(const std::optional<double>& v);

}  // namespace cgan
