#include "cgan/csv.hpp"

#include <cstdio>

namespace cgan {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

}  // namespace cgan
