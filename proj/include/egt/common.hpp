#pragma once

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace egt {

namespace detail {

inline void format_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void format_into(std::ostringstream& oss, T&& head, Rest&&... rest) {
  oss << std::forward<T>(head);
  format_into(oss, std::forward<Rest>(rest)...);
}

}  // namespace detail

template <typename... Args>
std::string strcat(Args&&... args) {
  std::ostringstream oss;
  detail::format_into(oss, std::forward<Args>(args)...);
  return oss.str();
}

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
  throw std::runtime_error(strcat(std::forward<Args>(args)...));
}

template <typename... Args>
[[noreturn]] void fail_invalid(Args&&... args) {
  throw std::invalid_argument(strcat(std::forward<Args>(args)...));
}

template <typename... Args>
void check(bool cond, Args&&... args) {
  if (!cond) fail(std::forward<Args>(args)...);
}

template <typename... Args>
void check_arg(bool cond, Args&&... args) {
  if (!cond) fail_invalid(std::forward<Args>(args)...);
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream oss;
  oss << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) oss << ",";
    oss << s[i];
  }
  oss << "]";
  return oss.str();
}

}  // namespace egt
