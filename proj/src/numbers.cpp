#include "pllm/numbers.hpp"

#include <array>

namespace pllm {

namespace {

constexpr std::array<const char*, 20> kUnits = {
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
    "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen",
    "seventeen", "eighteen", "nineteen"};

constexpr std::array<const char*, 10> kTens = {
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"};

std::string below_hundred(long long n) {
  if (n < 20) return kUnits[static_cast<size_t>(n)];
  std::string s = kTens[static_cast<size_t>(n / 10)];
  if (n % 10 != 0) s += std::string("-") + kUnits[static_cast<size_t>(n % 10)];
  return s;
}

}  // namespace

bool renderable_as_words(long long n) { return n >= 0 && n <= 999; }

std::string number_to_words(long long n) {
  if (!renderable_as_words(n)) return {};
  if (n < 100) return below_hundred(n);
  std::string s = std::string(kUnits[static_cast<size_t>(n / 100)]) + " hundred";
  if (n % 100 != 0) s += " " + below_hundred(n % 100);
  return s;
}

std::string render_number(long long n, NumberStyle style) {
  if (style == NumberStyle::words && renderable_as_words(n)) return number_to_words(n);
  return std::to_string(n);
}

bool is_number_word(const std::string& t) {
  for (const char* u : kUnits)
    if (t == u) return true;
  for (const char* w : kTens)
    if (*w != '\0' && t == w) return true;
  return t == "hundred";
}

}  // namespace pllm
