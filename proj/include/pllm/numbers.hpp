#pragma once

#include <optional>
#include <string>

namespace pllm {

// English words for 0..999 ("seven", "twenty-one", "three hundred forty-five").
// Values outside that range are not renderable as words.
bool renderable_as_words(long long n);
std::string number_to_words(long long n);

enum class NumberStyle { digits, words };

// Renders n in the requested style, falling back to digits when the word
// table does not cover it.
std::string render_number(long long n, NumberStyle style);

// True when the token is part of the number-word lexicon ("seven", "hundred").
// Used to keep such words out of generated-text slots that precede the count.
bool is_number_word(const std::string& lowercase_token);

}  // namespace pllm
