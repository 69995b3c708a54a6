#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace farmare::encoders {

/// Splits at periods, trims whitespace and drops empty fragments. Text with
/// no alphabetic content comes back unchanged as a single element.
std::vector<std::string> split_sentences(std::string_view description);

/// Lower-cased word tokens with surrounding punctuation stripped.
std::vector<std::string> tokenize(std::string_view text);

/// Whitespace-separated word count (tokens that contain at least one alphanumeric).
std::size_t word_count(std::string_view text);

/// Standard English stop words plus the connective filler words used by the
/// description generator ("moreover", "additionally", ...).
bool is_stop_word(std::string_view token);

}  // namespace farmare::encoders
