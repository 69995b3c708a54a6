#include "farmare/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace farmare::encoders {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Sorted for binary search.
constexpr std::array<std::string_view, 129> kStopWords = {
    "a",          "about",     "above",    "additionally", "after",   "again",   "against",
    "all",        "also",      "am",       "an",           "and",     "any",     "are",
    "as",         "at",        "be",       "because",      "been",    "before",  "being",
    "below",      "besides",   "between",  "both",         "but",     "by",      "can",
    "could",      "did",       "do",       "does",         "doing",   "down",    "during",
    "each",       "few",       "find",     "for",          "from",    "further", "furthermore",
    "gives",      "had",       "has",      "have",         "having",  "he",      "her",
    "here",       "hers",      "him",      "his",          "how",     "i",       "if",
    "in",         "into",      "is",       "it",           "its",     "itself",  "just",
    "look",       "me",        "more",     "moreover",     "most",    "my",      "near",
    "no",         "nor",       "not",      "now",          "of",      "off",     "on",
    "once",       "only",      "or",       "other",        "our",     "ours",    "out",
    "over",       "own",       "placed",   "same",         "she",     "should",  "so",
    "some",       "such",      "than",     "that",         "the",     "their",   "theirs",
    "them",       "then",      "there",    "these",        "they",    "this",    "those",
    "through",    "to",        "too",      "under",        "until",   "up",      "very",
    "was",        "we",        "were",     "what",         "when",    "where",   "which",
    "while",      "who",       "whom",     "why",          "will",    "with",    "would",
    "you",        "your",      "yours",
};
static_assert(std::is_sorted(kStopWords.begin(), kStopWords.end()));

}  // namespace

std::vector<std::string> split_sentences(std::string_view description) {
  const bool has_alpha = std::any_of(description.begin(), description.end(),
                                     [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; });
  if (!has_alpha) return {std::string(description)};

  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= description.size()) {
    const std::size_t dot = description.find('.', start);
    const std::size_t end = dot == std::string_view::npos ? description.size() : dot;
    const std::string_view piece = trim(description.substr(start, end - start));
    if (!piece.empty()) out.emplace_back(piece);
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    std::string_view word = text.substr(i, j - i);
    while (!word.empty() && !is_alnum(word.front())) word.remove_prefix(1);
    while (!word.empty() && !is_alnum(word.back())) word.remove_suffix(1);
    if (!word.empty()) {
      std::string lower(word);
      std::transform(lower.begin(), lower.end(), lower.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      out.push_back(std::move(lower));
    }
    i = j;
  }
  return out;
}

std::size_t word_count(std::string_view text) { return tokenize(text).size(); }

bool is_stop_word(std::string_view token) {
  return std::binary_search(kStopWords.begin(), kStopWords.end(), token,
                            [](std::string_view a, std::string_view b) { return a < b; });
}

}  // namespace farmare::encoders
