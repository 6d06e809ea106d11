#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rqrf/tensor.hpp"

namespace rqrf {

class Universe;

/// Word and character vocabularies with reserved PAD=0 and UNK=1.
class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;

  Vocabulary();

  /// Words in universe word-id order; characters sorted by byte value.
  static Vocabulary from_universe(const Universe& universe);

  std::int32_t add_word(std::string_view word);
  std::int32_t add_char(unsigned char c);

  std::int32_t word_id(std::string_view word) const;
  std::int32_t char_id(unsigned char c) const;

  std::size_t word_count() const { return words_.size(); }
  std::size_t char_count() const { return chars_.size(); }
  const std::string& word(std::int32_t id) const { return words_.at(static_cast<std::size_t>(id)); }
  unsigned char character(std::int32_t id) const { return chars_.at(static_cast<std::size_t>(id)); }

  /// Length-prefixed binary form used inside checkpoints.
  void write(std::string& out) const;
  static Vocabulary read(std::string_view& in);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_ && a.chars_ == b.chars_;
  }

 private:
  std::vector<std::string> words_;
  std::vector<unsigned char> chars_;
  std::unordered_map<std::string, std::int32_t> word_index_;
  std::int32_t char_index_[256];
};

/// Fixed-shape token ids. Row-major `chars` is t_max x c_max.
struct TokenizedText {
  int t_max = 0;
  int c_max = 0;
  std::vector<std::int32_t> words;
  std::vector<std::int32_t> chars;
  std::vector<std::uint8_t> mask;

  int real_tokens() const;
  std::int32_t char_at(int t, int c) const { return chars[static_cast<std::size_t>(t * c_max + c)]; }

  friend bool operator==(const TokenizedText&, const TokenizedText&) = default;
};

/// Whitespace words, per-word characters, truncated to t_max words and c_max characters.
TokenizedText tokenize(std::string_view text, const Vocabulary& vocab, int t_max, int c_max);

/// m_t = [word embedding, mean of the word's character embeddings]; padded rows are zero.
template <class Real>
Matrix<Real> embed_tokens(const TokenizedText& tok, const Matrix<Real>& word_table, const Matrix<Real>& char_table);

}  // namespace rqrf
