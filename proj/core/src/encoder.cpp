#include "rqrf/encoder.hpp"

#include <algorithm>
#include <cstring>
#include <set>

#include "rqrf/corpus.hpp"
#include "rqrf/error.hpp"
#include "rqrf/io.hpp"
#include "wire.hpp"

namespace rqrf {

Vocabulary::Vocabulary() {
  std::fill(std::begin(char_index_), std::end(char_index_), -1);
  add_word("<pad>");
  add_word("<unk>");
  // PAD and UNK character slots are placeholders; bytes 0 and 1 never appear in text.
  chars_ = {0, 1};
}

Vocabulary Vocabulary::from_universe(const Universe& universe) {
  Vocabulary v;
  std::set<unsigned char> seen;
  for (const Word& w : universe.words) {
    v.add_word(w.surface);
    for (char c : w.surface) seen.insert(static_cast<unsigned char>(c));
  }
  for (unsigned char c : seen) v.add_char(c);
  return v;
}

std::int32_t Vocabulary::add_word(std::string_view word) {
  auto [it, inserted] = word_index_.emplace(std::string(word), static_cast<std::int32_t>(words_.size()));
  if (inserted) words_.emplace_back(word);
  return it->second;
}

std::int32_t Vocabulary::add_char(unsigned char c) {
  if (c <= 1) throw InvalidArgument("vocabulary: control bytes 0 and 1 are reserved");
  if (char_index_[c] >= 0) return char_index_[c];
  char_index_[c] = static_cast<std::int32_t>(chars_.size());
  chars_.push_back(c);
  return char_index_[c];
}

std::int32_t Vocabulary::word_id(std::string_view word) const {
  auto it = word_index_.find(std::string(word));
  return it == word_index_.end() ? kUnk : it->second;
}

std::int32_t Vocabulary::char_id(unsigned char c) const { return char_index_[c] >= 0 ? char_index_[c] : kUnk; }

void Vocabulary::write(std::string& out) const {
  wire::put_u32(out, static_cast<std::uint32_t>(words_.size()));
  for (const auto& w : words_) wire::put_string(out, w);
  wire::put_u32(out, static_cast<std::uint32_t>(chars_.size()));
  for (unsigned char c : chars_) out.push_back(static_cast<char>(c));
}

Vocabulary Vocabulary::read(std::string_view& in) {
  Vocabulary v;
  const std::uint32_t n_words = wire::get_u32(in);
  if (n_words < 2) throw ArtifactError("vocabulary: missing reserved words");
  for (std::uint32_t i = 0; i < n_words; ++i) {
    std::string w = wire::get_string(in);
    if (i < 2) {
      if (w != v.words_[i]) throw ArtifactError("vocabulary: reserved word mismatch");
      continue;
    }
    if (v.add_word(w) != static_cast<std::int32_t>(i)) throw ArtifactError("vocabulary: duplicate word");
  }
  const std::uint32_t n_chars = wire::get_u32(in);
  if (n_chars < 2 || in.size() < n_chars) throw ArtifactError("vocabulary: truncated character table");
  for (std::uint32_t i = 2; i < n_chars; ++i) {
    if (v.add_char(static_cast<unsigned char>(in[i])) != static_cast<std::int32_t>(i)) {
      throw ArtifactError("vocabulary: duplicate character");
    }
  }
  in.remove_prefix(n_chars);
  return v;
}

int TokenizedText::real_tokens() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

TokenizedText tokenize(std::string_view text, const Vocabulary& vocab, int t_max, int c_max) {
  if (t_max < 1 || c_max < 1) throw InvalidArgument("tokenize: t_max and c_max must be >= 1");
  TokenizedText tok;
  tok.t_max = t_max;
  tok.c_max = c_max;
  tok.words.assign(static_cast<std::size_t>(t_max), Vocabulary::kPad);
  tok.chars.assign(static_cast<std::size_t>(t_max * c_max), Vocabulary::kPad);
  tok.mask.assign(static_cast<std::size_t>(t_max), 0);
  const auto words = io::split_whitespace(text);
  const int n = std::min<int>(t_max, static_cast<int>(words.size()));
  for (int t = 0; t < n; ++t) {
    const std::string_view w = words[static_cast<std::size_t>(t)];
    tok.words[static_cast<std::size_t>(t)] = vocab.word_id(w);
    tok.mask[static_cast<std::size_t>(t)] = 1;
    const int nc = std::min<int>(c_max, static_cast<int>(w.size()));
    for (int c = 0; c < nc; ++c) {
      tok.chars[static_cast<std::size_t>(t * c_max + c)] = vocab.char_id(static_cast<unsigned char>(w[static_cast<std::size_t>(c)]));
    }
  }
  return tok;
}

template <class Real>
Matrix<Real> embed_tokens(const TokenizedText& tok, const Matrix<Real>& word_table, const Matrix<Real>& char_table) {
  const Eigen::Index dw = word_table.cols();
  const Eigen::Index dc = char_table.cols();
  Matrix<Real> m = Matrix<Real>::Zero(tok.t_max, dw + dc);
  for (int t = 0; t < tok.t_max; ++t) {
    if (!tok.mask[static_cast<std::size_t>(t)]) continue;
    const std::int32_t wid = tok.words[static_cast<std::size_t>(t)];
    if (wid < 0 || wid >= word_table.rows()) throw InternalError("embed_tokens: word id out of range");
    m.row(t).head(dw) = word_table.row(wid);
    int n_chars = 0;
    for (int c = 0; c < tok.c_max; ++c) {
      const std::int32_t cid = tok.char_at(t, c);
      if (cid == Vocabulary::kPad) continue;
      if (cid < 0 || cid >= char_table.rows()) throw InternalError("embed_tokens: char id out of range");
      m.row(t).tail(dc) += char_table.row(cid);
      ++n_chars;
    }
    if (n_chars > 0) m.row(t).tail(dc) /= static_cast<Real>(n_chars);
  }
  return m;
}

template Matrix<float> embed_tokens<float>(const TokenizedText&, const Matrix<float>&, const Matrix<float>&);
template Matrix<double> embed_tokens<double>(const TokenizedText&, const Matrix<double>&, const Matrix<double>&);

}  // namespace rqrf
