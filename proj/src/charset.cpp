#include "vlr/charset.hpp"

#include <algorithm>
#include <cctype>

namespace vlr {

namespace {
constexpr const char* kCanonical = "abcdefghijklmnopqrstuvwxyz0123456789";
}

Charset::Charset(std::string chars) : chars_(std::move(chars)) {
  if (chars_.empty()) throw UsageError("charset must not be empty");
  lut_.fill(-1);
  for (size_t i = 0; i < chars_.size(); ++i) {
    const auto u = static_cast<unsigned char>(chars_[i]);
    if (lut_[u] != -1)
      throw UsageError("charset has a duplicate character: " +
                       std::string(1, chars_[i]));
    lut_[u] = static_cast<int>(i) + 1;
  }
}

Charset Charset::standard(int size) {
  if (size < 1 || size > 36)
    throw UsageError("standard charset size must be in 1..36");
  return Charset(std::string(kCanonical).substr(0, static_cast<size_t>(size)));
}

int Charset::id_of(char c) const { return lut_[static_cast<unsigned char>(c)]; }

char Charset::char_of(int id) const {
  return chars_[static_cast<size_t>(id - 1)];
}

TokenSeq encode(const std::string& text, const Charset& cs, size_t max_len) {
  if (text.size() > max_len) throw TooLong(text.size());
  TokenSeq seq;
  seq.ids.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = static_cast<char>(
        std::tolower(static_cast<unsigned char>(text[i])));
    const int id = cs.id_of(c);
    if (id < 0) throw OutOfCharset(text[i], i);
    seq.ids.push_back(id);
  }
  seq.masked.assign(seq.ids.size(), 0);
  return seq;
}

std::string decode(const std::vector<int>& ids, const Charset& cs) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == cs.eos()) break;
    if (!cs.is_char_id(ids[i])) throw NonCharacterToken(ids[i], i);
    out.push_back(cs.char_of(ids[i]));
  }
  return out;
}

}  // namespace vlr
