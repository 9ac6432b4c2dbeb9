#pragma once

#include <string>
#include <vector>

#include "vlr/common.hpp"

namespace vlr {

constexpr int kMaxLabelLen = 25;

struct OutOfCharset : Error {
  char ch;
  size_t index;
  OutOfCharset(char c, size_t i)
      : Error("character '" + std::string(1, c) + "' at index " +
              std::to_string(i) + " is not in the charset"),
        ch(c),
        index(i) {}
};
struct TooLong : Error {
  size_t len;
  explicit TooLong(size_t n)
      : Error("label length " + std::to_string(n) + " exceeds the maximum"),
        len(n) {}
};
struct NonCharacterToken : Error {
  int id;
  size_t index;
  NonCharacterToken(int id_, size_t i)
      : Error("token id " + std::to_string(id_) + " at index " +
              std::to_string(i) + " is not a character"),
        id(id_),
        index(i) {}
};

// Vocabulary layout: EOS=0, characters 1..n, then BOS, PAD, MASK_L.
// The canonical character order is lowercase a-z followed by 0-9; smaller
// charsets are prefixes of it.
class Charset {
 public:
  explicit Charset(std::string chars);

  // Prefix of the canonical 36-symbol charset.
  static Charset standard(int size = 36);

  int size() const { return static_cast<int>(chars_.size()); }
  int vocab_size() const { return size() + 4; }

  int eos() const { return 0; }
  int bos() const { return size() + 1; }
  int pad() const { return size() + 2; }
  int mask_l() const { return size() + 3; }

  bool contains(char c) const { return id_of(c) >= 0; }
  // id of a character, or -1 when absent
  int id_of(char c) const;
  char char_of(int id) const;  // valid for ids 1..size()
  bool is_char_id(int id) const { return id >= 1 && id <= size(); }

  const std::string& chars() const { return chars_; }

 private:
  std::string chars_;
  std::array<int, 256> lut_{};
};

// A label as token ids plus per-position masked flags. Holds character ids
// only; BOS/PAD enter at context-assembly time, EOS at loss time.
struct TokenSeq {
  std::vector<int> ids;
  std::vector<uint8_t> masked;  // 1 = reconstruction target

  size_t len() const { return ids.size(); }
  std::vector<int> masked_positions() const {  // 1-based positions
    std::vector<int> out;
    for (size_t i = 0; i < masked.size(); ++i)
      if (masked[i]) out.push_back(static_cast<int>(i) + 1);
    return out;
  }
};

// Lowercases, then maps characters to ids. Unknown characters are a hard
// error rather than dropped.
TokenSeq encode(const std::string& text, const Charset& cs,
                size_t max_len = kMaxLabelLen);

// Truncates at the first EOS, then maps ids back to characters.
std::string decode(const std::vector<int>& ids, const Charset& cs);

}  // namespace vlr
