#pragma once

#include <cstdint>

namespace vlr {

inline constexpr int kGlyphW = 5;
inline constexpr int kGlyphH = 7;

// 7 row bytes per glyph, bit 4 = leftmost column. Returns nullptr for
// characters outside a-z / 0-9.
const uint8_t* glyph5x7(char c);

}  // namespace vlr
