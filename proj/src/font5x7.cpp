#include "vlr/font5x7.hpp"

namespace vlr {

namespace {

// Classic 5x7 dot-matrix letterforms.
constexpr uint8_t kLetters[26][7] = {
    {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11},  // a
    {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e},  // b
    {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e},  // c
    {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c},  // d
    {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f},  // e
    {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10},  // f
    {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f},  // g
    {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11},  // h
    {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e},  // i
    {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c},  // j
    {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11},  // k
    {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f},  // l
    {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11},  // m
    {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11},  // n
    {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e},  // o
    {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10},  // p
    {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d},  // q
    {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11},  // r
    {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e},  // s
    {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},  // t
    {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e},  // u
    {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04},  // v
    {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0a},  // w
    {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11},  // x
    {0x11, 0x11, 0x11, 0x0a, 0x04, 0x04, 0x04},  // y
    {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f},  // z
};

constexpr uint8_t kDigits[10][7] = {
    {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e},  // 0
    {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e},  // 1
    {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f},  // 2
    {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e},  // 3
    {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02},  // 4
    {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e},  // 5
    {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e},  // 6
    {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e},  // 8
    {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c},  // 9
};

}  // namespace

const uint8_t* glyph5x7(char c) {
  if (c >= 'a' && c <= 'z') return kLetters[c - 'a'];
  if (c >= '0' && c <= '9') return kDigits[c - '0'];
  return nullptr;
}

}  // namespace vlr
