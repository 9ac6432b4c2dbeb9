#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vlr/charset.hpp"
#include "vlr/common.hpp"
#include "vlr/tensor.hpp"

namespace vlr {

struct LabelTooWide : Error {
  explicit LabelTooWide(const std::string& label)
      : Error("label \"" + label + "\" does not fit at minimum glyph scale") {}
};
struct IndivisibleGeometry : Error {
  IndivisibleGeometry(int h, int w, int ph, int pw)
      : Error("image " + std::to_string(h) + "x" + std::to_string(w) +
              " is not divisible by patch " + std::to_string(ph) + "x" +
              std::to_string(pw)) {}
};
struct ManifestCorrupt : Error {
  size_t line;
  ManifestCorrupt(size_t ln, const std::string& why)
      : Error("manifest line " + std::to_string(ln) + ": " + why), line(ln) {}
};

enum class Tag : unsigned { clean = 1u, occluded = 2u, blurred = 4u, noisy = 8u };

inline unsigned tag_bit(Tag t) { return static_cast<unsigned>(t); }
std::string tags_to_string(unsigned tags);
unsigned tags_from_string(const std::string& s);  // throws UsageError on unknown

struct TextImage {
  int h = 0, w = 0, c = 1;
  std::vector<float> pixels;  // h*w*c, values in [-1, 1]
  std::string label;
  unsigned tags = tag_bit(Tag::clean);

  float& at(int y, int x, int ch = 0) {
    return pixels[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  float at(int y, int x, int ch = 0) const {
    return pixels[(static_cast<size_t>(y) * w + x) * c + ch];
  }
};

struct GlyphPlacement {
  char ch;
  int x, y;      // top-left corner in the image
  int sx, sy;    // integer scale factors
  float fg, bg;  // foreground/background values used
};

struct RenderResult {
  TextImage image;
  std::vector<GlyphPlacement> glyphs;
};

// Draws the label with the built-in 5x7 font: random horizontal placement,
// per-character vertical jitter up to 2 px, random fg/bg with contrast at
// least 0.5. `style` perturbs the draw stream so one rng can yield distinct
// looks for the same label.
RenderResult render(const std::string& label, uint64_t style, Rng& rng,
                    int h = 32, int w = 128);

enum class CorruptKind { occlude, blur, noise };

// severity 0 is an exact no-op apart from the tag update; output pixels stay
// inside [-1, 1].
TextImage corrupt(const TextImage& img, CorruptKind kind, double severity,
                  Rng& rng);

// ---------------------------------------------------------------------------
// Patchification
// ---------------------------------------------------------------------------
struct PatchGrid {
  Tensor<float> patches;  // N x D, row-major grid cells, D = p_h*p_w*c
  int grid_rows = 0, grid_cols = 0;
  int p_h = 0, p_w = 0, c = 1;

  int n_patches() const { return grid_rows * grid_cols; }
  int patch_dim() const { return p_h * p_w * c; }
};

PatchGrid patchify(const TextImage& img, int p_h, int p_w);
PatchGrid patchify(const std::vector<float>& pixels, int h, int w, int c,
                   int p_h, int p_w);
std::vector<float> unpatchify(const PatchGrid& grid);  // h*w*c buffer

// ---------------------------------------------------------------------------
// On-disk dataset: <dir>/manifest.tsv + <dir>/img/NNNNNN.pgm (binary P5).
// Manifest lines are `filename<TAB>label<TAB>tags`, UTF-8, LF.
// ---------------------------------------------------------------------------
void write_pgm(const std::string& path, const TextImage& img);
TextImage read_pgm(const std::string& path);

struct DatasetSpec {
  int n = 0;
  int min_len = 1, max_len = 8;
  std::map<std::string, double> mix = {{"clean", 0.7},
                                       {"occluded", 0.1},
                                       {"blurred", 0.1},
                                       {"noisy", 0.1}};
  int img_h = 32, img_w = 128;
  // train/val/test fractions; splits are label-disjoint where the label
  // space is large enough.
  double split_train = 1.0, split_val = 0.0, split_test = 0.0;
};

// Writes out/train (and out/val, out/test when their fractions are nonzero),
// each a self-contained dataset directory. Pure function of (seed, spec).
void build_dataset(const std::string& out_dir, const DatasetSpec& spec,
                   const Charset& cs, uint64_t seed);

struct Dataset {
  std::vector<TextImage> items;
};

// Loads a dataset directory in manifest order.
Dataset load_dataset(const std::string& dir);

}  // namespace vlr
