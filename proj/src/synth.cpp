#include "vlr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vlr/font5x7.hpp"

namespace fs = std::filesystem;

namespace vlr {

std::string tags_to_string(unsigned tags) {
  std::string out;
  const std::pair<Tag, const char*> names[] = {{Tag::clean, "clean"},
                                               {Tag::occluded, "occluded"},
                                               {Tag::blurred, "blurred"},
                                               {Tag::noisy, "noisy"}};
  for (const auto& [t, name] : names) {
    if (tags & tag_bit(t)) {
      if (!out.empty()) out.push_back(',');
      out += name;
    }
  }
  return out;
}

unsigned tags_from_string(const std::string& s) {
  unsigned tags = 0;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "clean")
      tags |= tag_bit(Tag::clean);
    else if (tok == "occluded")
      tags |= tag_bit(Tag::occluded);
    else if (tok == "blurred")
      tags |= tag_bit(Tag::blurred);
    else if (tok == "noisy")
      tags |= tag_bit(Tag::noisy);
    else
      throw UsageError("unknown corruption tag: " + tok);
  }
  return tags;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

RenderResult render(const std::string& label, uint64_t style, Rng& rng, int h,
                    int w) {
  if (label.empty()) throw UsageError("render needs a nonempty label");
  for (char c : label)
    if (glyph5x7(c) == nullptr) throw OutOfCharset(c, 0);

  Rng draw(rng.u64() ^ style);

  const int len = static_cast<int>(label.size());
  const int sy = std::clamp((h - 2) / kGlyphH, 1, 3);

  // advance = glyph + one blank column, both scaled
  auto width_used = [&](int sx) { return len * (kGlyphW + 1) * sx - sx; };
  std::vector<int> feasible;
  for (int sx = 1; sx <= 3; ++sx)
    if (width_used(sx) + 2 <= w) feasible.push_back(sx);
  if (feasible.empty()) throw LabelTooWide(label);
  const int sx = feasible[draw.below(feasible.size())];

  const int used = width_used(sx);
  const int x0 = 1 + static_cast<int>(draw.below(
                         static_cast<uint64_t>(w - used - 1)));
  const int y_base = (h - kGlyphH * sy) / 2;
  const int y_margin = std::min(y_base, h - y_base - kGlyphH * sy);
  const int jitter = std::min(2, y_margin);

  const float bg = static_cast<float>(draw.uniform(-1.0, 1.0));
  // contrast at least 0.5: sample fg from the allowed interval(s),
  // weighted by their lengths
  const double lo_len = std::max(0.0, (bg - 0.5) - (-1.0));
  const double hi_len = std::max(0.0, 1.0 - (bg + 0.5));
  const double u = draw.uniform(0.0, lo_len + hi_len);
  const float fg = static_cast<float>(u < lo_len ? -1.0 + u
                                                 : bg + 0.5 + (u - lo_len));

  RenderResult out;
  out.image.h = h;
  out.image.w = w;
  out.image.c = 1;
  out.image.label = label;
  out.image.pixels.assign(static_cast<size_t>(h) * w, bg);

  int x = x0;
  for (char ch : label) {
    const int dy = jitter > 0 ? draw.range_int(-jitter, jitter) : 0;
    const int y = y_base + dy;
    const uint8_t* rows = glyph5x7(ch);
    for (int gy = 0; gy < kGlyphH; ++gy)
      for (int gx = 0; gx < kGlyphW; ++gx)
        if (rows[gy] & (1u << (kGlyphW - 1 - gx)))
          for (int ry = 0; ry < sy; ++ry)
            for (int rx = 0; rx < sx; ++rx)
              out.image.at(y + gy * sy + ry, x + gx * sx + rx) = fg;
    out.glyphs.push_back({ch, x, y, sx, sy, fg, bg});
    x += (kGlyphW + 1) * sx;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corruptions
// ---------------------------------------------------------------------------

namespace {

void occlude_in_place(TextImage& img, double severity, Rng& rng) {
  const double lo = std::min(0.10, 0.60 * severity);
  const double hi = std::max(0.10, 0.60 * severity);
  const double frac = rng.uniform(lo, hi);
  const double area = frac * img.w * img.h;
  const double aspect = rng.uniform(0.5, 2.0);
  int rw = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))),
                      1, img.w);
  int rh = std::clamp(static_cast<int>(std::lround(area / rw)), 1, img.h);
  const long cap = static_cast<long>(0.60 * img.w * img.h);
  while (static_cast<long>(rw) * rh > cap && (rw > 1 || rh > 1)) {
    if (rw >= rh)
      --rw;
    else
      --rh;
  }
  const int x0 = static_cast<int>(rng.below(img.w - rw + 1));
  const int y0 = static_cast<int>(rng.below(img.h - rh + 1));
  const float color = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (int y = y0; y < y0 + rh; ++y)
    for (int x = x0; x < x0 + rw; ++x) img.at(y, x) = color;
}

void blur_in_place(TextImage& img, double severity) {
  const double sigma = 0.5 + 1.5 * severity;
  const int r = severity > 0.5 ? 2 : 1;
  std::vector<float> kernel(static_cast<size_t>(2 * r + 1));
  float sum = 0.0f;
  for (int i = -r; i <= r; ++i) {
    kernel[i + r] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    sum += kernel[i + r];
  }
  for (auto& k : kernel) k /= sum;

  std::vector<float> tmp(img.pixels.size());
  auto clamp_x = [&](int x) { return std::clamp(x, 0, img.w - 1); };
  auto clamp_y = [&](int y) { return std::clamp(y, 0, img.h - 1); };
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      float acc = 0.0f;
      for (int i = -r; i <= r; ++i)
        acc += kernel[i + r] * img.at(y, clamp_x(x + i));
      tmp[static_cast<size_t>(y) * img.w + x] = acc;
    }
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      float acc = 0.0f;
      for (int i = -r; i <= r; ++i)
        acc += kernel[i + r] * tmp[static_cast<size_t>(clamp_y(y + i)) * img.w + x];
      img.at(y, x) = acc;
    }
}

void noise_in_place(TextImage& img, double severity, Rng& rng) {
  const double sigma = 0.3 * severity;
  for (auto& p : img.pixels) {
    p = static_cast<float>(p + sigma * rng.normal());
    p = std::clamp(p, -1.0f, 1.0f);
  }
}

}  // namespace

TextImage corrupt(const TextImage& img, CorruptKind kind, double severity,
                  Rng& rng) {
  TextImage out = img;
  out.tags &= ~tag_bit(Tag::clean);
  switch (kind) {
    case CorruptKind::occlude:
      out.tags |= tag_bit(Tag::occluded);
      if (severity > 0.0) occlude_in_place(out, severity, rng);
      break;
    case CorruptKind::blur:
      out.tags |= tag_bit(Tag::blurred);
      if (severity > 0.0) blur_in_place(out, severity);
      break;
    case CorruptKind::noise:
      out.tags |= tag_bit(Tag::noisy);
      if (severity > 0.0) noise_in_place(out, severity, rng);
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Patchification
// ---------------------------------------------------------------------------

PatchGrid patchify(const std::vector<float>& pixels, int h, int w, int c,
                   int p_h, int p_w) {
  if (p_h <= 0 || p_w <= 0 || h % p_h != 0 || w % p_w != 0)
    throw IndivisibleGeometry(h, w, p_h, p_w);
  PatchGrid g;
  g.grid_rows = h / p_h;
  g.grid_cols = w / p_w;
  g.p_h = p_h;
  g.p_w = p_w;
  g.c = c;
  g.patches = Tensor<float>({g.n_patches(), g.patch_dim()});
  for (int gr = 0; gr < g.grid_rows; ++gr)
    for (int gc = 0; gc < g.grid_cols; ++gc) {
      float* dst = g.patches.row(gr * g.grid_cols + gc);
      for (int py = 0; py < p_h; ++py)
        for (int px = 0; px < p_w; ++px)
          for (int ch = 0; ch < c; ++ch)
            *dst++ = pixels[((static_cast<size_t>(gr * p_h + py) * w) +
                             (gc * p_w + px)) *
                                c +
                            ch];
    }
  return g;
}

PatchGrid patchify(const TextImage& img, int p_h, int p_w) {
  return patchify(img.pixels, img.h, img.w, img.c, p_h, p_w);
}

std::vector<float> unpatchify(const PatchGrid& grid) {
  const int h = grid.grid_rows * grid.p_h;
  const int w = grid.grid_cols * grid.p_w;
  std::vector<float> out(static_cast<size_t>(h) * w * grid.c);
  for (int gr = 0; gr < grid.grid_rows; ++gr)
    for (int gc = 0; gc < grid.grid_cols; ++gc) {
      const float* src = grid.patches.row(gr * grid.grid_cols + gc);
      for (int py = 0; py < grid.p_h; ++py)
        for (int px = 0; px < grid.p_w; ++px)
          for (int ch = 0; ch < grid.c; ++ch)
            out[((static_cast<size_t>(gr * grid.p_h + py) * w) +
                 (gc * grid.p_w + px)) *
                    grid.c +
                ch] = *src++;
    }
  return out;
}

// ---------------------------------------------------------------------------
// PGM io
// ---------------------------------------------------------------------------

void write_pgm(const std::string& path, const TextImage& img) {
  if (img.c != 1) throw IoError("PGM output requires a single channel");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "P5\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> bytes(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = (img.pixels[i] + 1.0f) * 127.5f;
    bytes[i] = static_cast<unsigned char>(
        std::clamp(static_cast<int>(std::lround(v)), 0, 255));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write: " + path);
}

TextImage read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255)
    throw IoError("not an 8-bit binary PGM: " + path);
  f.get();  // single whitespace after maxval
  TextImage img;
  img.h = h;
  img.w = w;
  img.c = 1;
  std::vector<unsigned char> bytes(static_cast<size_t>(w) * h);
  f.read(reinterpret_cast<char*>(bytes.data()),
         static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw IoError("truncated PGM: " + path);
  img.pixels.resize(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i)
    img.pixels[i] = static_cast<float>(bytes[i]) / 127.5f - 1.0f;
  return img;
}

// ---------------------------------------------------------------------------
// Dataset build / load
// ---------------------------------------------------------------------------

namespace {

uint64_t label_hash(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  return h;
}

struct MixEntry {
  CorruptKind kind;
  bool clean;
  double weight;
};

std::vector<MixEntry> parse_mix(const std::map<std::string, double>& mix) {
  std::vector<MixEntry> out;
  double total = 0.0;
  for (const auto& [name, wgt] : mix) {
    if (wgt < 0.0) throw UsageError("negative mix fraction for " + name);
    total += wgt;
    if (name == "clean")
      out.push_back({CorruptKind::occlude, true, wgt});
    else if (name == "occluded")
      out.push_back({CorruptKind::occlude, false, wgt});
    else if (name == "blurred")
      out.push_back({CorruptKind::blur, false, wgt});
    else if (name == "noisy")
      out.push_back({CorruptKind::noise, false, wgt});
    else
      throw UsageError("unknown corruption mix key: " + name);
  }
  if (total <= 0.0) throw UsageError("corruption mix has zero total weight");
  for (auto& e : out) e.weight /= total;
  return out;
}

std::string sample_label(const Charset& cs, int min_len, int max_len,
                         Rng& rng) {
  const int len = rng.range_int(min_len, max_len);
  std::string s(static_cast<size_t>(len), ' ');
  for (auto& c : s) c = cs.chars()[rng.below(cs.chars().size())];
  return s;
}

// split id: 0=train 1=val 2=test, assigned by label hash so splits are
// label-disjoint whenever the label space allows it
int split_of_label(const std::string& label, double f_train, double f_val) {
  const double u =
      static_cast<double>(label_hash(label) >> 11) * 0x1.0p-53;
  if (u < f_train) return 0;
  if (u < f_train + f_val) return 1;
  return 2;
}

}  // namespace

void build_dataset(const std::string& out_dir, const DatasetSpec& spec,
                   const Charset& cs, uint64_t seed) {
  if (spec.n < 1) throw UsageError("dataset size must be at least 1");
  if (spec.min_len < 1 || spec.max_len < spec.min_len)
    throw UsageError("bad label length range");
  const auto mix = parse_mix(spec.mix);

  const double f_sum = spec.split_train + spec.split_val + spec.split_test;
  if (f_sum <= 0.0) throw UsageError("split fractions must sum above zero");
  const double ft = spec.split_train / f_sum;
  const double fv = spec.split_val / f_sum;

  int counts[3];
  counts[0] = static_cast<int>(std::lround(spec.n * ft));
  counts[1] = static_cast<int>(std::lround(spec.n * fv));
  counts[2] = spec.n - counts[0] - counts[1];
  if (counts[2] < 0) {
    counts[1] += counts[2];
    counts[2] = 0;
  }

  const char* split_names[3] = {"train", "val", "test"};
  uint64_t sample_index = 0;
  for (int s = 0; s < 3; ++s) {
    if (counts[s] == 0) continue;
    const fs::path dir = fs::path(out_dir) / split_names[s];
    fs::create_directories(dir / "img");
    std::ofstream manifest(dir / "manifest.tsv", std::ios::binary);
    if (!manifest) throw IoError("cannot write manifest under " + dir.string());

    for (int i = 0; i < counts[s]; ++i, ++sample_index) {
      // per spec: each sample's stream is seed xor its index, so parallel
      // and serial generation agree
      Rng rng(seed ^ sample_index);

      std::string label;
      const bool multi_split = (ft < 1.0);
      for (int tries = 0;; ++tries) {
        label = sample_label(cs, spec.min_len, spec.max_len, rng);
        if (!multi_split || split_of_label(label, ft, fv) == s || tries >= 200)
          break;
      }

      RenderResult r = render(label, 0, rng, spec.img_h, spec.img_w);
      TextImage img = std::move(r.image);

      const double u = rng.uniform();
      double acc = 0.0;
      for (const auto& e : mix) {
        acc += e.weight;
        if (u < acc || &e == &mix.back()) {
          if (!e.clean) {
            const double severity = rng.uniform(0.3, 0.8);
            img = corrupt(img, e.kind, severity, rng);
          }
          break;
        }
      }

      char name[32];
      std::snprintf(name, sizeof(name), "img/%06d.pgm", i);
      write_pgm((dir / name).string(), img);
      manifest << name << "\t" << img.label << "\t" << tags_to_string(img.tags)
               << "\n";
    }
    if (!manifest) throw IoError("short manifest write under " + dir.string());
  }
}

Dataset load_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.tsv";
  std::ifstream manifest(manifest_path, std::ios::binary);
  if (!manifest) throw IoError("cannot open " + manifest_path.string());

  Dataset ds;
  std::string line;
  size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw ManifestCorrupt(line_no, "expected 3 tab-separated fields");
    const std::string fname = line.substr(0, t1);
    const std::string label = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string tags = line.substr(t2 + 1);
    TextImage img = read_pgm((fs::path(dir) / fname).string());
    img.label = label;
    img.tags = tags_from_string(tags);
    ds.items.push_back(std::move(img));
  }
  return ds;
}

}  // namespace vlr
