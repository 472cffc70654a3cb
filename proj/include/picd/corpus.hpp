#pragma once

// Synthetic screen-image corpus.
//
// Samples are flat-color pages: a base background, a few non-overlapping
// panels, and words drawn with the repo font in horizontal bands. The
// geometry rules (band and word gaps, guard margins, panel clearances) are
// chosen so the oracle extractor segments and parses every clean sample
// exactly; each sample is verified against the oracle before it is
// accepted, and failed draws are redrawn under a new sub-seed.
//
// Ink and background luminances come from disjoint ranges, so every ink
// pixel clears the extractor's contrast threshold against any background
// in the image. Which range is which is the page theme; the fine-tune
// corpus inverts the theme bias to create a shifted style domain.
//
// Everything is deterministic in (seed, index): per-sample draws use a
// seed split by index and attempt, so generation order and parallelism
// cannot change the output.

#include <cstdint>
#include <string>
#include <vector>

#include "picd/tensor.hpp"
#include "picd/text.hpp"

namespace picd {

struct Panel {
  int x = 0, y = 0, w = 0, h = 0;
  int rgb[3] = {0, 0, 0};  // 8-bit channel values; pixels are value/255

  bool operator==(const Panel&) const = default;
};

struct ScreenSample {
  Tensorf image;  // {3, canvas, canvas}
  TextLayout layout;
  std::vector<Panel> panels;
  int base_rgb[3] = {0, 0, 0};
  int attempts = 1;   // draws spent until the oracle verified the sample
  int shortfall = 0;  // words dropped because no placement satisfied the rules
};

struct SampleRef {
  std::string image_path, layout_path;  // relative to the corpus directory
  uint32_t image_crc = 0, layout_crc = 0;
  std::vector<Panel> panels;
  int base_rgb[3] = {0, 0, 0};
};

struct CorpusManifest {
  std::string dir;
  uint64_t seed = 0;
  int count = 0;
  int canvas = 0;
  int shortfall = 0;  // total words lost to placement failures
  int redrawn = 0;    // extra draws spent on oracle verification
  std::vector<SampleRef> samples;
};

struct GeneratorOptions {
  int canvas = 64;
  int min_words = 3, max_words = 12;
  int min_len = 1, max_len = 8;
  bool invert_theme = false;  // bias toward light-ink-on-dark pages
};

// Pure in-memory construction, deterministic in (seed, index). Throws if
// the sample cannot be verified against the oracle within a bounded
// number of redraws.
ScreenSample make_sample(uint64_t seed, int index, const GeneratorOptions& opt = {});

// Generates n verified samples under dir (img/ and layout/ subdirectories)
// and writes manifest.txt.
CorpusManifest generate_corpus(const std::string& dir, uint64_t seed, int n,
                               const GeneratorOptions& opt = {});

CorpusManifest load_manifest(const std::string& dir);

// Loads one sample, checking file checksums against the manifest.
ScreenSample load_sample(const CorpusManifest& m, int index);

}  // namespace picd
