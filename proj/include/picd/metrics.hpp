// Reconstruction metrics and rate-distortion bookkeeping.
//
// Three groups live here. Scalar metrics (psnr, jaccard_text) compare a
// reconstruction against its reference. Rate-distortion curves (RDCurve)
// carry (bpp, metric) points for one method across a lambda sweep, and
// bd_metric / bd_rate reduce two curves to a single Bjontegaard average
// via cubic fits in log10(bpp). The entropy checker enumerates a finite
// joint distribution exactly and reports the chain-rule quantities.
//
// Everything in this header is pure: no model state, no files.

#pragma once

#include <string>
#include <vector>

#include "picd/tensor.hpp"
#include "picd/text.hpp"

namespace picd {

// Multiset Jaccard over case-folded word contents: sum of per-word minimum
// counts divided by sum of maximum counts. Positions and heights are
// ignored; duplicated words count once per occurrence. Two empty layouts
// compare as 1.
float jaccard_text(const TextLayout& a, const TextLayout& b);

// Peak signal-to-noise ratio in dB for images in [0,1], 10*log10(1/MSE).
// Identical inputs would be +inf; the return is capped at 99 so callers
// can average and tabulate without special cases.
float psnr(const Tensorf& a, const Tensorf& b);
constexpr float kPsnrCap = 99.0f;

struct RDPoint {
  double bpp = 0.0;     // > 0
  double metric = 0.0;  // quality value at that rate (PSNR, Jaccard, ...)
};

struct RDCurve {
  std::string label;
  std::vector<RDPoint> points;  // bpp strictly increasing, at least 4
};

// Throws std::invalid_argument unless the curve has >= 4 points with
// strictly increasing positive bpp.
void validate_curve(const RDCurve& c);

// Bjontegaard average metric difference (test minus ref). Both curves are
// fit with a cubic polynomial of metric over log10(bpp); the difference of
// the two fits is integrated over the overlapping log-rate interval and
// divided by its width. Throws if either curve is invalid or the bpp
// ranges do not overlap.
double bd_metric(const RDCurve& ref, const RDCurve& test);

// Bjontegaard average rate difference in percent. Fits log10(bpp) as a
// cubic in the metric, integrates the difference over the overlapping
// metric interval, and maps the mean log-rate shift d through
// (10^d - 1) * 100. Requires the metric to be strictly increasing along
// each curve (true for PSNR and Jaccard sweeps). Same errors as bd_metric.
double bd_rate(const RDCurve& ref, const RDCurve& test);

// Finite joint distribution over (Y, Z) pairs as a dense table,
// p(y, z) = table(y, z). Entries must be nonnegative and sum to 1.
struct DiscreteJoint {
  Tensor<double> table;  // rank 2, {|Y|, |Z|}
};

struct EntropyReport {
  double h_y = 0.0;
  double h_z = 0.0;
  double h_y_given_z = 0.0;
  double h_z_given_y = 0.0;
  double h_yz = 0.0;
  // |H(Z) + H(Y|Z) - H(Y) - H(Z|Y)| -- zero up to rounding for any joint.
  double chain_gap = 0.0;
  // When H(Z|Y) = 0 (Z a function of Y), H(Y|Z) + H(Z) must equal H(Y).
  bool z_is_function_of_y = false;
  double function_gap = 0.0;  // |H(Y|Z) + H(Z) - H(Y)| when the flag is set
};

// Exact enumeration of the entropies of a finite joint. Throws
// std::invalid_argument if the table is not rank 2, has a negative entry,
// or does not sum to 1 within 1e-9.
EntropyReport entropy_identity_check(const DiscreteJoint& j);

// One row of a sweep results table. `method` names the decode path
// ("picd", "codec", ...), `mode` is "screen" or "natural".
struct SweepRow {
  std::string method;
  std::string mode;
  double lambda = 0.0;
  double bpp = 0.0;
  double psnr = 0.0;
  double jaccard = 0.0;
  uint64_t seed = 0;
};

// CSV with header "method,mode,lambda,bpp,psnr,jaccard,seed". Numeric
// fields are printed with enough digits to round-trip, so the same rows
// always serialize to the same bytes.
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_sweep_csv(const std::string& csv);

}  // namespace picd
