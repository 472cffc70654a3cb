#include "picd/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace picd {

float jaccard_text(const TextLayout& a, const TextLayout& b) {
  auto counts = [](const TextLayout& t) {
    std::map<std::string, int> m;
    for (const auto& w : t.words) {
      std::string folded = w.content;
      for (char& c : folded) c = char(std::tolower(uint8_t(c)));
      ++m[folded];
    }
    return m;
  };
  const auto ca = counts(a);
  const auto cb = counts(b);
  long inter = 0, uni = 0;
  for (const auto& [word, na] : ca) {
    auto it = cb.find(word);
    const int nb = it == cb.end() ? 0 : it->second;
    inter += std::min(na, nb);
    uni += std::max(na, nb);
  }
  for (const auto& [word, nb] : cb)
    if (!ca.count(word)) uni += nb;
  if (uni == 0) return 1.0f;
  return float(double(inter) / double(uni));
}

float psnr(const Tensorf& a, const Tensorf& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("psnr: shape mismatch");
  if (a.size() == 0) throw std::invalid_argument("psnr: empty image");
  double se = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    se += d * d;
  }
  const double mse = se / double(a.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, float(10.0 * std::log10(1.0 / mse)));
}

void validate_curve(const RDCurve& c) {
  if (c.points.size() < 4)
    throw std::invalid_argument("rd curve: need at least 4 points, got " +
                                std::to_string(c.points.size()));
  double prev = 0.0;
  for (const auto& p : c.points) {
    if (!(p.bpp > prev))
      throw std::invalid_argument("rd curve: bpp must be positive and strictly increasing");
    prev = p.bpp;
  }
}

namespace {

// Least-squares cubic y = c0 + c1 u + c2 u^2 + c3 u^3 in u = x - x0.
// Centering on the curve's own mean keeps the Vandermonde well conditioned;
// the fitted function of x is unchanged by the shift.
struct Cubic {
  double x0 = 0.0;
  Eigen::Vector4d c = Eigen::Vector4d::Zero();

  // Integral of the fit over [lo, hi] in original coordinates.
  double integral(double lo, double hi) const {
    auto anti = [&](double x) {
      const double u = x - x0;
      return u * (c[0] + u * (c[1] / 2 + u * (c[2] / 3 + u * c[3] / 4)));
    };
    return anti(hi) - anti(lo);
  }
};

Cubic fit_cubic(const std::vector<double>& x, const std::vector<double>& y) {
  Cubic f;
  for (double v : x) f.x0 += v;
  f.x0 /= double(x.size());
  Eigen::MatrixXd a(x.size(), 4);
  Eigen::VectorXd b(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double u = x[i] - f.x0;
    a(Eigen::Index(i), 0) = 1.0;
    a(Eigen::Index(i), 1) = u;
    a(Eigen::Index(i), 2) = u * u;
    a(Eigen::Index(i), 3) = u * u * u;
    b(Eigen::Index(i)) = y[i];
  }
  f.c = a.colPivHouseholderQr().solve(b);
  return f;
}

// Shared core: fit both curves as cubics of `ys` over `xs`, integrate the
// difference (test minus ref) over the overlapping x interval, return the
// average difference.
double bd_average(const std::vector<double>& xr, const std::vector<double>& yr,
                  const std::vector<double>& xt, const std::vector<double>& yt) {
  const double lo = std::max(*std::min_element(xr.begin(), xr.end()),
                             *std::min_element(xt.begin(), xt.end()));
  const double hi = std::min(*std::max_element(xr.begin(), xr.end()),
                             *std::max_element(xt.begin(), xt.end()));
  if (!(lo < hi)) throw std::invalid_argument("bd: curves do not overlap");
  const Cubic fr = fit_cubic(xr, yr);
  const Cubic ft = fit_cubic(xt, yt);
  return (ft.integral(lo, hi) - fr.integral(lo, hi)) / (hi - lo);
}

void split_log_rate(const RDCurve& c, std::vector<double>& log_bpp,
                    std::vector<double>& metric) {
  validate_curve(c);
  log_bpp.clear();
  metric.clear();
  for (const auto& p : c.points) {
    log_bpp.push_back(std::log10(p.bpp));
    metric.push_back(p.metric);
  }
}

}  // namespace

double bd_metric(const RDCurve& ref, const RDCurve& test) {
  std::vector<double> xr, yr, xt, yt;
  split_log_rate(ref, xr, yr);
  split_log_rate(test, xt, yt);
  return bd_average(xr, yr, xt, yt);
}

double bd_rate(const RDCurve& ref, const RDCurve& test) {
  std::vector<double> xr, yr, xt, yt;
  split_log_rate(ref, xr, yr);
  split_log_rate(test, xt, yt);
  auto require_increasing = [](const std::vector<double>& m, const char* which) {
    for (size_t i = 1; i < m.size(); ++i)
      if (!(m[i] > m[i - 1]))
        throw std::invalid_argument(std::string("bd_rate: ") + which +
                                    " metric must be strictly increasing with rate");
  };
  require_increasing(yr, "ref");
  require_increasing(yt, "test");
  // Axes swapped: log-rate as a cubic in the metric.
  const double d = bd_average(yr, xr, yt, xt);
  return (std::pow(10.0, d) - 1.0) * 100.0;
}

EntropyReport entropy_identity_check(const DiscreteJoint& j) {
  const Tensor<double>& p = j.table;
  if (p.rank() != 2) throw std::invalid_argument("entropy: joint table must be rank 2");
  const int ny = p.dim(0), nz = p.dim(1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0) throw std::invalid_argument("entropy: negative probability");
    total += p[i];
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("entropy: joint must sum to 1");

  std::vector<double> py(ny, 0.0), pz(nz, 0.0);
  for (int y = 0; y < ny; ++y)
    for (int z = 0; z < nz; ++z) {
      py[y] += p(y, z);
      pz[z] += p(y, z);
    }

  auto h_terms = [](double v) { return v > 0.0 ? -v * std::log2(v) : 0.0; };

  EntropyReport r;
  for (double v : py) r.h_y += h_terms(v);
  for (double v : pz) r.h_z += h_terms(v);
  for (int y = 0; y < ny; ++y)
    for (int z = 0; z < nz; ++z) {
      const double v = p(y, z);
      r.h_yz += h_terms(v);
      // Conditionals by direct enumeration, not by subtracting marginals,
      // so the chain identity below is an actual consistency check.
      if (v > 0.0) {
        r.h_y_given_z += v * std::log2(pz[z] / v);
        r.h_z_given_y += v * std::log2(py[y] / v);
      }
    }

  r.chain_gap = std::abs(r.h_z + r.h_y_given_z - r.h_y - r.h_z_given_y);
  r.z_is_function_of_y = r.h_z_given_y < 1e-12;
  if (r.z_is_function_of_y)
    r.function_gap = std::abs(r.h_y_given_z + r.h_z - r.h_y);
  return r;
}

namespace {

std::string fmt_double(double v) {
  std::array<char, 32> buf;
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("csv: number formatting failed");
  return std::string(buf.data(), end);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw std::runtime_error("csv: bad numeric field '" + s + "'");
  return v;
}

}  // namespace

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "method,mode,lambda,bpp,psnr,jaccard,seed\n";
  for (const auto& r : rows) {
    out += r.method + ',' + r.mode + ',' + fmt_double(r.lambda) + ',' +
           fmt_double(r.bpp) + ',' + fmt_double(r.psnr) + ',' +
           fmt_double(r.jaccard) + ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

std::vector<SweepRow> parse_sweep_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "method,mode,lambda,bpp,psnr,jaccard,seed")
    throw std::runtime_error("csv: missing or unexpected header");
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 7) throw std::runtime_error("csv: expected 7 fields, got line '" + line + "'");
    SweepRow r;
    r.method = f[0];
    r.mode = f[1];
    r.lambda = parse_double(f[2]);
    r.bpp = parse_double(f[3]);
    r.psnr = parse_double(f[4]);
    r.jaccard = parse_double(f[5]);
    r.seed = std::stoull(f[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace picd
