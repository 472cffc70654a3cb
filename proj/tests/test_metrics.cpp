#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "picd/metrics.hpp"
#include "picd/rng.hpp"

using namespace picd;

namespace {

TextLayout layout_of(const std::vector<std::string>& words) {
  TextLayout z;
  z.canvas_w = z.canvas_h = 64;
  int y = 0;
  for (const std::string& w : words) {
    z.words.push_back({w, 0, y, 8});
    y += 10;
  }
  return z;
}

Tensorf const_image(float v) {
  Tensorf t({3, 8, 8});
  t.flat().setConstant(v);
  return t;
}

RDCurve curve(const std::vector<std::pair<double, double>>& pts,
              const std::string& label = "c") {
  RDCurve c;
  c.label = label;
  for (auto [b, m] : pts) c.points.push_back({b, m});
  return c;
}

// Piecewise-linear log10(bpp) as a function of the metric, integrated with
// a fine trapezoid rule over the overlapping metric interval. Independent
// of the cubic-fit path under test.
double trapezoid_bd_rate(const RDCurve& ref, const RDCurve& test) {
  auto interp = [](const RDCurve& c, double m) {
    const auto& p = c.points;
    for (size_t i = 1; i < p.size(); ++i) {
      if (m <= p[i].metric || i == p.size() - 1) {
        const double t = (m - p[i - 1].metric) / (p[i].metric - p[i - 1].metric);
        return (1.0 - t) * std::log10(p[i - 1].bpp) + t * std::log10(p[i].bpp);
      }
    }
    return std::log10(p.back().bpp);
  };
  const double lo = std::max(ref.points.front().metric, test.points.front().metric);
  const double hi = std::min(ref.points.back().metric, test.points.back().metric);
  const int n = 4000;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double m = lo + (hi - lo) * double(i) / n;
    const double d = interp(test, m) - interp(ref, m);
    acc += (i == 0 || i == n) ? 0.5 * d : d;
  }
  const double mean = acc / n;
  return (std::pow(10.0, mean) - 1.0) * 100.0;
}

DiscreteJoint joint_of(const std::vector<std::vector<double>>& rows) {
  DiscreteJoint j;
  j.table = Tensor<double>({int(rows.size()), int(rows[0].size())});
  for (size_t y = 0; y < rows.size(); ++y)
    for (size_t z = 0; z < rows[y].size(); ++z) j.table(int(y), int(z)) = rows[y][z];
  return j;
}

}  // namespace

TEST_CASE("jaccard golden values") {
  CHECK(jaccard_text(layout_of({"a", "b", "c"}), layout_of({"b", "c", "d"})) ==
        doctest::Approx(0.5).epsilon(1e-7));
  CHECK(jaccard_text(layout_of({"x", "y"}), layout_of({"x", "y"})) == 1.0f);
  CHECK(jaccard_text(layout_of({"x"}), layout_of({"q"})) == 0.0f);
  CHECK(jaccard_text(layout_of({}), layout_of({})) == 1.0f);
  CHECK(jaccard_text(layout_of({"x"}), layout_of({})) == 0.0f);
}

TEST_CASE("jaccard folds case and counts multiplicity") {
  CHECK(jaccard_text(layout_of({"ABC"}), layout_of({"abc"})) == 1.0f);
  // min/max counts: common = 1(a) + 1(b), union = 2(a) + 1(b).
  CHECK(jaccard_text(layout_of({"a", "a", "b"}), layout_of({"a", "b"})) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-7));
}

TEST_CASE("jaccard ignores geometry, is symmetric and bounded") {
  TextLayout a = layout_of({"one", "two"});
  TextLayout b = a;
  for (auto& w : b.words) {
    w.x += 5;
    w.h = 12;
  }
  CHECK(jaccard_text(a, b) == 1.0f);

  Rng rng(3);
  const char* pool[] = {"red", "green", "blue", "cyan", "teal", "gray"};
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> wa, wb;
    for (int k = rng.uniform_int(0, 5); k > 0; --k) wa.push_back(pool[rng.uniform_int(0, 5)]);
    for (int k = rng.uniform_int(0, 5); k > 0; --k) wb.push_back(pool[rng.uniform_int(0, 5)]);
    const float j1 = jaccard_text(layout_of(wa), layout_of(wb));
    const float j2 = jaccard_text(layout_of(wb), layout_of(wa));
    CHECK(j1 == j2);
    CHECK(j1 >= 0.0f);
    CHECK(j1 <= 1.0f);
    const bool equal_multisets = [&] {
      auto sa = wa, sb = wb;
      std::sort(sa.begin(), sa.end());
      std::sort(sb.begin(), sb.end());
      return sa == sb;
    }();
    CHECK((j1 == 1.0f) == equal_multisets);
  }
}

TEST_CASE("psnr golden values") {
  const Tensorf zero = const_image(0.0f);
  CHECK(psnr(zero, zero) == kPsnrCap);
  CHECK(psnr(zero, const_image(0.1f)) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(psnr(zero, const_image(1.0f)) == doctest::Approx(0.0).epsilon(1e-6));
  Tensorf other({3, 4, 4});
  CHECK_THROWS_AS(psnr(zero, other), std::invalid_argument);
}

TEST_CASE("rd curve validation") {
  CHECK_NOTHROW(validate_curve(curve({{0.1, 20}, {0.2, 22}, {0.3, 23}, {0.4, 24}})));
  CHECK_THROWS_AS(validate_curve(curve({{0.1, 20}, {0.2, 22}, {0.3, 23}})),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate_curve(curve({{0.1, 20}, {0.1, 22}, {0.3, 23}, {0.4, 24}})),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate_curve(curve({{-0.1, 20}, {0.2, 22}, {0.3, 23}, {0.4, 24}})),
                  std::invalid_argument);
}

TEST_CASE("bd metric oracle cases") {
  const RDCurve ref = curve({{0.10, 20.0}, {0.18, 23.5}, {0.33, 26.2}, {0.55, 28.1}});
  CHECK(std::abs(bd_metric(ref, ref)) <= 1e-9);

  RDCurve up = ref;
  for (auto& p : up.points) p.metric += 1.0;
  CHECK(bd_metric(ref, up) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(bd_metric(up, ref) == doctest::Approx(-1.0).epsilon(1e-9));

  // Antisymmetry on two distinct overlapping curves.
  const RDCurve other = curve({{0.12, 21.0}, {0.20, 23.0}, {0.35, 25.5}, {0.50, 27.0}});
  CHECK(bd_metric(ref, other) == doctest::Approx(-bd_metric(other, ref)).epsilon(1e-9));
}

TEST_CASE("bd rate doubles to +100% and matches the trapezoid oracle") {
  const RDCurve ref = curve({{0.10, 20.0}, {0.18, 23.5}, {0.33, 26.2}, {0.55, 28.1}});
  RDCurve doubled = ref;
  for (auto& p : doubled.points) p.bpp *= 2.0;

  const double fit = bd_rate(ref, doubled);
  CHECK(fit == doctest::Approx(100.0).epsilon(1e-3));
  CHECK(std::abs(fit - trapezoid_bd_rate(ref, doubled)) <= 0.1);

  CHECK(std::abs(bd_rate(ref, ref)) <= 1e-9);
}

TEST_CASE("bd errors on disjoint ranges and non-monotone metric") {
  const RDCurve a = curve({{0.1, 20}, {0.2, 22}, {0.3, 23}, {0.4, 24}});
  const RDCurve b = curve({{1.0, 30}, {2.0, 32}, {3.0, 33}, {4.0, 34}});
  CHECK_THROWS_AS(bd_metric(a, b), std::invalid_argument);

  const RDCurve dip = curve({{0.1, 20}, {0.2, 25}, {0.3, 23}, {0.4, 24}});
  CHECK_THROWS_AS(bd_rate(a, dip), std::invalid_argument);
}

TEST_CASE("entropy identity on the Y-mod-2 example") {
  // Y uniform on {0,1,2}, Z = Y mod 2.
  const DiscreteJoint j = joint_of({{1.0 / 3, 0.0}, {0.0, 1.0 / 3}, {1.0 / 3, 0.0}});
  const EntropyReport r = entropy_identity_check(j);
  const double log2_3 = std::log2(3.0);
  CHECK(r.h_y == doctest::Approx(log2_3).epsilon(1e-12));
  CHECK(r.h_y == doctest::Approx(1.58496).epsilon(1e-5));
  CHECK(r.h_z == doctest::Approx(log2_3 - 2.0 / 3.0).epsilon(1e-12));
  CHECK(r.h_z == doctest::Approx(0.91830).epsilon(1e-5));
  CHECK(r.h_y_given_z == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(r.h_y_given_z == doctest::Approx(0.66667).epsilon(1e-4));
  CHECK(r.h_z_given_y == 0.0);
  CHECK(r.z_is_function_of_y);
  CHECK(r.function_gap <= 1e-12);
  CHECK(r.chain_gap <= 1e-12);
  CHECK(std::abs(r.h_y_given_z + r.h_z - r.h_y) <= 1e-12);
}

TEST_CASE("entropy identity on independence and copy") {
  // Independent: p(y,z) = p(y) q(z).
  const DiscreteJoint ind = joint_of({{0.2 * 0.7, 0.2 * 0.3},
                                      {0.5 * 0.7, 0.5 * 0.3},
                                      {0.3 * 0.7, 0.3 * 0.3}});
  const EntropyReport ri = entropy_identity_check(ind);
  CHECK(ri.h_y_given_z == doctest::Approx(ri.h_y).epsilon(1e-12));
  CHECK_FALSE(ri.z_is_function_of_y);

  const DiscreteJoint copy = joint_of({{0.25, 0.0}, {0.0, 0.75}});
  const EntropyReport rc = entropy_identity_check(copy);
  CHECK(rc.h_y_given_z <= 1e-12);
  CHECK(rc.h_z == doctest::Approx(rc.h_y).epsilon(1e-12));
  CHECK(rc.z_is_function_of_y);
}

TEST_CASE("entropy identity on 1000 random functional joints") {
  Rng rng(29);
  for (int trial = 0; trial < 1000; ++trial) {
    const int ny = rng.uniform_int(2, 8);
    const int nz = rng.uniform_int(1, ny);
    std::vector<double> py(size_t(ny), 0.0);
    double sum = 0.0;
    for (auto& p : py) {
      p = rng.uniform() + 1e-3;
      sum += p;
    }
    for (auto& p : py) p /= sum;
    DiscreteJoint j;
    j.table = Tensor<double>({ny, nz});
    for (int y = 0; y < ny; ++y) {
      const int z = (y < nz) ? y : rng.uniform_int(0, nz - 1);
      j.table(y, z) += py[size_t(y)];
    }
    const EntropyReport r = entropy_identity_check(j);
    CHECK(r.z_is_function_of_y);
    CHECK(r.function_gap <= 1e-12);
    CHECK(r.chain_gap <= 1e-12);
  }
}

TEST_CASE("entropy chain rule on fully random joints") {
  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const int ny = rng.uniform_int(2, 6), nz = rng.uniform_int(2, 6);
    DiscreteJoint j;
    j.table = Tensor<double>({ny, nz});
    double sum = 0.0;
    for (Eigen::Index i = 0; i < j.table.size(); ++i) {
      j.table[i] = rng.uniform();
      sum += j.table[i];
    }
    j.table.flat() /= sum;
    const EntropyReport r = entropy_identity_check(j);
    CHECK(r.chain_gap <= 1e-12);
    CHECK(std::abs(r.h_yz - (r.h_z + r.h_y_given_z)) <= 1e-12);
    CHECK(std::abs(r.h_yz - (r.h_y + r.h_z_given_y)) <= 1e-12);
  }
}

TEST_CASE("entropy checker rejects malformed tables") {
  DiscreteJoint rank1;
  rank1.table = Tensor<double>({4});
  CHECK_THROWS_AS(entropy_identity_check(rank1), std::invalid_argument);

  CHECK_THROWS_AS(entropy_identity_check(joint_of({{0.5, -0.1}, {0.3, 0.3}})),
                  std::invalid_argument);
  CHECK_THROWS_AS(entropy_identity_check(joint_of({{0.5, 0.1}, {0.3, 0.3}})),
                  std::invalid_argument);
}

TEST_CASE("sweep csv round-trips byte for byte") {
  std::vector<SweepRow> rows;
  rows.push_back({"picd", "screen", 1.0, 0.1, 27.123456, 0.875, 7});
  rows.push_back({"codec", "screen", 0.3, 1.0 / 3.0, 24.0, 0.5, 0});
  rows.push_back({"picd", "natural", 10.0, 0.0125, 31.25, 1.0, UINT64_MAX});

  const std::string csv = sweep_csv(rows);
  CHECK(csv.rfind("method,mode,lambda,bpp,psnr,jaccard,seed\n", 0) == 0);

  const std::vector<SweepRow> back = parse_sweep_csv(csv);
  REQUIRE(back.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].method == rows[i].method);
    CHECK(back[i].mode == rows[i].mode);
    CHECK(back[i].lambda == rows[i].lambda);
    CHECK(back[i].bpp == rows[i].bpp);
    CHECK(back[i].psnr == rows[i].psnr);
    CHECK(back[i].jaccard == rows[i].jaccard);
    CHECK(back[i].seed == rows[i].seed);
  }
  CHECK(sweep_csv(back) == csv);
  CHECK(sweep_csv(rows) == csv);  // deterministic serialization
}

TEST_CASE("sweep csv rejects malformed input") {
  CHECK_THROWS_AS(parse_sweep_csv("nope\n1,2,3\n"), std::runtime_error);
  CHECK_THROWS_AS(
      parse_sweep_csv("method,mode,lambda,bpp,psnr,jaccard,seed\npicd,screen,1,2\n"),
      std::runtime_error);
  CHECK_THROWS_AS(parse_sweep_csv(
                      "method,mode,lambda,bpp,psnr,jaccard,seed\npicd,screen,x,1,2,3,4\n"),
                  std::runtime_error);
}
