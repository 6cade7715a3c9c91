#include "doctest.h"

#include <algorithm>

#include "autocl/augment.hpp"
#include "test_util.hpp"

using namespace autocl;
using namespace autocl::augment;

TEST_SUITE("augment") {
  TEST_CASE("jitter: sigma 0 is the identity, sigma 0.1 has the right moments") {
    Rng rng(1);
    const auto x = testutil::random_seq(10, 100, 100, rng);  // 1e5 values
    CHECK(jitter(x, 0.0, rng).values == x.values);
    const auto y = jitter(x, 0.1, rng);
    const Mat<double> diff = y.values - x.values;
    const Eigen::ArrayXd d = Eigen::Map<const Eigen::ArrayXd>(diff.data(), diff.size());
    const double mean = d.mean();
    const double sd = std::sqrt((d - mean).square().sum() / static_cast<double>(d.size() - 1));
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(sd - 0.1) < 0.01);
    CHECK_THROWS(jitter(x, -0.1, rng));
  }

  TEST_CASE("scale: one factor per (sample, channel), mean factor near 1") {
    Rng rng(2);
    Sequences<double> x(100, 8, 100);
    x.values.setConstant(2.0);
    for (Index n = 0; n < x.count; ++n) x(n, 3, 0) = 0.0;
    CHECK(scale(x, 0.0, rng).values == x.values);
    const auto y = scale(x, 0.1, rng);
    double sum = 0;
    for (Index n = 0; n < x.count; ++n)
      for (Index c = 0; c < x.channels(); ++c) {
        const double f = y(n, 0, c) / x(n, 0, c);
        sum += f;
        for (Index t = 0; t < x.length; ++t)
          if (x(n, t, c) != 0.0) CHECK(y(n, t, c) / x(n, t, c) == doctest::Approx(f).epsilon(1e-12));
      }
    CHECK(std::abs(sum / 1e4 - 1.0) < 0.01);
    CHECK_THROWS(scale(x, -1.0, rng));
  }

  TEST_CASE("permute with a forced order reorders ramp quarters") {
    Sequences<double> x(1, 8, 1);
    for (Index t = 0; t < 8; ++t) x(0, t, 0) = static_cast<double>(t);
    const auto y = permute_with(x, {{2, 0, 3, 1}}, 4);
    std::vector<double> got;
    for (Index t = 0; t < 8; ++t) got.push_back(y(0, t, 0));
    CHECK(got == std::vector<double>{4, 5, 0, 1, 6, 7, 2, 3});
  }

  TEST_CASE("segment bounds spread the remainder over the leading segments") {
    const auto b = segment_bounds(10, 4);
    REQUIRE(b.size() == 4);
    CHECK(b[0] == std::pair<Index, Index>{0, 3});
    CHECK(b[1] == std::pair<Index, Index>{3, 3});
    CHECK(b[2] == std::pair<Index, Index>{6, 2});
    CHECK(b[3] == std::pair<Index, Index>{8, 2});
  }

  TEST_CASE("permute: one segment is the identity, multisets are preserved") {
    Rng rng(3);
    const auto x = testutil::random_seq(6, 37, 3, rng);
    CHECK(permute(x, 1, rng).values == x.values);
    for (Index segs : {2, 4, 5, 37}) {
      const auto y = permute(x, segs, rng);
      CHECK(y.count == x.count);
      CHECK(y.length == x.length);
      for (Index n = 0; n < x.count; ++n)
        for (Index c = 0; c < x.channels(); ++c) {
          std::vector<double> a, b;
          for (Index t = 0; t < x.length; ++t) {
            a.push_back(x(n, t, c));
            b.push_back(y(n, t, c));
          }
          std::sort(a.begin(), a.end());
          std::sort(b.begin(), b.end());
          CHECK(a == b);
        }
    }
    CHECK_THROWS(permute(x, 0, rng));
    CHECK_THROWS(permute(x, 38, rng));
  }

  TEST_CASE("make_views: trivial pairs and seeded reproducibility") {
    Rng rng(4);
    const auto x = testutil::random_seq(4, 16, 2, rng);
    auto [a, b] = make_views(x, AugmentationOp::original(), AugmentationOp::original(), rng);
    CHECK(a.values == x.values);
    CHECK(b.values == x.values);
    auto [c, d] = make_views(x, AugmentationOp::original(), AugmentationOp::jitter(0.0), rng);
    CHECK(c.values == x.values);
    CHECK(d.values == x.values);

    Rng r1(9), r2(9);
    const auto [s1, p1] = make_views(x, AugmentationOp::scale(), AugmentationOp::permute(), r1);
    const auto [s2, p2] = make_views(x, AugmentationOp::scale(), AugmentationOp::permute(), r2);
    CHECK(s1.values == s2.values);
    CHECK(p1.values == p2.values);
    CHECK(s1.values != x.values);
  }

  TEST_CASE("augmentation codes parse and round trip") {
    const auto [a, b] = parse_pair("SP");
    CHECK(a.kind == Kind::scale);
    CHECK(b.kind == Kind::permute);
    CHECK(pair_code(a, b) == "SP");
    CHECK(parse_op('J').kind == Kind::jitter);
    CHECK(parse_op('O').kind == Kind::original);
    CHECK_THROWS(parse_op('X'));
    CHECK_THROWS(parse_pair("S"));
    CHECK_THROWS(parse_pair("SPJ"));
  }

  TEST_CASE("all operators preserve shape") {
    Rng rng(5);
    const auto x = testutil::random_seq(3, 20, 4, rng);
    for (const auto& op : {AugmentationOp::original(), AugmentationOp::jitter(), AugmentationOp::scale(), AugmentationOp::permute()}) {
      const auto y = apply(x, op, rng);
      CHECK(same_shape(x, y));
    }
  }
}
