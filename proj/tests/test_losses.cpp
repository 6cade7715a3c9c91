#include "doctest.h"

#include "autocl/losses.hpp"
#include "autocl/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace autocl;

namespace {

double max_fd_error_nt(Mat<double> y1, Mat<double> y2, DenominatorMode mode) {
  const auto r = nt_xent_with_grad<double>(y1, y2, 0.1, mode);
  auto f = [&] { return nt_xent<double>(y1, y2, 0.1, mode); };
  double worst = 0;
  for (Index i = 0; i < y1.size(); ++i) {
    worst = std::max(worst, oracle::rel_error(r.grad_first.data()[i], oracle::central_difference(f, y1.data()[i], 1e-6)));
    worst = std::max(worst, oracle::rel_error(r.grad_second.data()[i], oracle::central_difference(f, y2.data()[i], 1e-6)));
  }
  return worst;
}

// Gradient check of the whole AutoCL objective under `cfg` on a tiny model.
double model_grad_error(ModelSpec spec, const LossConfig& cfg) {
  Rng data_rng(31);
  const auto x = testutil::random_seq(4, spec.window, spec.channels, data_rng);
  AutoclModel<double> live = init_model<double>(spec, 17);
  AutoclModel<double> frozen = live;
  live.zero_grad();
  Rng rng(5);
  auto f = autocl_forward(live, x, true, &rng);
  autocl_backward(live, f, x, cfg);
  const Mat<double> y_used = f.trace.y;
  return oracle::check_all_parameters(live, [&] { return oracle::surrogate_loss(live, frozen, x, y_used, cfg, 5); }, 1e-5).max_rel_error;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("NT-Xent matches the brute-force double loop") {
    Rng rng(1);
    for (int b = 0; b < 50; ++b) {
      const Index N = 2 + b % 5, D = 1 + b % 9;
      const Mat<double> y1 = testutil::random_mat(N, D, rng), y2 = testutil::random_mat(N, D, rng);
      for (double tau : {0.1, 0.5, 2.0}) {
        CHECK(nt_xent<double>(y1, y2, tau) == doctest::Approx(oracle::nt_xent(oracle::to_rows(y1), oracle::to_rows(y2), tau)).epsilon(1e-10));
        CHECK(nt_xent<double>(y1, y2, tau, DenominatorMode::first_view_only) ==
              doctest::Approx(oracle::nt_xent(oracle::to_rows(y1), oracle::to_rows(y2), tau, false)).epsilon(1e-10));
      }
    }
  }

  TEST_CASE("NT-Xent closed form with orthogonal rows") {
    Mat<double> e = Mat<double>::Zero(2, 4);
    e(0, 0) = 1;
    e(1, 1) = 1;
    const double v = nt_xent<double>(e, e, 0.1);
    CHECK(v == doctest::Approx(std::log1p(2 * std::exp(-10.0))).epsilon(1e-12));
    CHECK(std::abs(v - 9.08e-5) <= 1e-7);
  }

  TEST_CASE("NT-Xent is invariant to positive row scaling") {
    Rng rng(2);
    const Mat<double> y1 = testutil::random_mat(4, 8, rng), y2 = testutil::random_mat(4, 8, rng);
    Mat<double> s = y1;
    s.row(2) *= 37.0;
    CHECK(nt_xent<double>(s, y2, 0.1) == doctest::Approx(nt_xent<double>(y1, y2, 0.1)).epsilon(1e-12));
  }

  TEST_CASE("raising the positive similarity never raises the loss") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const Mat<double> y1 = testutil::random_mat(3, 5, rng);
      Mat<double> y2 = testutil::random_mat(3, 5, rng);
      // rotate y2[0] toward y1[0] in small steps; other embeddings fixed
      const RowVec<double> start = y2.row(0).normalized(), target = y1.row(0).normalized();
      double prev = std::numeric_limits<double>::infinity();
      for (int k = 0; k <= 10; ++k) {
        y2.row(0) = ((1.0 - k / 10.0) * start + (k / 10.0) * target).normalized();
        const double cur = nt_xent<double>(y1, y2, 0.1, DenominatorMode::first_view_only);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
      }
    }
  }

  TEST_CASE("NT-Xent errors") {
    Mat<double> one = Mat<double>::Ones(1, 3);
    CHECK_THROWS(nt_xent<double>(one, one, 0.1));
    Mat<double> z = Mat<double>::Ones(2, 3);
    z.row(1).setZero();
    CHECK_THROWS(nt_xent<double>(z, Mat<double>::Ones(2, 3), 0.1));
    CHECK_THROWS(nt_xent<double>(Mat<double>::Ones(2, 3), Mat<double>::Ones(2, 3), 0.0));
    CHECK_THROWS(nt_xent<double>(Mat<double>::Ones(2, 3), Mat<double>::Ones(3, 3), 0.1));
  }

  TEST_CASE("NT-Xent analytic gradient") {
    Rng rng(4);
    for (auto mode : {DenominatorMode::symmetric, DenominatorMode::first_view_only})
      CHECK(max_fd_error_nt(testutil::random_mat(4, 6, rng), testutil::random_mat(4, 6, rng), mode) < 1e-6);
  }

  TEST_CASE("Pearson term: identities, affine invariance, sign flip") {
    Rng rng(5);
    const auto x = testutil::random_seq(3, 10, 2, rng);
    auto mapped = [&](double a, double b) {
      Sequences<double> s = x;
      s.values = (a * x.values.array() + b).matrix();
      return s;
    };
    CHECK(pearson_term(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson_term(x, mapped(-1, 0)) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pearson_term(x, mapped(2, 3)) == doctest::Approx(1.0).epsilon(1e-12));
    const auto g = testutil::random_seq(3, 10, 2, rng);
    Sequences<double> g_aff = g, g_neg = g;
    g_aff.values = (0.3 * g.values.array() - 8.0).matrix();
    g_neg.values = -g.values;
    CHECK(pearson_term(x, g_aff) == doctest::Approx(pearson_term(x, g)).epsilon(1e-12));
    CHECK(pearson_term(x, g_neg) == doctest::Approx(-pearson_term(x, g)).epsilon(1e-12));
    CHECK(pearson_term(g, x) == doctest::Approx(pearson_term(x, g)).epsilon(1e-12));
  }

  TEST_CASE("Pearson term matches the reference per-sample mean and stays in range") {
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
      const auto a = testutil::random_seq(1 + i % 4, 3 + i % 7, 1 + i % 3, rng);
      auto b = testutil::random_seq(a.count, a.length, a.channels(), rng);
      if (i % 2) b.values = 5.0 * a.values + 1e-10 * b.values;
      double ref = 0;
      for (Index n = 0; n < a.count; ++n) {
        std::vector<double> u, v;
        for (Index k = 0; k < a.sequence(n).size(); ++k) {
          u.push_back(a.sequence(n).data()[k]);
          v.push_back(b.sequence(n).data()[k]);
        }
        ref += oracle::pearson(u, v) / static_cast<double>(a.count);
      }
      const double r = pearson_term(a, b);
      CHECK(r == doctest::Approx(ref).epsilon(1e-9));
      CHECK(r >= -1.0);
      CHECK(r <= 1.0);
    }
  }

  TEST_CASE("Pearson term gradient and whole-batch mode") {
    Rng rng(7);
    const auto x = testutil::random_seq(3, 6, 2, rng);
    for (auto mode : {CorrelationMode::per_sample, CorrelationMode::whole_batch}) {
      auto g = testutil::random_seq(3, 6, 2, rng);
      const auto r = pearson_term_with_grad(x, g, mode);
      auto f = [&] { return pearson_term(x, g, mode); };
      for (Index i = 0; i < g.values.size(); ++i)
        CHECK(oracle::rel_error(r.grad_generated.values.data()[i], oracle::central_difference(f, g.values.data()[i], 1e-6)) < 1e-6);
    }
    std::vector<double> a(x.values.data(), x.values.data() + x.values.size());
    auto g = testutil::random_seq(3, 6, 2, rng);
    std::vector<double> b(g.values.data(), g.values.data() + g.values.size());
    CHECK(pearson_term(x, g, CorrelationMode::whole_batch) == doctest::Approx(oracle::pearson(a, b)).epsilon(1e-12));
  }

  TEST_CASE("zero-variance sample names its index") {
    Rng rng(8);
    const auto x = testutil::random_seq(3, 6, 2, rng);
    Sequences<double> g = x;
    g.sequence(2).setConstant(4.0);
    CHECK_THROWS_WITH(pearson_term(x, g), doctest::Contains("index 2"));
  }

  TEST_CASE("combined loss composes its terms") {
    Rng rng(9);
    ForwardTrace<double> t;
    const auto x = testutil::random_seq(4, 6, 2, rng);
    t.y = testutil::random_mat(4, 5, rng);
    t.y_gen = testutil::random_mat(4, 5, rng);
    t.x_gen = x;
    LossConfig cfg;
    cfg.cr_enabled = false;
    const auto off = autocl_loss(t, x, cfg);
    CHECK(off.value == nt_xent<double>(t.y, t.y_gen, 0.1));
    CHECK(!off.pearson.has_value());
    CHECK(off.grad_x_gen.values.isZero(0));
    cfg.cr_enabled = true;
    const auto on = autocl_loss(t, x, cfg);
    CHECK(on.value == doctest::Approx(off.value + 1.0).epsilon(1e-12));
    CHECK(*on.pearson == doctest::Approx(1.0).epsilon(1e-12));
    cfg.cr_weight = 0.25;
    CHECK(autocl_loss(t, x, cfg).value == doctest::Approx(off.value + 0.25).epsilon(1e-12));
  }

  TEST_CASE("stop-gradient blocks exactly the NT-Xent copy of y") {
    Rng rng(10);
    ForwardTrace<double> t;
    const auto x = testutil::random_seq(4, 6, 2, rng);
    t.y = testutil::random_mat(4, 5, rng);
    t.y_gen = testutil::random_mat(4, 5, rng);
    t.x_gen = testutil::random_seq(4, 6, 2, rng);
    LossConfig cfg;
    cfg.sg_enabled = true;
    CHECK(autocl_loss(t, x, cfg).grad_y_used.isZero(0));
    cfg.sg_enabled = false;
    const auto open = autocl_loss(t, x, cfg);
    CHECK(open.grad_y_used.cwiseAbs().maxCoeff() > 1e-6);
    // and without SG the slot gradient is the finite-difference derivative
    auto f = [&] { return nt_xent<double>(t.y, t.y_gen, 0.1); };
    for (Index i = 0; i < t.y.size(); ++i)
      CHECK(oracle::rel_error(open.grad_y_used.data()[i], oracle::central_difference(f, t.y.data()[i], 1e-6)) < 1e-6);
  }

  TEST_CASE("config validation") {
    LossConfig c;
    CHECK_NOTHROW(c.validate());
    c.tau = 0;
    CHECK_THROWS(c.validate());
    c = LossConfig{};
    c.cr_weight = -1;
    CHECK_THROWS(c.validate());
  }

  TEST_CASE("full-model gradients across configurations") {
    ModelSpec spec = testutil::tiny_spec();
    LossConfig cfg;
    SUBCASE("CR on, SG chain, variant E") { CHECK(model_grad_error(spec, cfg) < 1e-3); }
    SUBCASE("SG detach") {
      cfg.sg_mode = StopGradientMode::detach;
      CHECK(model_grad_error(spec, cfg) < 1e-3);
    }
    SUBCASE("SG off, CR off") {
      cfg.sg_enabled = false;
      cfg.cr_enabled = false;
      CHECK(model_grad_error(spec, cfg) < 1e-3);
    }
    SUBCASE("variant D, whole-batch correlation, first-view denominator") {
      spec.variant = GeneratorVariant::data;
      cfg.sg_enabled = false;
      cfg.correlation_mode = CorrelationMode::whole_batch;
      cfg.denominator_mode = DenominatorMode::first_view_only;
      CHECK(model_grad_error(spec, cfg) < 1e-3);
    }
    SUBCASE("concatenating BiGRU merge") {
      spec.gru_merge = nn::BiMerge::concat;
      CHECK(model_grad_error(spec, cfg) < 1e-3);
    }
  }

  TEST_CASE("constant generator output under SG leaves the encoder without gradient") {
    const ModelSpec spec = testutil::tiny_spec();
    Rng rng(11);
    const auto x = testutil::random_seq(4, 16, 2, rng);
    const auto constant = testutil::random_seq(4, 16, 2, rng);
    LossConfig cfg;
    cfg.cr_enabled = false;
    AutoclModel<double> m = init_model<double>(spec, 1);
    Rng r1(3);
    autocl_step(m, x, cfg, r1, &constant);
    m.encoder.visit([](nn::Param<double>& p) { CHECK(p.grad.isZero(0)); });
    m.projector.visit([](nn::Param<double>& p) { CHECK(p.grad.isZero(0)); });
  }
}
