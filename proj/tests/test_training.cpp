#include "doctest.h"

#include "autocl/config.hpp"
#include "autocl/optim.hpp"
#include "autocl/pipeline.hpp"
#include "autocl/training.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace autocl;
using testutil::TempDir;

namespace {

WindowedDataset small_synthetic(std::int64_t per_class = 20) {
  SyntheticSpec s;
  s.windows_per_class = per_class;
  s.window = 32;
  s.channels = 3;
  return generate_synthetic(s);
}

TrainConfig quick_config(int epochs = 3) {
  TrainConfig tc;
  tc.batch_size = 16;
  tc.max_epochs = epochs;
  tc.seed = 3;
  return tc;
}

ModelSpec small_spec(const WindowedDataset& ds) {
  ModelSpec s;
  s.conv_channels = {8, 8, 16};
  s.proj_hidden = 32;
  s.proj_out = 16;
  return spec_for(ds, s);
}

std::vector<Mat<float>> values_of(AutoclModel<float>& m) {
  std::vector<Mat<float>> out;
  m.visit_params([&](nn::Param<float>& p) { out.push_back(p.value); });
  m.visit_buffers([&](nn::Buffer<float>& b) { out.push_back(b.value); });
  return out;
}

}  // namespace

TEST_SUITE("optimizer") {
  TEST_CASE("first Adam step moves a unit gradient by about -lr") {
    nn::Param<double> p("p", Mat<double>::Constant(1, 1, 0.5));
    p.grad(0, 0) = 1.0;
    AdamState<double> st;
    adam_step<double>({&p}, st, AdamConfig{});
    CHECK(p.value(0, 0) - 0.5 == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-9));
  }

  TEST_CASE("zero gradient without decay is a fixed point") {
    nn::Param<double> p("p", Mat<double>::Constant(2, 2, 0.7));
    AdamState<double> st;
    for (int i = 0; i < 3; ++i) adam_step<double>({&p}, st, AdamConfig{});
    CHECK((p.value.array() == 0.7).all());
  }

  TEST_CASE("weight decay shrinks parameters in both modes") {
    for (auto mode : {WeightDecayMode::decoupled, WeightDecayMode::l2}) {
      nn::Param<double> p("p", Mat<double>::Constant(1, 2, 0.7));
      p.value(0, 1) = -0.4;
      AdamState<double> st;
      AdamConfig cfg;
      cfg.weight_decay = 1e-2;
      cfg.decay_mode = mode;
      adam_step<double>({&p}, st, cfg);
      CHECK(std::abs(p.value(0, 0)) < 0.7);
      CHECK(std::abs(p.value(0, 1)) < 0.4);
    }
    // decoupled decay is exactly multiplicative when the gradient is zero
    nn::Param<double> q("q", Mat<double>::Constant(1, 1, 2.0));
    AdamState<double> st;
    AdamConfig cfg;
    cfg.weight_decay = 0.5;
    adam_step<double>({&q}, st, cfg);
    CHECK(q.value(0, 0) == doctest::Approx(2.0 * (1 - 1e-3 * 0.5)).epsilon(1e-12));
  }

  TEST_CASE("non-finite gradients are rejected before any update") {
    nn::Param<double> a("a", Mat<double>::Constant(1, 1, 1.0)), b("b", Mat<double>::Constant(1, 1, 1.0));
    a.grad(0, 0) = 1.0;
    b.grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    AdamState<double> st;
    CHECK_THROWS_WITH_AS(adam_step<double>({&a, &b}, st, AdamConfig{}), doctest::Contains("b"), std::domain_error);
    CHECK(a.value(0, 0) == 1.0);
  }

  TEST_CASE("gradient clipping bounds the joint norm") {
    nn::Param<double> a("a", Mat<double>::Zero(1, 2)), b("b", Mat<double>::Zero(1, 1));
    a.grad << 3, 4;
    b.grad << 12;
    CHECK(clip_grad_norm<double>({&a, &b}, 5.0) == doctest::Approx(13.0));
    CHECK(std::sqrt(a.grad.squaredNorm() + b.grad.squaredNorm()) == doctest::Approx(5.0));
    CHECK(a.grad(0, 1) / a.grad(0, 0) == doctest::Approx(4.0 / 3.0));
    CHECK(clip_grad_norm<double>({&a, &b}, 50.0) == doctest::Approx(5.0));
  }
}

TEST_SUITE("early stopping") {
  TEST_CASE("plateau after epoch 2 stops at epoch 7") {
    TrainState st;
    int stopped_at = 0;
    for (double l : {5.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0}) {
      if (early_stop_update(st, l, 5).stop) {
        stopped_at = st.epoch;
        break;
      }
    }
    CHECK(stopped_at == 7);
    CHECK(st.best_epoch == 2);
  }

  TEST_CASE("strictly decreasing losses run to max_epochs") {
    TrainState st;
    int e = 0;
    for (; e < 100; ++e)
      if (early_stop_update(st, 100.0 - e, 5, 30).stop) break;
    CHECK(st.epoch == 30);
    CHECK(st.best_epoch == 30);
  }

  TEST_CASE("epochs_since_best resets on improvement") {
    TrainState st;
    early_stop_update(st, 3, 5);
    early_stop_update(st, 2, 5);
    early_stop_update(st, 2.5, 5);
    CHECK(st.epochs_since_best == 1);
    CHECK(early_stop_update(st, 1.9, 5).improved);
    CHECK(st.epochs_since_best == 0);
    CHECK(st.best_epoch == 4);
  }

  TEST_CASE("halts exactly patience epochs after the best, for several patiences") {
    for (int patience = 1; patience <= 6; ++patience) {
      TrainState st;
      const std::vector<double> trace = {9, 8, 7, 7.5, 7.2, 7.1, 7.3, 7.0001, 8, 9, 10, 11, 12};
      for (double l : trace)
        if (early_stop_update(st, l, patience).stop) break;
      CHECK(st.epoch - st.best_epoch == patience);
    }
  }
}

TEST_SUITE("training") {
  TEST_CASE("AutoCL pretraining lowers the loss and keeps the best epoch") {
    const WindowedDataset ds = small_synthetic(40);
    TrainConfig tc = quick_config(12);
    std::vector<EpochRecord> seen;
    Checkpoint ck = pretrain_autocl(ds, small_spec(ds), tc, [&](const EpochRecord& r) { seen.push_back(r); });
    REQUIRE(!ck.history.empty());
    CHECK(seen.size() == ck.history.size());
    double best = ck.history[0].loss;
    int arg = 1;
    for (const auto& r : ck.history)
      if (r.loss < best) {
        best = r.loss;
        arg = r.epoch;
      }
    CHECK(ck.best_epoch == arg);
    CHECK(best < ck.history[0].loss);
    for (const auto& r : ck.history) {
      CHECK(r.cr.has_value());
      CHECK(r.loss == doctest::Approx(r.nt_xent + *r.cr).epsilon(1e-6));
    }
  }

  TEST_CASE("the returned model is the snapshot of the best epoch") {
    const WindowedDataset ds = small_synthetic();
    TrainConfig tc = quick_config(4);
    tc.patience = 1;
    // with patience 1 the run stops right after the first non-improving epoch;
    // rerunning with max_epochs = best_epoch must reproduce the returned weights
    Checkpoint ck = pretrain_autocl(ds, small_spec(ds), tc);
    TrainConfig upto = tc;
    upto.max_epochs = ck.best_epoch;
    Checkpoint ref = pretrain_autocl(ds, small_spec(ds), upto);
    CHECK(values_of(ck.model) == values_of(ref.model));
  }

  TEST_CASE("same seed, same log; different seed, different log") {
    const WindowedDataset ds = small_synthetic();
    auto log = [&](std::uint64_t seed, Method m) {
      TrainConfig tc = quick_config(2);
      tc.seed = seed;
      tc.method = m;
      std::string s;
      for (const auto& r : pretrain(ds, small_spec(ds), tc).history) s += to_json(r).dump();
      return s;
    };
    CHECK(log(1, Method::autocl) == log(1, Method::autocl));
    CHECK(log(1, Method::autocl) != log(2, Method::autocl));
    CHECK(log(1, Method::simclr) == log(1, Method::simclr));
  }

  TEST_CASE("disabling CR removes the component from the log") {
    const WindowedDataset ds = small_synthetic();
    TrainConfig tc = quick_config(1);
    tc.loss.cr_enabled = false;
    tc.loss.sg_enabled = false;
    const Checkpoint ck = pretrain_autocl(ds, small_spec(ds), tc);
    CHECK(!ck.history[0].cr.has_value());
    CHECK(!to_json(ck.history[0])["components"].contains("cr"));
    CHECK(ck.history[0].loss == ck.history[0].nt_xent);
  }

  TEST_CASE("SimCLR with identical views reduces to NT-Xent of identical embeddings") {
    ModelSpec spec = testutil::tiny_spec();
    spec.dropout = 0.0;
    AutoclModel<double> m = init_model<double>(spec, 2);
    Rng rng(4);
    const auto x = testutil::random_seq(5, 16, 2, rng);
    StreamCache<double> c;
    AutoclModel<double> copy = m;
    const Mat<double> y = stream_forward(copy, x, true, &rng, c);
    LossConfig cfg;
    const double loss = simclr_step(m, x, x, cfg, rng);
    CHECK(loss == doctest::Approx(oracle::nt_xent(oracle::to_rows(y), oracle::to_rows(y), 0.1)).epsilon(1e-10));
    // every anchor's positive has similarity exactly 1
    const auto rows = oracle::to_rows(y);
    for (const auto& r : rows) CHECK(oracle::cosine(r, r) == doctest::Approx(1.0));
  }

  TEST_CASE("SimCLR with scaling and permutation runs end to end") {
    const WindowedDataset ds = small_synthetic();
    TrainConfig tc = quick_config(2);
    tc.method = Method::simclr;
    std::tie(tc.aug_a, tc.aug_b) = augment::parse_pair("SP");
    const Checkpoint ck = pretrain(ds, small_spec(ds), tc);
    CHECK(ck.history.size() == 2);
    CHECK(std::isfinite(ck.history.back().loss));
  }

  TEST_CASE("variant D pretraining runs") {
    const WindowedDataset ds = small_synthetic();
    ModelSpec spec = small_spec(ds);
    spec.variant = GeneratorVariant::data;
    const Checkpoint ck = pretrain_autocl(ds, spec, quick_config(1));
    CHECK(std::isfinite(ck.history[0].loss));
  }

  TEST_CASE("training errors") {
    const WindowedDataset ds = small_synthetic(3);
    TrainConfig tc = quick_config(1);
    CHECK_THROWS_AS(pretrain_autocl(ds, small_spec(ds), tc), TrainingError);  // 9 windows < batch of 16
    ModelSpec wrong = small_spec(ds);
    wrong.channels = 4;
    tc.batch_size = 4;
    CHECK_THROWS_AS(pretrain_autocl(ds, wrong, tc), TrainingError);
    tc.patience = 0;
    CHECK_THROWS(pretrain_autocl(ds, small_spec(ds), tc));
  }

  TEST_CASE("checkpoint round trip and damage detection") {
    TempDir tmp;
    const WindowedDataset ds = small_synthetic();
    Checkpoint ck = pretrain_autocl(ds, small_spec(ds), quick_config(2));
    save_checkpoint(ck, tmp / "ck.bin");
    Checkpoint back = load_checkpoint(tmp / "ck.bin");
    CHECK(values_of(back.model) == values_of(ck.model));
    CHECK(back.best_epoch == ck.best_epoch);
    CHECK(back.history.size() == ck.history.size());
    CHECK(to_json(back.config) == to_json(ck.config));
    CHECK(to_json(back.spec) == to_json(ck.spec));

    const std::string bytes = testutil::slurp(tmp / "ck.bin");
    testutil::spit(tmp / "cut.bin", bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_checkpoint(tmp / "cut.bin"), IntegrityError);
    testutil::spit(tmp / "junk.bin", "hello world, not a checkpoint");
    CHECK_THROWS_AS(load_checkpoint(tmp / "junk.bin"), IntegrityError);
    CHECK_THROWS_AS(load_checkpoint(tmp / "none.bin"), IntegrityError);
  }
}

TEST_SUITE("config") {
  TEST_CASE("JSON round trips and unknown keys") {
    TrainConfig tc;
    tc.method = Method::simclr;
    tc.loss.sg_mode = StopGradientMode::detach;
    tc.aug_a = augment::AugmentationOp::jitter(0.2);
    const TrainConfig back = train_config_from_json(to_json(tc));
    CHECK(to_json(back) == to_json(tc));
    CHECK(back.aug_a.sigma == 0.2);

    ModelSpec ms;
    ms.variant = GeneratorVariant::data;
    ms.gru_merge = nn::BiMerge::concat;
    CHECK(to_json(model_spec_from_json(to_json(ms))) == to_json(ms));

    nlohmann::json bad = to_json(tc);
    bad["loss"]["temperature"] = 0.2;
    CHECK_THROWS_WITH(train_config_from_json(bad), doctest::Contains("temperature"));
    CHECK_THROWS(model_spec_from_json({{"windw", 128}}));
    CHECK_THROWS(synthetic_spec_from_json({{"classes", 3}}));
    CHECK(synthetic_spec_from_json({{"num_classes", 4}}).num_classes == 4);
  }
}
