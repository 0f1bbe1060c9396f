// End-to-end model: forward oracles, loss, reverse-mode gradients, training.

#include "gprop/model.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "test_util.hpp"

namespace gprop {
namespace {

using testing::dense;
using testing::random_graph;
using testing::random_matrix;

Dataset random_instance(std::uint64_t seed, Index n = 10, Index d0 = 3, int classes = 3) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.graph = random_graph(static_cast<int>(n), 0.3, seed);
  d.features = random_matrix(n, d0, rng);
  d.num_classes = classes;
  std::uniform_int_distribution<int> cls(0, classes - 1);
  for (Index i = 0; i < n; ++i) d.labels.push_back(cls(rng));
  d.train.assign(n, false);
  d.val.assign(n, false);
  d.test.assign(n, false);
  for (Index i = 0; i < n; ++i) (i % 3 == 2 ? d.test : d.train)[i] = true;
  d.original_ids.resize(n);
  return d;
}

ModelConfig base_config(Backend backend, Index d0 = 3, Index d = 4, int c = 3) {
  ModelConfig cfg;
  cfg.input_dim = d0;
  cfg.embed_dim = d;
  cfg.num_classes = c;
  cfg.backend = backend;
  cfg.propagation.steps = 4;
  cfg.fixed_point.tol = 1e-12;
  return cfg;
}

TEST(Forward, ZeroStepsLinearIdentityHead) {
  const Dataset data = random_instance(1);
  ModelConfig cfg = base_config(Backend::UnrolledUGNN, 3, 3, 3);
  cfg.propagation.steps = 0;
  Model m = make_model(cfg, 2);
  m.params.at("head.weight") = Matrix::Identity(3, 3);
  const auto fr = forward(m, data.graph, data.features);
  EXPECT_LT((fr.logits - data.features * m.params.at("base.0.weight")).norm(), 1e-14);
}

TEST(Forward, UnrolledMatchesDenseRecursion) {
  const Dataset data = random_instance(3);
  ModelConfig cfg = base_config(Backend::UnrolledUGNN);
  cfg.energy = EnergySpec::simple(0.7);
  cfg.propagation.steps = 6;
  cfg.propagation.alpha = 0.2;
  const Model m = make_model(cfg, 4);
  const Matrix L = dense(laplacian(data.graph, LaplacianKind::Combinatorial));
  const Matrix fx = data.features * m.params.at("base.0.weight");
  Matrix y = fx;
  for (int k = 0; k < 6; ++k) y = y - 0.2 * ((y - fx) + 0.7 * L * y);
  const Matrix expected = y * m.params.at("head.weight").transpose();
  EXPECT_LT((forward(m, data.graph, data.features).logits - expected).norm(), 1e-12);
}

TEST(Forward, ImplicitWithZeroWeightIsBasePrediction) {
  const Dataset data = random_instance(5);
  Model m = make_model(base_config(Backend::ImplicitIGNN), 6);
  m.params.at("prop.w_p").setZero();
  const Matrix expected = data.features * m.params.at("base.0.weight") * m.params.at("head.weight").transpose();
  EXPECT_LT((forward(m, data.graph, data.features).logits - expected).norm(), 1e-14);
}

TEST(Forward, DropoutZeroTrainEqualsEval) {
  const Dataset data = random_instance(7);
  ModelConfig cfg = base_config(Backend::UnrolledUGNN);
  cfg.base = BaseKind::Mlp;
  cfg.hidden = {5};
  const Model m = make_model(cfg, 8);
  std::mt19937_64 rng(1);
  EXPECT_EQ(forward(m, data.graph, data.features, Mode::Train, &rng).logits,
            forward(m, data.graph, data.features, Mode::Eval).logits);
}

TEST(Forward, DropoutOnlyInTrainMode) {
  const Dataset data = random_instance(7);
  ModelConfig cfg = base_config(Backend::UnrolledUGNN);
  cfg.dropout = 0.5;
  const Model m = make_model(cfg, 8);
  std::mt19937_64 rng(1);
  EXPECT_NE(forward(m, data.graph, data.features, Mode::Train, &rng).logits,
            forward(m, data.graph, data.features, Mode::Eval).logits);
  EXPECT_EQ(forward(m, data.graph, data.features, Mode::Eval).logits,
            forward(m, data.graph, data.features, Mode::Eval).logits);
}

TEST(Forward, RejectsShapeMismatch) {
  const Dataset data = random_instance(9);
  const Model m = make_model(base_config(Backend::UnrolledUGNN, 5), 1);
  EXPECT_THROW(forward(m, data.graph, data.features), InvalidArgument);
}

TEST(MetaLoss, LargeMarginIsNearZero) {
  Matrix logits(2, 3);
  logits << 50, 0, 0, 0, 0, 50;
  const std::vector<int> y{0, 2};
  const std::vector<Index> rows{0, 1};
  EXPECT_LT(meta_loss(logits, y, rows).loss, 1e-20);
}

TEST(MetaLoss, UniformLogitsGiveLogC) {
  const Matrix logits = Matrix::Constant(4, 5, 0.3);
  const std::vector<int> y{0, 1, 2, 4};
  const std::vector<Index> rows{0, 1, 2, 3};
  EXPECT_NEAR(meta_loss(logits, y, rows).loss, std::log(5.0), 1e-14);
}

TEST(MetaLoss, HandComputedTwoRows) {
  Matrix logits(3, 2);
  logits << 1.0, 2.0, 0.5, -0.5, 9.0, 9.0;
  const std::vector<int> y{0, 0, 1};
  const std::vector<Index> rows{0, 1};  // row 2 unlabeled
  const double l0 = -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(2.0)));
  const double l1 = -std::log(std::exp(0.5) / (std::exp(0.5) + std::exp(-0.5)));
  const auto r = meta_loss(logits, y, rows);
  EXPECT_NEAR(r.loss, 0.5 * (l0 + l1), 1e-14);
  EXPECT_TRUE(r.grad_logits.row(2).isZero());
  EXPECT_NEAR(r.grad_logits.row(0).sum(), 0.0, 1e-15);
}

TEST(Predict, TiesGoToLowestIndexAndScalingInvariant) {
  Matrix logits(2, 3);
  logits << 1.0, 3.0, 3.0, -2.0, -2.0, -5.0;
  EXPECT_EQ(predict_row(logits, 0), 1);
  EXPECT_EQ(predict_row(logits, 1), 0);
  std::mt19937_64 rng(3);
  const Matrix r = random_matrix(20, 4, rng);
  for (double s : {0.01, 1.0, 37.0})
    for (Index i = 0; i < 20; ++i) EXPECT_EQ(predict_row(r, i), predict_row(Matrix(s * r), i));
}

struct GradCase {
  const char* name;
  std::function<void(ModelConfig&)> setup;
};

class GradientCheck : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradientCheck, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset data = random_instance(100 + seed);
    ModelConfig cfg = base_config(Backend::UnrolledUGNN);
    GetParam().setup(cfg);
    const Model m = make_model(cfg, seed);
    const FdCheckReport r = finite_difference_check(m, data);
    EXPECT_TRUE(r.pass) << GetParam().name << " seed " << seed << ": rel " << r.max_rel_error << " at "
                        << r.worst_param << "[" << r.worst_index << "], checked " << r.checked;
    EXPECT_GT(r.checked, r.skipped);
  }
}

Matrix psd(Index d, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  return testing::random_psd(d, rng, scale);
}

INSTANTIATE_TEST_SUITE_P(
    Backends, GradientCheck,
    ::testing::Values(
        GradCase{"ugnn-simple-zero", [](ModelConfig&) {}},
        GradCase{"ugnn-simple-relu", [](ModelConfig& c) { c.energy.phi = PhiFunction::relu(); }},
        GradCase{"ugnn-soft", [](ModelConfig& c) { c.energy.phi = PhiFunction::soft_threshold(0.05); }},
        GradCase{"ugnn-mlp",
                 [](ModelConfig& c) {
                   c.base = BaseKind::Mlp;
                   c.hidden = {5};
                 }},
        GradCase{"ugnn-general-exact",
                 [](ModelConfig& c) {
                   c.energy = EnergySpec::general(psd(4, 1, 0.5), psd(4, 2, 0.5), LaplacianKind::SymNormalized, {},
                                                  PhiFunction::relu());
                 }},
        GradCase{"ugnn-general-literal",
                 [](ModelConfig& c) {
                   c.energy = EnergySpec::general(psd(4, 3, 0.5), psd(4, 4, 0.5));
                   c.propagation.mode = GradientMode::Literal;
                 }},
        GradCase{"ugnn-attention-full",
                 [](ModelConfig& c) {
                   c.energy = EnergySpec::simple(1.0, LaplacianKind::Combinatorial, RhoFunction::log(0.5));
                   c.propagation.alpha = 0.1;
                   c.propagation.attention_schedule = {0, 2};
                   c.attention_gradient = AttentionGradient::Full;
                 }},
        GradCase{"ugnn-attention-general-full",
                 [](ModelConfig& c) {
                   c.energy = EnergySpec::general(psd(4, 5, 0.5), psd(4, 6, 0.5), LaplacianKind::Combinatorial,
                                                  RhoFunction::truncated_lp(1.0, 0.3, 4.0));
                   c.propagation.alpha = 0.1;
                   c.propagation.attention_schedule = {1};
                   c.attention_gradient = AttentionGradient::Full;
                 }},
        GradCase{"ugnn-preconditioned",
                 [](ModelConfig& c) {
                   c.propagation.variant = PropagationVariant::Preconditioned;
                   c.energy.phi = PhiFunction::relu();
                 }},
        GradCase{"ugnn-normalized",
                 [](ModelConfig& c) { c.propagation.variant = PropagationVariant::NormalizedLaplacian; }},
        GradCase{"ugnn-pre-propagate", [](ModelConfig& c) { c.pre_propagate = true; }},
        GradCase{"ignn-zero", [](ModelConfig& c) { c.backend = Backend::ImplicitIGNN; }},
        GradCase{"ignn-relu",
                 [](ModelConfig& c) {
                   c.backend = Backend::ImplicitIGNN;
                   c.fixed_point.activation = PhiFunction::relu();
                 }},
        GradCase{"eignn", [](ModelConfig& c) { c.backend = Backend::Eignn; }}),
    [](const auto& info) {
      std::string s = info.param.name;
      for (char& ch : s)
        if (ch == '-') ch = '_';
      return s;
    });

TEST(GradientCheckControl, CorruptedGradientFails) {
  const Dataset data = random_instance(11);
  const Model m = make_model(base_config(Backend::UnrolledUGNN), 1);
  EXPECT_TRUE(finite_difference_check(m, data).pass);
  EXPECT_FALSE(finite_difference_check(m, data, {.corrupt = true}).pass);
}

TEST(GradientCheckControl, StopGradientDiffersFromFullUnderAttention) {
  const Dataset data = random_instance(12);
  ModelConfig cfg = base_config(Backend::UnrolledUGNN);
  cfg.energy = EnergySpec::simple(1.0, LaplacianKind::Combinatorial, RhoFunction::log(0.2));
  cfg.propagation.alpha = 0.1;
  cfg.propagation.attention_schedule = {0};
  Model m = make_model(cfg, 2);
  const GraphContext ctx(data.graph, cfg);
  const auto fr = forward(m, ctx, data.features, Mode::Eval);
  const auto lr = meta_loss(fr.logits, data.labels, data.train_rows());
  const Matrix g_stop = backward(m, ctx, fr.cache, lr.grad_logits).at("base.0.weight");
  m.config.attention_gradient = AttentionGradient::Full;
  const Matrix g_full = backward(m, ctx, fr.cache, lr.grad_logits).at("base.0.weight");
  EXPECT_GT((g_stop - g_full).norm(), 1e-8);
  // Without attention the two modes coincide.
  m.config.energy.rho = RhoFunction::identity();
  m.config.attention_gradient = AttentionGradient::StopGradient;
  const auto fr2 = forward(m, ctx, data.features, Mode::Eval);
  const Matrix a = backward(m, ctx, fr2.cache, lr.grad_logits).at("base.0.weight");
  m.config.attention_gradient = AttentionGradient::Full;
  EXPECT_EQ(a, backward(m, ctx, fr2.cache, lr.grad_logits).at("base.0.weight"));
}

TEST(Backward, ZeroPropagationWeightGivesLinearModelGradient) {
  const Dataset data = random_instance(13);
  Model m = make_model(base_config(Backend::ImplicitIGNN), 3);
  m.params.at("prop.w_p").setZero();
  const GraphContext ctx(data.graph, m.config);
  const auto fr = forward(m, ctx, data.features, Mode::Eval);
  const auto lr = meta_loss(fr.logits, data.labels, data.train_rows());
  const Parameters g = backward(m, ctx, fr.cache, lr.grad_logits);
  const Matrix expected = data.features.transpose() * lr.grad_logits * m.params.at("head.weight");
  EXPECT_LT((g.at("base.0.weight") - expected).norm(), 1e-12);
}

TEST(Backward, ImplicitMatchesUnrolledAtConvergence) {
  // Literal-mode unfolding with W_f^s = I - W_p^s and unit step has the IGNN
  // fixed point Y = P Y W_p^s + fX.
  const Dataset data = random_instance(14);
  std::mt19937_64 rng(15);
  const Matrix w = 0.6 * testing::random_symmetric(4, rng) / dense_norm2(testing::random_symmetric(4, rng));
  const Matrix ws = project_weights(0.5 * (w + w.transpose()), 1.0, 0.7);

  ModelConfig ucfg = base_config(Backend::UnrolledUGNN);
  ucfg.energy = EnergySpec::general(0.5 * (Matrix::Identity(4, 4) - ws), 0.5 * ws,
                                    LaplacianKind::SelfLoopSymNormalized);
  ucfg.propagation.mode = GradientMode::Literal;
  ucfg.propagation.alpha = 1.0;
  ucfg.propagation.steps = 200;
  const Model um = make_model(ucfg, 16);

  ModelConfig icfg = base_config(Backend::ImplicitIGNN);
  Model im = make_model(icfg, 16);
  im.params.at("base.0.weight") = um.params.at("base.0.weight");
  im.params.at("head.weight") = um.params.at("head.weight");
  im.params.at("prop.w_p") = ws;

  auto grads = [&](const Model& m) {
    const GraphContext ctx(data.graph, m.config);
    const auto fr = forward(m, ctx, data.features, Mode::Eval);
    const auto lr = meta_loss(fr.logits, data.labels, data.train_rows());
    return backward(m, ctx, fr.cache, lr.grad_logits);
  };
  const Parameters gu = grads(um), gi = grads(im);
  EXPECT_LT(testing::rel_err(gi.at("base.0.weight"), gu.at("base.0.weight")), 1e-3);
  EXPECT_LT(testing::rel_err(gi.at("head.weight"), gu.at("head.weight")), 1e-3);
}

Dataset separable_sbm(std::uint64_t seed) {
  SbmSpec spec;
  spec.blocks = {100, 100};
  spec.p_in = 0.05;
  spec.p_out = 0.005;
  spec.separation = 2.0;
  spec.feature_dim = 8;
  spec.seed = seed;
  return sbm_generate(spec);
}

TEST(Train, SeparableSbmReachesHighAccuracy) {
  const Dataset data = separable_sbm(1);
  ModelConfig cfg = base_config(Backend::UnrolledUGNN, 8, 8, 2);
  cfg.energy = EnergySpec::simple(1.0, LaplacianKind::SymNormalized);
  cfg.propagation.steps = 8;
  Model m = make_model(cfg, 2);
  const Metrics metrics = train(m, data, {.epochs = 200, .learning_rate = 0.2, .seed = 3});
  EXPECT_FALSE(metrics.diverged);
  EXPECT_GT(metrics.test_acc_at_best, 0.95);
  ASSERT_EQ(metrics.confusion.size(), 2u);
  Index total = 0;
  for (const auto& row : metrics.confusion)
    for (Index v : row) total += v;
  EXPECT_EQ(total, static_cast<Index>(data.test_rows().size()));
}

TEST(Train, ImplicitBackendsLearn) {
  const Dataset data = separable_sbm(2);
  for (Backend b : {Backend::ImplicitIGNN, Backend::Eignn}) {
    ModelConfig cfg = base_config(b, 8, 8, 2);
    cfg.fixed_point.tol = 1e-8;
    Model m = make_model(cfg, 4);
    const Metrics metrics = train(m, data, {.epochs = 100, .learning_rate = 0.2, .seed = 5});
    EXPECT_FALSE(metrics.diverged) << metrics.error;
    EXPECT_GT(metrics.test_acc_at_best, 0.9) << to_string(b);
    if (b == Backend::ImplicitIGNN) {
      EXPECT_LE(dense_norm2(m.params.at("prop.w_p")), cfg.fixed_point.contraction_margin * (1 + 1e-9));
    }
  }
}

TEST(Train, ZeroLearningRateKeepsMetricsConstant) {
  const Dataset data = separable_sbm(3);
  Model m = make_model(base_config(Backend::UnrolledUGNN, 8, 4, 2), 1);
  const Metrics metrics = train(m, data, {.epochs = 5, .learning_rate = 0.0});
  ASSERT_EQ(metrics.epochs.size(), 5u);
  for (const auto& e : metrics.epochs) {
    EXPECT_EQ(e.train_loss, metrics.epochs.front().train_loss);
    EXPECT_EQ(e.test_acc, metrics.epochs.front().test_acc);
  }
}

TEST(Train, SameSeedBitwiseIdentical) {
  const Dataset data = separable_sbm(4);
  ModelConfig cfg = base_config(Backend::UnrolledUGNN, 8, 4, 2);
  cfg.dropout = 0.3;
  auto run = [&] {
    Model m = make_model(cfg, 9);
    return train(m, data, {.epochs = 10, .learning_rate = 0.1, .momentum = 0.5, .weight_decay = 1e-3, .seed = 7});
  };
  const Metrics a = run(), b = run();
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t k = 0; k < a.epochs.size(); ++k) EXPECT_EQ(a.epochs[k].train_loss, b.epochs[k].train_loss);
}

TEST(Train, LossDescendsForSomeLearningRate) {
  const Dataset data = separable_sbm(5);
  const ModelConfig cfg = base_config(Backend::UnrolledUGNN, 8, 4, 2);
  bool found = false;
  for (double lr : {1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0}) {
    Model m = make_model(cfg, 1);
    const Metrics metrics = train(m, data, {.epochs = 60, .learning_rate = lr});
    if (metrics.diverged) continue;
    bool monotone = true;
    for (std::size_t k = 11; k < metrics.epochs.size(); ++k)
      monotone &= metrics.epochs[k].train_loss <= metrics.epochs[k - 1].train_loss;
    found |= monotone && metrics.epochs.back().train_loss < metrics.epochs.front().train_loss;
  }
  EXPECT_TRUE(found);
}

TEST(Train, HugeLearningRateDivergesWithPartialMetrics) {
  const Dataset data = separable_sbm(6);
  Model m = make_model(base_config(Backend::UnrolledUGNN, 8, 4, 2), 1);
  const Metrics metrics = train(m, data, {.epochs = 50, .learning_rate = 1e6});
  EXPECT_TRUE(metrics.diverged);
  EXPECT_FALSE(metrics.error.empty());
  EXPECT_LT(metrics.epochs.size(), 50u);
}

TEST(Checkpoint, RoundTripAndTruncation) {
  const Model m = make_model(base_config(Backend::ImplicitIGNN), 5);
  const auto prefix = (std::filesystem::temp_directory_path() / "gprop_ckpt_test").string();
  save_checkpoint(m.params, prefix);
  const Parameters back = load_checkpoint(prefix);
  ASSERT_EQ(back.tensors.size(), m.params.tensors.size());
  for (std::size_t i = 0; i < back.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].name, m.params.tensors[i].name);
    EXPECT_EQ(back.tensors[i].value, m.params.tensors[i].value);
  }
  std::filesystem::resize_file(prefix + ".bin", 8);
  EXPECT_THROW(load_checkpoint(prefix), ParseError);
  std::filesystem::remove(prefix + ".bin");
  std::filesystem::remove(prefix + ".manifest");
}

TEST(MetricsCsv, HasVersionedHeader) {
  Metrics m;
  m.epochs.push_back({0, 0.5, 0.6, 0.7, 0.8});
  std::ostringstream out;
  write_metrics_csv(out, m);
  EXPECT_EQ(out.str().rfind("# gprop-csv v1", 0), 0u);
  EXPECT_NE(out.str().find("0,0.5,0.59999999999999998,0.69999999999999996,0.80000000000000004"), std::string::npos);
}

}  // namespace
}  // namespace gprop
