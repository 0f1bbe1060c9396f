/*
 * Copyright 2026 The gprop Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "gprop/data.hpp"
#include "gprop/implicit.hpp"

#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gprop {

enum class Backend { UnrolledUGNN, ImplicitIGNN, Eignn };
enum class BaseKind { Linear, Mlp };
// How the attention weights enter the backward pass of the unrolled model.
enum class AttentionGradient { StopGradient, Full };
enum class Mode { Train, Eval };

inline std::string to_string(Backend b) {
  switch (b) {
    case Backend::UnrolledUGNN: return "unrolled";
    case Backend::ImplicitIGNN: return "implicit";
    case Backend::Eignn: return "eignn";
  }
  return "?";
}

inline Backend parse_backend(const std::string& s) {
  if (s == "unrolled" || s == "ugnn") return Backend::UnrolledUGNN;
  if (s == "implicit" || s == "ignn") return Backend::ImplicitIGNN;
  if (s == "eignn") return Backend::Eignn;
  throw InvalidArgument("unknown backend '" + s + "' (expected unrolled, implicit or eignn)");
}

struct ModelConfig {
  Index input_dim = 0;
  Index embed_dim = 0;
  int num_classes = 0;

  BaseKind base = BaseKind::Linear;
  std::vector<Index> hidden;  // MLP hidden widths, ReLU between layers
  double dropout = 0.0;
  bool pre_propagate = false;  // replace X by P X before the base predictor

  Backend backend = Backend::UnrolledUGNN;
  EnergySpec energy = EnergySpec::simple(1.0);
  PropagationConfig propagation;
  AttentionGradient attention_gradient = AttentionGradient::StopGradient;

  FixedPointConfig fixed_point;  // implicit backends
  double eignn_mu = 0.9;
  double eignn_eps = 1e-6;

  void validate() const {
    require(input_dim > 0 && embed_dim > 0, "model: input and embedding widths must be positive");
    require(num_classes > 0, "model: need at least one class");
    require(dropout >= 0.0 && dropout < 1.0, "model: dropout must be in [0,1)");
    for (Index h : hidden) require(h > 0, "model: hidden widths must be positive");
    if (base == BaseKind::Linear) require(hidden.empty(), "model: a linear base has no hidden layers");
    if (backend == Backend::UnrolledUGNN) {
      propagation.validate();
      require(!propagation.initial, "model: the unrolled backend starts from fX");
      energy.check_dims(embed_dim);
    } else {
      fixed_point.validate();
    }
    if (backend == Backend::Eignn) {
      require(eignn_mu >= 0.0 && eignn_mu < 1.0, "model: EIGNN mu must be in [0,1)");
      require(eignn_eps > 0.0, "model: EIGNN eps must be positive");
    }
  }
};

struct Tensor {
  std::string name;
  Matrix value;
};

// Ordered named tensors; gradients use the same layout.
struct Parameters {
  std::vector<Tensor> tensors;

  Matrix& at(const std::string& name) { return tensors[index_of(name)].value; }
  const Matrix& at(const std::string& name) const { return tensors[index_of(name)].value; }
  bool has(const std::string& name) const {
    for (const Tensor& t : tensors)
      if (t.name == name) return true;
    return false;
  }
  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < tensors.size(); ++i)
      if (tensors[i].name == name) return i;
    throw InvalidArgument("no parameter named '" + name + "'");
  }
  Index scalar_count() const {
    Index n = 0;
    for (const Tensor& t : tensors) n += t.value.size();
    return n;
  }
  Parameters zeros_like() const {
    Parameters z = *this;
    for (Tensor& t : z.tensors) t.value.setZero();
    return z;
  }
};

struct Model {
  ModelConfig config;
  Parameters params;

  int base_layers() const { return static_cast<int>(config.hidden.size()) + 1; }
};

inline std::string base_weight_name(int l) { return "base." + std::to_string(l) + ".weight"; }
inline std::string base_bias_name(int l) { return "base." + std::to_string(l) + ".bias"; }

// Weights uniform(+-1/sqrt(fan_in)), biases zero. IGNN W_p is projected into
// the contraction ball; EIGNN F starts from the same uniform law.
inline Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.config = cfg;
  std::mt19937_64 rng(seed);
  auto uniform = [&](Index rows, Index cols, Index fan_in) {
    const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-b, b);
    Matrix w(rows, cols);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    return w;
  };
  std::vector<Index> widths{cfg.input_dim};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(cfg.embed_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    m.params.tensors.push_back({base_weight_name(int(l)), uniform(widths[l], widths[l + 1], widths[l])});
    if (l + 2 < widths.size()) m.params.tensors.push_back({base_bias_name(int(l)), Matrix::Zero(1, widths[l + 1])});
  }
  m.params.tensors.push_back({"head.weight", uniform(cfg.num_classes, cfg.embed_dim, cfg.embed_dim)});
  if (cfg.backend == Backend::ImplicitIGNN) {
    m.params.tensors.push_back(
        {"prop.w_p", project_weights(uniform(cfg.embed_dim, cfg.embed_dim, cfg.embed_dim), 1.0,
                                     cfg.fixed_point.contraction_margin)});
  } else if (cfg.backend == Backend::Eignn) {
    m.params.tensors.push_back({"prop.f", uniform(cfg.embed_dim, cfg.embed_dim, cfg.embed_dim)});
  }
  return m;
}

// Graph-derived operators shared across forward passes.
struct GraphContext {
  const Graph* graph = nullptr;
  SparseMatrix p;  // self-loop normalized propagation, used by pre_propagate
  SparseMatrix p_fixed;  // propagation of the implicit backends
  double p_fixed_norm = 1.0;

  GraphContext(const Graph& g, const ModelConfig& cfg) : graph(&g) {
    p = propagation_matrix(g, LaplacianKind::SelfLoopSymNormalized);
    if (cfg.backend != Backend::UnrolledUGNN) {
      p_fixed = cfg.fixed_point.propagation == LaplacianKind::SelfLoopSymNormalized
                    ? p
                    : propagation_matrix(g, cfg.fixed_point.propagation);
      // The self-loop normalized operator has spectral radius exactly 1.
      p_fixed_norm = cfg.fixed_point.propagation == LaplacianKind::SelfLoopSymNormalized ? 1.0
                                                                                       : spectral_norm(p_fixed);
    }
  }
};

struct ForwardCache {
  std::vector<Matrix> layer_inputs;  // input of each base layer, after dropout
  std::vector<Matrix> dropout_masks;  // scaled keep masks, empty when unused
  std::vector<Matrix> pre_activations;  // hidden pre-activations
  Matrix fx;
  Matrix y;
  PropagationResult propagation;  // unrolled backend
  FixedPointResult fixed_point;   // implicit backends
  Matrix w_fixed;                 // effective weight of the implicit backends
};

struct ForwardResult {
  Matrix logits;  // n x c, head applied to every row
  ForwardCache cache;
};

namespace detail {

inline Matrix eignn_weight(const Matrix& f, double mu, double eps) {
  const Matrix a = f.transpose() * f;
  return (mu / (a.norm() + eps)) * a;
}

inline EnergySpec effective_energy(const ModelConfig& cfg) {
  EnergySpec spec = cfg.energy;
  if (cfg.propagation.variant == PropagationVariant::NormalizedLaplacian) {
    spec.laplacian_kind = LaplacianKind::SelfLoopSymNormalized;
  }
  return spec;
}

}  // namespace detail

inline ForwardResult forward(const Model& model, const GraphContext& ctx, const Matrix& x, Mode mode,
                             std::mt19937_64* rng = nullptr) {
  const ModelConfig& cfg = model.config;
  require(x.rows() == ctx.graph->num_nodes(), "forward: feature rows must equal node count");
  require(x.cols() == cfg.input_dim, "forward: feature width " + std::to_string(x.cols()) +
                                         " differs from model input width " + std::to_string(cfg.input_dim));
  const bool drop = mode == Mode::Train && cfg.dropout > 0.0;
  require(!drop || rng != nullptr, "forward: train-mode dropout needs a random generator");

  ForwardResult out;
  ForwardCache& c = out.cache;
  Matrix h = cfg.pre_propagate ? Matrix(ctx.p * x) : x;
  const int L = model.base_layers();
  std::bernoulli_distribution keep(1.0 - cfg.dropout);
  for (int l = 0; l < L; ++l) {
    if (drop) {
      Matrix mask(h.rows(), h.cols());
      const double scale = 1.0 / (1.0 - cfg.dropout);
      for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? scale : 0.0;
      h = h.cwiseProduct(mask);
      c.dropout_masks.push_back(std::move(mask));
    } else {
      c.dropout_masks.emplace_back();
    }
    c.layer_inputs.push_back(h);
    Matrix z = h * model.params.at(base_weight_name(l));
    if (l + 1 < L) {
      z.rowwise() += model.params.at(base_bias_name(l)).row(0);
      c.pre_activations.push_back(z);
      h = z.cwiseMax(0.0);
    } else {
      c.fx = std::move(z);
    }
  }

  switch (cfg.backend) {
    case Backend::UnrolledUGNN: {
      PropagationConfig pc = cfg.propagation;
      pc.record_iterates = true;
      pc.track_energy = false;
      c.propagation = propagate(cfg.energy, *ctx.graph, c.fx, pc);
      c.y = c.propagation.y_final;
      break;
    }
    case Backend::ImplicitIGNN:
    case Backend::Eignn: {
      FixedPointConfig fp = cfg.fixed_point;
      if (cfg.backend == Backend::Eignn) {
        fp.activation = PhiFunction::zero();
        c.w_fixed = detail::eignn_weight(model.params.at("prop.f"), cfg.eignn_mu, cfg.eignn_eps);
      } else {
        c.w_fixed = model.params.at("prop.w_p");
      }
      c.fixed_point = fixed_point_solve(ctx.p_fixed, c.w_fixed, c.fx, fp, ctx.p_fixed_norm);
      c.y = c.fixed_point.y_star;
      break;
    }
  }
  out.logits = c.y * model.params.at("head.weight").transpose();
  return out;
}

inline ForwardResult forward(const Model& model, const Graph& g, const Matrix& x, Mode mode = Mode::Eval,
                             std::mt19937_64* rng = nullptr) {
  return forward(model, GraphContext(g, model.config), x, mode, rng);
}

struct LossResult {
  double loss = 0.0;
  Matrix grad_logits;  // n x c, zero outside the labeled rows
};

// Mean softmax cross-entropy over the given rows.
inline LossResult meta_loss(const Matrix& logits, std::span<const int> labels, std::span<const Index> rows) {
  require(!rows.empty(), "meta_loss: no labeled rows");
  LossResult out;
  out.grad_logits = Matrix::Zero(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (Index i : rows) {
    const int y = labels[i];
    require(y >= 0 && y < logits.cols(), "meta_loss: class id " + std::to_string(y) + " out of range");
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    out.loss += (std::log(z) + mx - logits(i, y)) * inv;
    out.grad_logits.row(i) = e * (inv / z);
    out.grad_logits(i, y) -= inv;
  }
  return out;
}

// Argmax with ties going to the lowest class index.
inline int predict_row(const Matrix& logits, Index i) {
  int best = 0;
  for (Index j = 1; j < logits.cols(); ++j)
    if (logits(i, j) > logits(i, best)) best = static_cast<int>(j);
  return best;
}

inline double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const Index> rows) {
  if (rows.empty()) return 0.0;
  std::size_t hit = 0;
  for (Index i : rows) hit += predict_row(logits, i) == labels[i];
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

// counts[true][predicted]
inline std::vector<std::vector<Index>> confusion_matrix(const Matrix& logits, std::span<const int> labels,
                                                        std::span<const Index> rows, int classes) {
  std::vector<std::vector<Index>> counts(classes, std::vector<Index>(classes, 0));
  for (Index i : rows) ++counts[labels[i]][predict_row(logits, i)];
  return counts;
}

namespace detail {

// Reverse pass through the unrolled steps. Returns dL/dfX.
inline Matrix unrolled_backward(const ModelConfig& cfg, const Graph& g, const ForwardCache& c, Matrix dy) {
  const EnergySpec spec = effective_energy(cfg);
  const PropagationResult& run = c.propagation;
  const int K = static_cast<int>(run.alphas.size());
  const Matrix& fx = c.fx;

  if (cfg.propagation.variant == PropagationVariant::Preconditioned) {
    PreconditionedOperator op(g, spec.lambda);
    Matrix dz0 = Matrix::Zero(fx.rows(), fx.cols());
    for (int k = K - 1; k >= 0; --k) {
      const double a = run.alphas[k];
      const Matrix u = (1.0 - a) * run.iterates[k] + a * spec.lambda * (op.scaled_adjacency * run.iterates[k]) +
                       a * (op.dinv.asDiagonal() * fx);
      const Matrix gu = dy.cwiseProduct(prox_slope(spec.phi, u, a));
      dz0 += a * (op.dinv.asDiagonal() * gu);
      dy = (1.0 - a) * gu + a * spec.lambda * (op.scaled_adjacency * gu);
    }
    return dz0 + dy;
  }

  const IncidenceView view = incidence(g, spec.laplacian_kind);
  const Index m = view.rows();
  const bool full = cfg.attention_gradient == AttentionGradient::Full && !spec.rho.is_identity();
  const Matrix wps = spec.simple_mode ? Matrix() : spec.w_p_sym();
  const Matrix wfs = spec.simple_mode ? Matrix() : spec.w_f_sym();

  // gamma in force at each step: index into gamma_trace, -1 for the initial ones
  std::vector<int> active(K, -1);
  for (std::size_t s = 0; s < run.gamma_steps.size(); ++s)
    for (int k = run.gamma_steps[s]; k < K; ++k) active[k] = static_cast<int>(s);
  std::vector<Vector> dgamma(run.gamma_trace.size(), Vector::Zero(m));
  const Vector ones = Vector::Ones(m);

  Matrix dfx = Matrix::Zero(fx.rows(), fx.cols());
  for (int k = K - 1; k >= 0; --k) {
    const double a = run.alphas[k];
    const Matrix& yk = run.iterates[k];
    const Vector& gamma = active[k] >= 0 ? run.gamma_trace[active[k]].values() : ones;
    const Matrix u = yk - a * smooth_gradient(spec, view, yk, fx, gamma, cfg.propagation.mode);
    const Matrix gu = dy.cwiseProduct(prox_slope(spec.phi, u, a));
    const Matrix lgu = view.weighted_laplacian_apply(gamma, gu);
    if (spec.simple_mode) {
      dy = gu - a * (gu + spec.lambda * lgu);
      dfx += a * gu;
    } else {
      dy = gu - a * (lgu * wps + gu * wfs);
      dfx += cfg.propagation.mode == GradientMode::Exact ? Matrix(a * gu * wfs) : Matrix(a * gu);
    }
    if (full && active[k] >= 0) {
      const Matrix bgu = view.apply(gu);
      const Matrix by = spec.simple_mode ? Matrix(spec.lambda * view.apply(yk)) : Matrix(view.apply(yk) * wps);
      dgamma[active[k]] -= a * bgu.cwiseProduct(by).rowwise().sum();
      if (run.gamma_steps[active[k]] == k) {
        // gamma = gamma_of(q(Y^k)), q_e = b W_p b^T with b = (B Y^k)_e
        const Matrix byk = view.apply(yk);
        const Vector q = edge_quadratic(spec, view, yk);
        Vector dq(m);
        for (Index e = 0; e < m; ++e) dq[e] = dgamma[active[k]][e] * gamma_slope(spec.rho, q[e]);
        const Matrix dq_db = spec.simple_mode ? Matrix(2.0 * byk) : Matrix(byk * wps);
        dy += view.apply_transpose(dq.asDiagonal() * dq_db);
      }
    }
  }
  return dfx + dy;
}

inline void base_backward(const Model& model, const ForwardCache& c, Matrix dz, Parameters& grads) {
  const int L = model.base_layers();
  for (int l = L - 1; l >= 0; --l) {
    grads.at(base_weight_name(l)) += c.layer_inputs[l].transpose() * dz;
    if (l + 1 < L) grads.at(base_bias_name(l)) += dz.colwise().sum();
    if (l == 0) break;
    Matrix dh = dz * model.params.at(base_weight_name(l)).transpose();
    if (c.dropout_masks[l].size()) dh = dh.cwiseProduct(c.dropout_masks[l]);
    dz = dh.cwiseProduct((c.pre_activations[l - 1].array() > 0.0).cast<double>().matrix());
  }
}

}  // namespace detail

// Gradients of the loss whose logits gradient is grad_logits.
inline Parameters backward(const Model& model, const GraphContext& ctx, const ForwardCache& c,
                           const Matrix& grad_logits) {
  const ModelConfig& cfg = model.config;
  Parameters grads = model.params.zeros_like();
  const Matrix& wg = model.params.at("head.weight");
  grads.at("head.weight") = grad_logits.transpose() * c.y;
  Matrix dy = grad_logits * wg;

  Matrix dfx;
  switch (cfg.backend) {
    case Backend::UnrolledUGNN: dfx = detail::unrolled_backward(cfg, *ctx.graph, c, std::move(dy)); break;
    case Backend::ImplicitIGNN: {
      const ImplicitGradients ig =
          implicit_backward(ctx.p_fixed, c.w_fixed, c.fx, c.y, dy, cfg.fixed_point.activation);
      grads.at("prop.w_p") = ig.grad_w_p;
      dfx = ig.grad_fx;
      break;
    }
    case Backend::Eignn: {
      const ImplicitGradients ig = implicit_backward(ctx.p_fixed, c.w_fixed, c.fx, c.y, dy, PhiFunction::zero());
      // W = mu A / (||A||_F + eps), A = F^T F
      const Matrix& f = model.params.at("prop.f");
      const Matrix a = f.transpose() * f;
      const double s = a.norm(), denom = s + cfg.eignn_eps;
      Matrix da = (cfg.eignn_mu / denom) * ig.grad_w_p;
      if (s > 0.0) da -= (cfg.eignn_mu * ig.grad_w_p.cwiseProduct(a).sum() / (denom * denom * s)) * a;
      grads.at("prop.f") = f * (da + da.transpose());
      dfx = ig.grad_fx;
      break;
    }
  }
  detail::base_backward(model, c, std::move(dfx), grads);
  return grads;
}

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 0.05;
  double momentum = 0.0;
  double weight_decay = 0.0;  // decoupled: w -= lr * wd * w
  std::uint64_t seed = 0;     // dropout stream; initialization is seeded by make_model

  void validate() const {
    require(epochs >= 0, "train: epochs must be >= 0");
    require(learning_rate >= 0.0, "train: learning rate must be non-negative");
    require(momentum >= 0.0 && momentum < 1.0, "train: momentum must be in [0,1)");
    require(weight_decay >= 0.0, "train: weight decay must be non-negative");
  }
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

struct Metrics {
  std::vector<EpochMetrics> epochs;
  int best_epoch = -1;
  double best_val_acc = -1.0;
  double test_acc_at_best = 0.0;
  std::vector<std::vector<Index>> confusion;  // test rows at the best checkpoint
  Parameters best_params;
  bool diverged = false;
  int diverged_epoch = -1;
  std::string error;
};

inline void sgd_step(Model& model, const Parameters& grads, Parameters& velocity, const TrainConfig& cfg,
                     double p_norm) {
  for (std::size_t i = 0; i < model.params.tensors.size(); ++i) {
    Matrix& w = model.params.tensors[i].value;
    Matrix& v = velocity.tensors[i].value;
    v = cfg.momentum * v + grads.tensors[i].value;
    w -= cfg.learning_rate * (v + cfg.weight_decay * w);
  }
  if (model.config.backend == Backend::ImplicitIGNN) {
    Matrix& w = model.params.at("prop.w_p");
    w = project_weights(w, p_norm, model.config.fixed_point.contraction_margin);
  }
}

// Full-batch gradient descent. The best-validation parameters are restored
// into the model at the end. Numerical failures stop training early and are
// reported through Metrics::diverged.
inline Metrics train(Model& model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  require(data.features.cols() == model.config.input_dim, "train: feature width differs from the model");
  require(data.num_classes <= model.config.num_classes, "train: dataset has more classes than the model");
  const GraphContext ctx(data.graph, model.config);
  const auto train_rows = data.train_rows(), val_rows = data.val_rows(), test_rows = data.test_rows();
  require(!train_rows.empty(), "train: empty training mask");
  std::mt19937_64 rng(cfg.seed);
  Parameters velocity = model.params.zeros_like();

  Metrics metrics;
  metrics.best_params = model.params;
  auto evaluate = [&](EpochMetrics& e) {
    const Matrix logits = forward(model, ctx, data.features, Mode::Eval).logits;
    e.train_acc = accuracy(logits, data.labels, train_rows);
    e.val_acc = accuracy(logits, data.labels, val_rows);
    e.test_acc = accuracy(logits, data.labels, test_rows);
    if (e.val_acc > metrics.best_val_acc) {
      metrics.best_val_acc = e.val_acc;
      metrics.best_epoch = e.epoch;
      metrics.test_acc_at_best = e.test_acc;
      metrics.best_params = model.params;
      metrics.confusion = confusion_matrix(logits, data.labels, test_rows, model.config.num_classes);
    }
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochMetrics e;
    e.epoch = epoch;
    try {
      const ForwardResult fr = forward(model, ctx, data.features, Mode::Train, &rng);
      const LossResult lr = meta_loss(fr.logits, data.labels, train_rows);
      if (!std::isfinite(lr.loss)) throw NumericalError("training loss is not finite", epoch);
      e.train_loss = lr.loss;
      const Parameters grads = backward(model, ctx, fr.cache, lr.grad_logits);
      sgd_step(model, grads, velocity, cfg, ctx.p_fixed_norm);
      for (const Tensor& t : model.params.tensors) {
        if (!t.value.allFinite()) throw NumericalError("parameter " + t.name + " is not finite", epoch);
      }
      evaluate(e);
    } catch (const NumericalError& err) {
      metrics.diverged = true;
      metrics.diverged_epoch = epoch;
      metrics.error = err.what();
      break;
    }
    metrics.epochs.push_back(e);
  }
  if (cfg.epochs == 0) {
    EpochMetrics e;
    evaluate(e);
  }
  model.params = metrics.best_params;
  return metrics;
}

inline void write_metrics_csv(std::ostream& out, const Metrics& m) {
  out << "# gprop-csv v1 metrics\n";
  out << "epoch,train_loss,train_acc,val_acc,test_acc\n";
  out.precision(17);
  for (const EpochMetrics& e : m.epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_acc << ',' << e.test_acc << '\n';
  }
}

// Checkpoint: <prefix>.bin holds the raw float64 values (column-major, in
// manifest order); <prefix>.manifest lists name, rows, cols per line.
inline void save_checkpoint(const Parameters& params, const std::string& prefix) {
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  std::ofstream manifest(prefix + ".manifest");
  if (!bin || !manifest) throw Error("cannot write checkpoint '" + prefix + "'");
  manifest << "# gprop checkpoint v1 float64 column-major\n";
  for (const Tensor& t : params.tensors) {
    manifest << t.name << ' ' << t.value.rows() << ' ' << t.value.cols() << '\n';
    bin.write(reinterpret_cast<const char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
  if (!bin || !manifest) throw Error("failed writing checkpoint '" + prefix + "'");
}

inline Parameters load_checkpoint(const std::string& prefix) {
  std::ifstream manifest(prefix + ".manifest");
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!manifest || !bin) throw ParseError(prefix + ".manifest", 0, "cannot open checkpoint");
  Parameters params;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    Tensor t;
    long long rows = 0, cols = 0;
    if (!(fields >> t.name >> rows >> cols) || rows < 0 || cols < 0) {
      throw ParseError(prefix + ".manifest", lineno, "expected 'name rows cols'");
    }
    t.value.resize(rows, cols);
    bin.read(reinterpret_cast<char*>(t.value.data()), static_cast<std::streamsize>(t.value.size() * sizeof(double)));
    if (!bin) throw ParseError(prefix + ".bin", 0, "truncated data for tensor '" + t.name + "'");
    params.tensors.push_back(std::move(t));
  }
  if (bin.peek() != std::char_traits<char>::eof()) throw ParseError(prefix + ".bin", 0, "trailing data");
  return params;
}

struct FdCheckOptions {
  double delta = 1e-5;
  double tol = 1e-4;       // relative
  double atol = 1e-8;      // absolute floor for near-zero gradients
  Index max_coords = -1;   // per tensor, -1 for all
  bool corrupt = false;    // perturb the analytic gradient (negative control)
};

struct FdCheckReport {
  bool pass = true;
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  Index checked = 0;
  Index skipped = 0;  // coordinates whose perturbation crosses a kink
};

namespace detail {

// Signature of every piecewise-linear branch taken by a forward pass.
inline std::vector<bool> kink_pattern(const Model& model, const GraphContext& ctx, const ForwardCache& c) {
  std::vector<bool> bits;
  auto push = [&](const Matrix& slope) {
    for (Index i = 0; i < slope.size(); ++i) bits.push_back(slope.data()[i] > 0.5);
  };
  for (const Matrix& z : c.pre_activations) push((z.array() > 0.0).cast<double>().matrix());
  const ModelConfig& cfg = model.config;
  if (cfg.backend == Backend::UnrolledUGNN) {
    const EnergySpec spec = effective_energy(cfg);
    const PropagationResult& run = c.propagation;
    if (cfg.propagation.variant == PropagationVariant::Preconditioned) {
      PreconditionedOperator op(*ctx.graph, spec.lambda);
      for (std::size_t k = 0; k < run.alphas.size(); ++k) {
        const double a = run.alphas[k];
        push(prox_slope(spec.phi, op.step(run.iterates[k], c.fx, a), a));
      }
      return bits;
    }
    const IncidenceView view = incidence(*ctx.graph, spec.laplacian_kind);
    Vector gamma = Vector::Ones(view.rows());
    std::size_t s = 0;
    const auto breaks = rho_breakpoints(spec.rho);
    for (std::size_t k = 0; k < run.alphas.size(); ++k) {
      if (s < run.gamma_steps.size() && run.gamma_steps[s] == static_cast<int>(k)) {
        gamma = run.gamma_trace[s++].values();
        const Vector q = edge_quadratic(spec, view, run.iterates[k]);
        for (Index e = 0; e < q.size(); ++e)
          for (double b : breaks) bits.push_back(q[e] < b);
      }
      const double a = run.alphas[k];
      const Matrix u = run.iterates[k] - a * smooth_gradient(spec, view, run.iterates[k], c.fx, gamma,
                                                             cfg.propagation.mode);
      push(prox_slope(spec.phi, u, a));
    }
  } else if (cfg.backend == Backend::ImplicitIGNN) {
    push(prox_slope(cfg.fixed_point.activation, Matrix(ctx.p_fixed * c.y * c.w_fixed + c.fx), 1.0));
  }
  return bits;
}

}  // namespace detail

// Centered differences on the eval-mode training loss for every trainable
// scalar. Coordinates whose +-delta perturbation changes any branch of a
// piecewise activation (ReLU, prox, truncated rho) are skipped.
inline FdCheckReport finite_difference_check(const Model& model_in, const Dataset& data,
                                             const FdCheckOptions& opt = {}) {
  Model model = model_in;
  if (model.config.backend != Backend::UnrolledUGNN) {
    model.config.fixed_point.tol = std::min(model.config.fixed_point.tol, 1e-14);
    model.config.fixed_point.max_iters = std::max(model.config.fixed_point.max_iters, 100000);
  }
  const GraphContext ctx(data.graph, model.config);
  const auto rows = data.train_rows();
  const ForwardResult base = forward(model, ctx, data.features, Mode::Eval);
  const LossResult lr = meta_loss(base.logits, data.labels, rows);
  Parameters grads = backward(model, ctx, base.cache, lr.grad_logits);
  if (opt.corrupt && !grads.tensors.empty()) grads.tensors.front().value.data()[0] += 1.0;
  const std::vector<bool> pattern = detail::kink_pattern(model, ctx, base.cache);

  FdCheckReport report;
  for (std::size_t t = 0; t < model.params.tensors.size(); ++t) {
    Matrix& w = model.params.tensors[t].value;
    const Index count = opt.max_coords < 0 ? w.size() : std::min(w.size(), opt.max_coords);
    for (Index i = 0; i < count; ++i) {
      const double orig = w.data()[i];
      auto eval = [&](double v) {
        w.data()[i] = v;
        const ForwardResult fr = forward(model, ctx, data.features, Mode::Eval);
        const bool same = detail::kink_pattern(model, ctx, fr.cache) == pattern;
        return std::pair{meta_loss(fr.logits, data.labels, rows).loss, same};
      };
      const auto [lp, same_p] = eval(orig + opt.delta);
      const auto [lm, same_m] = eval(orig - opt.delta);
      w.data()[i] = orig;
      if (!same_p || !same_m) {
        ++report.skipped;
        continue;
      }
      const double fd = (lp - lm) / (2.0 * opt.delta);
      const double an = grads.tensors[t].value.data()[i];
      ++report.checked;
      const double diff = std::abs(fd - an);
      if (diff <= opt.atol) continue;
      const double rel = diff / std::max(std::abs(fd), std::abs(an));
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = model.params.tensors[t].name;
        report.worst_index = i;
      }
    }
  }
  report.pass = report.max_rel_error <= opt.tol && report.checked > 0;
  return report;
}

}  // namespace gprop
