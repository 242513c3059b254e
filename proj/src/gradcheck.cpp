#include "fsood/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "fsood/mcl.hpp"
#include "fsood/rng.hpp"
#include "fsood/toytrain.hpp"

namespace fsood {

namespace {

constexpr double kCorruption = 1.001;

struct Problem {
  MclConfig config;
  Matrix features;
  std::vector<int> labels;
  std::vector<double> consistencies;
  std::vector<ProposalRecord> bank;
  std::vector<std::uint64_t> offsets;
  ProjectionEncoder encoder;
  LinearHead head;
};

Vector random_unit(Rng& rng, std::size_t dim) {
  Vector v(static_cast<Eigen::Index>(dim));
  for (auto& x : v) x = rng.normal();
  return v / v.norm();
}

Problem draw_problem(std::uint64_t seed, std::uint64_t index) {
  Rng rng({seed, index});
  Problem p;
  const auto m = static_cast<Eigen::Index>(2 + rng.uniform_index(5));
  const auto bank_size = rng.uniform_index(17);
  const std::size_t dim = rng.uniform_index(2) == 0 ? 4 : 8;
  const int classes = 3;
  const int input_dim = 5;
  const int hidden = 7;

  p.config.tau = rng.uniform(0.1, 1.0);
  p.config.theta = 0.5;
  p.config.w0 = 0.95;
  p.config.alpha = rng.uniform(0.0, 0.1);
  p.config.lambda = rng.uniform(0.1, 1.0);
  p.config.dim = dim;

  p.features.resize(m, input_dim);
  for (Eigen::Index i = 0; i < p.features.size(); ++i) p.features.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < m; ++i) {
    p.labels.push_back(static_cast<int>(rng.uniform_index(classes)));
    p.consistencies.push_back(rng.uniform01());
  }
  // Keep at least one anchor above the gate.
  p.consistencies[0] = rng.uniform(0.6, 1.0);

  for (std::uint64_t j = 0; j < bank_size; ++j) {
    ProposalRecord r;
    r.embedding = random_unit(rng, dim);
    r.label = static_cast<int>(rng.uniform_index(classes));
    r.consistency = rng.uniform01();
    p.bank.push_back(std::move(r));
    p.offsets.push_back(rng.uniform_index(40));
  }

  p.encoder = ProjectionEncoder::init(input_dim, hidden, static_cast<int>(dim), rng.next());
  p.head = LinearHead::init(static_cast<int>(dim), classes, rng.next());
  return p;
}

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return scale == 0.0 ? 0.0 : diff / scale;
}

/// Central differences of f over every entry of `values`, restored afterwards.
std::vector<double> numeric_gradient(double* values, std::size_t n, const std::function<double()>& f) {
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double saved = values[k];
    values[k] = saved + kGradcheckStep;
    const double plus = f();
    values[k] = saved - kGradcheckStep;
    const double minus = f();
    values[k] = saved;
    out[k] = (plus - minus) / (2.0 * kGradcheckStep);
  }
  return out;
}

double total_objective(const Problem& p) {
  const EncoderCache cache = encoder_forward(p.encoder, p.features);
  const ContrastiveBatch batch{cache.embeddings, p.labels, p.consistencies};
  const double mcl = mcl_loss(batch, p.bank, p.offsets, p.config).total;
  const double cls = head_loss(p.head, cache.embeddings, p.labels).loss;
  return total_loss({cls, 0.0, mcl}, p.config.lambda);
}

GradcheckInstance check_one(Problem& p, bool corrupt) {
  const double factor = corrupt ? kCorruption : 1.0;
  GradcheckInstance out;
  out.batch = p.labels.size();
  out.bank = p.bank.size();
  out.dim = p.config.dim;
  out.tau = p.config.tau;

  // Embeddings: the loss is a function of z alone.
  const EncoderCache cache = encoder_forward(p.encoder, p.features);
  ContrastiveBatch batch{cache.embeddings, p.labels, p.consistencies};
  const MclGradient g = mcl_loss_grad(batch, p.bank, p.offsets, p.config);
  std::vector<double> analytic(g.grad.data(), g.grad.data() + g.grad.size());
  for (double& a : analytic) a *= factor;
  const auto numeric = numeric_gradient(batch.embeddings.data(), static_cast<std::size_t>(batch.embeddings.size()),
                                        [&] { return mcl_loss(batch, p.bank, p.offsets, p.config).total; });
  out.rel_err_embeddings = relative_error(analytic, numeric);

  // Encoder parameters through the full objective.
  const HeadResult head = head_loss(p.head, cache.embeddings, p.labels);
  const Matrix grad_z = p.config.lambda * g.grad + head.grad_embeddings;
  const EncoderGradients eg = encoder_backward(p.encoder, cache, grad_z);
  const auto grads = eg.parameters();
  auto params = p.encoder.parameters();
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    std::vector<double> a(grads[t].begin(), grads[t].end());
    for (double& x : a) x *= factor;
    const auto n = numeric_gradient(params[t].data(), params[t].size(), [&] { return total_objective(p); });
    worst = std::max(worst, relative_error(a, n));
  }
  out.rel_err_encoder = worst;
  return out;
}

}  // namespace

GradcheckReport run_gradcheck(std::size_t instances, std::uint64_t seed, bool corrupt) {
  GradcheckReport report;
  report.instances = instances;
  for (std::size_t i = 0; i < instances; ++i) {
    Problem p = draw_problem(seed, i);
    const GradcheckInstance r = check_one(p, corrupt);
    report.max_rel_err = std::max({report.max_rel_err, r.rel_err_embeddings, r.rel_err_encoder});
    report.details.push_back(r);
  }
  report.pass = report.max_rel_err < kGradcheckTolerance;
  return report;
}

}  // namespace fsood
