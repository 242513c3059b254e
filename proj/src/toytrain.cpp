#include "fsood/toytrain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fsood/rng.hpp"

namespace fsood {

namespace {

// Stream tags keep the generator streams of different consumers apart.
constexpr std::uint64_t kCenterStream = 0x63656e74;  // "cent"
constexpr std::uint64_t kBatchStream = 0x62617463;   // "batc"
constexpr std::uint64_t kEvalStream = 0x6576616c;    // "eval"
constexpr std::uint64_t kEncoderStream = 0x656e636f; // "enco"
constexpr std::uint64_t kHeadStream = 0x68656164;    // "head"

void fill_uniform(Rng& rng, double* data, Eigen::Index n, double bound) {
  for (Eigen::Index i = 0; i < n; ++i) data[i] = rng.uniform(-bound, bound);
}

SyntheticBatch draw(const SyntheticConfig& config, const Matrix& centers, Rng& rng,
                    std::size_t count) {
  SyntheticBatch out;
  out.features.resize(static_cast<Eigen::Index>(count), config.input_dim);
  out.labels.reserve(count);
  out.consistencies.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(config.classes)));
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index d = 0; d < config.input_dim; ++d) {
      out.features(row, d) = centers(label, d) + config.noise * rng.normal();
    }
    out.labels.push_back(label);
    out.consistencies.push_back(rng.uniform(config.consistency_low, config.consistency_high));
  }
  return out;
}

std::span<double> view(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> view(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<const double> view(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
std::span<const double> view(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Compactness measure(const ProjectionEncoder& encoder, const SyntheticBatch& eval) {
  const EncoderCache cache = encoder_forward(encoder, eval.features);
  return compactness_metrics(cache.embeddings, eval.labels);
}

}  // namespace

// ---------------------------------------------------------------------------

void SyntheticConfig::validate() const {
  if (classes < 2) throw std::invalid_argument("synthetic: classes must be >= 2");
  if (input_dim < 1) throw std::invalid_argument("synthetic: input_dim must be positive");
  if (batch < 1) throw std::invalid_argument("synthetic: batch must be positive");
  if (!(separation >= 0.0) || !(noise >= 0.0)) {
    throw std::invalid_argument("synthetic: separation and noise must be non-negative");
  }
  if (!(consistency_low >= 0.0 && consistency_low <= consistency_high && consistency_high <= 1.0)) {
    throw std::invalid_argument("synthetic: need 0 <= consistency_low <= consistency_high <= 1");
  }
}

Matrix class_centers(const SyntheticConfig& config) {
  config.validate();
  Rng rng({config.seed, kCenterStream});
  Matrix centers(config.classes, config.input_dim);
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    for (Eigen::Index d = 0; d < centers.cols(); ++d) centers(c, d) = rng.normal();
    centers.row(c) *= config.separation / centers.row(c).norm();
  }
  return centers;
}

SyntheticBatch generate_batch(const SyntheticConfig& config, std::uint64_t step) {
  const Matrix centers = class_centers(config);
  Rng rng({config.seed, step, kBatchStream});
  return draw(config, centers, rng, static_cast<std::size_t>(config.batch));
}

SyntheticBatch generate_eval_set(const SyntheticConfig& config, std::size_t count) {
  const Matrix centers = class_centers(config);
  Rng rng({config.seed, kEvalStream});
  return draw(config, centers, rng, count);
}

// ---------------------------------------------------------------------------

ProjectionEncoder ProjectionEncoder::init(int input_dim, int hidden_dim, int embed_dim,
                                          std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || embed_dim < 1) {
    throw std::invalid_argument("ProjectionEncoder: dimensions must be positive");
  }
  Rng rng({seed, kEncoderStream});
  ProjectionEncoder enc;
  enc.w1.resize(hidden_dim, input_dim);
  enc.b1.resize(hidden_dim);
  enc.w2.resize(embed_dim, hidden_dim);
  enc.b2.resize(embed_dim);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  fill_uniform(rng, enc.w1.data(), enc.w1.size(), bound1);
  fill_uniform(rng, enc.b1.data(), enc.b1.size(), bound1);
  fill_uniform(rng, enc.w2.data(), enc.w2.size(), bound2);
  fill_uniform(rng, enc.b2.data(), enc.b2.size(), bound2);
  return enc;
}

std::vector<std::span<double>> ProjectionEncoder::parameters() {
  return {view(w1), view(b1), view(w2), view(b2)};
}

bool ProjectionEncoder::operator==(const ProjectionEncoder& o) const {
  return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
}

std::vector<std::span<const double>> EncoderGradients::parameters() const {
  return {view(w1), view(b1), view(w2), view(b2)};
}

EncoderCache encoder_forward(const ProjectionEncoder& encoder, const Matrix& features) {
  if (features.cols() != encoder.w1.cols()) {
    throw std::invalid_argument("encoder_forward: feature dimension " + std::to_string(features.cols()) +
                                " != encoder input dimension " + std::to_string(encoder.w1.cols()));
  }
  EncoderCache c;
  c.input = features;
  c.hidden_pre = (features * encoder.w1.transpose()).rowwise() + encoder.b1.transpose();
  c.hidden = c.hidden_pre.cwiseMax(0.0);
  c.output_pre = (c.hidden * encoder.w2.transpose()).rowwise() + encoder.b2.transpose();
  c.embeddings = normalize_rows(c.output_pre);
  return c;
}

EncoderGradients encoder_backward(const ProjectionEncoder& encoder, const EncoderCache& cache,
                                  const Matrix& grad_embeddings) {
  EncoderGradients g;
  const Matrix d_out = normalize_rows_backward(cache.output_pre, grad_embeddings);
  g.w2 = d_out.transpose() * cache.hidden;
  g.b2 = d_out.colwise().sum().transpose();
  const Matrix d_hidden =
      (d_out * encoder.w2).cwiseProduct((cache.hidden_pre.array() > 0.0).cast<double>().matrix());
  g.w1 = d_hidden.transpose() * cache.input;
  g.b1 = d_hidden.colwise().sum().transpose();
  g.input = d_hidden * encoder.w1;
  return g;
}

// ---------------------------------------------------------------------------

LinearHead LinearHead::init(int embed_dim, int classes, std::uint64_t seed) {
  Rng rng({seed, kHeadStream});
  LinearHead head;
  head.w.resize(classes, embed_dim);
  head.b = Vector::Zero(classes);
  fill_uniform(rng, head.w.data(), head.w.size(), 1.0 / std::sqrt(static_cast<double>(embed_dim)));
  return head;
}

std::vector<std::span<double>> LinearHead::parameters() { return {view(w), view(b)}; }

HeadResult head_loss(const LinearHead& head, const Matrix& embeddings, std::span<const int> labels) {
  const auto m = embeddings.rows();
  Matrix logits = (embeddings * head.w.transpose()).rowwise() + head.b.transpose();
  HeadResult out;
  Matrix d_logits(m, logits.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double sum = e.sum();
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    out.loss += -(logits(i, y) - mx - std::log(sum));
    d_logits.row(i) = e / sum;
    d_logits(i, y) -= 1.0;
  }
  out.loss /= static_cast<double>(m);
  d_logits /= static_cast<double>(m);
  out.grad_w = d_logits.transpose() * embeddings;
  out.grad_b = d_logits.colwise().sum().transpose();
  out.grad_embeddings = d_logits * head.w;
  return out;
}

// ---------------------------------------------------------------------------

void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              const SgdConfig& config, double lr) {
  if (param.size() != grad.size() || param.size() != velocity.size()) {
    throw std::invalid_argument("sgd_step: parameter, gradient and buffer sizes differ");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw std::invalid_argument("sgd_step: non-finite gradient");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = config.momentum * velocity[i] + (grad[i] + config.weight_decay * param[i]);
    param[i] -= lr * velocity[i];
  }
}

void SgdState::step(const std::vector<std::span<double>>& params,
                    const std::vector<std::span<const double>>& grads, double lr) {
  if (params.size() != grads.size()) throw std::invalid_argument("SgdState: params/grads count differ");
  if (buffers_.empty()) {
    for (const auto& p : params) buffers_.emplace_back(p.size(), 0.0);
  }
  if (buffers_.size() != params.size()) throw std::invalid_argument("SgdState: parameter list changed");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size() || params[t].size() != buffers_[t].size()) {
      throw std::invalid_argument("SgdState: shape mismatch in tensor " + std::to_string(t));
    }
    for (double g : grads[t]) {
      if (!std::isfinite(g)) throw std::invalid_argument("SgdState: non-finite gradient");
    }
  }
  for (std::size_t t = 0; t < params.size(); ++t) sgd_step(params[t], grads[t], buffers_[t], config_, lr);
}

void LrSchedule::validate() const {
  if (!(base_lr > 0.0)) throw std::invalid_argument("schedule: base_lr must be > 0");
  if (warmup_iterations < 0) throw std::invalid_argument("schedule: warmup must be >= 0");
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) {
    throw std::invalid_argument("schedule: decay factor must be in (0, 1)");
  }
  if (!(warmup_start_fraction >= 0.0 && warmup_start_fraction <= 1.0)) {
    throw std::invalid_argument("schedule: warmup start fraction must be in [0, 1]");
  }
  for (std::size_t k = 0; k < milestones.size(); ++k) {
    if (milestones[k] <= 0 || (k > 0 && milestones[k] <= milestones[k - 1])) {
      throw std::invalid_argument("schedule: milestones must be positive and strictly increasing");
    }
  }
}

double lr_at(const LrSchedule& schedule, int iteration) {
  if (iteration < 0) throw std::invalid_argument("lr_at: iteration must be >= 0");
  double lr = schedule.base_lr;
  if (iteration < schedule.warmup_iterations) {
    const double progress = static_cast<double>(iteration) / schedule.warmup_iterations;
    lr *= schedule.warmup_start_fraction + (1.0 - schedule.warmup_start_fraction) * progress;
  }
  for (int milestone : schedule.milestones) {
    if (iteration >= milestone) lr *= schedule.decay_factor;
  }
  return lr;
}

// ---------------------------------------------------------------------------

TrainConfig::TrainConfig() {
  mcl.capacity = 512;
  mcl.dim = 16;
  schedule.base_lr = 0.1;
}

void TrainConfig::validate() const {
  data.validate();
  mcl.validate();
  schedule.validate();
  if (mcl.dim < 1) throw std::invalid_argument("train: embedding dim must be positive");
  if (hidden_dim < 1) throw std::invalid_argument("train: hidden_dim must be positive");
  if (iterations < 0) throw std::invalid_argument("train: iterations must be >= 0");
  if (eval_samples < 4) throw std::invalid_argument("train: eval_samples must be >= 4");
  if (smoothing_window < 1) throw std::invalid_argument("train: smoothing_window must be >= 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"data",
       {{"classes", c.data.classes},
        {"input_dim", c.data.input_dim},
        {"separation", c.data.separation},
        {"noise", c.data.noise},
        {"consistency_low", c.data.consistency_low},
        {"consistency_high", c.data.consistency_high},
        {"batch", c.data.batch},
        {"seed", c.data.seed}}},
      {"mcl",
       {{"tau", c.mcl.tau},
        {"theta", c.mcl.theta},
        {"w0", c.mcl.w0},
        {"alpha", c.mcl.alpha},
        {"lambda", c.mcl.lambda},
        {"capacity", c.mcl.capacity},
        {"dim", c.mcl.dim}}},
      {"schedule",
       {{"base_lr", c.schedule.base_lr},
        {"warmup_iterations", c.schedule.warmup_iterations},
        {"warmup_start_fraction", c.schedule.warmup_start_fraction},
        {"milestones", c.schedule.milestones},
        {"decay_factor", c.schedule.decay_factor}}},
      {"sgd", {{"momentum", c.sgd.momentum}, {"weight_decay", c.sgd.weight_decay}}},
      {"hidden_dim", c.hidden_dim},
      {"iterations", c.iterations},
      {"surrogate_cls", c.surrogate_cls},
      {"enqueue", c.enqueue == EnqueuePolicy::all ? "all" : "gated"},
      {"eval_samples", c.eval_samples},
      {"smoothing_window", c.smoothing_window},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  reject_unknown_keys(j,
                      {"data", "mcl", "schedule", "sgd", "hidden_dim", "iterations", "surrogate_cls",
                       "enqueue", "eval_samples", "smoothing_window"},
                      "config");
  try {
    if (j.contains("data")) {
      const auto& d = j.at("data");
      reject_unknown_keys(d,
                          {"classes", "input_dim", "separation", "noise", "consistency_low",
                           "consistency_high", "batch", "seed"},
                          "config.data");
      read_opt(d, "classes", c.data.classes);
      read_opt(d, "input_dim", c.data.input_dim);
      read_opt(d, "separation", c.data.separation);
      read_opt(d, "noise", c.data.noise);
      read_opt(d, "consistency_low", c.data.consistency_low);
      read_opt(d, "consistency_high", c.data.consistency_high);
      read_opt(d, "batch", c.data.batch);
      read_opt(d, "seed", c.data.seed);
    }
    if (j.contains("mcl")) {
      const auto& m = j.at("mcl");
      reject_unknown_keys(m, {"tau", "theta", "w0", "alpha", "lambda", "capacity", "dim"}, "config.mcl");
      read_opt(m, "tau", c.mcl.tau);
      read_opt(m, "theta", c.mcl.theta);
      read_opt(m, "w0", c.mcl.w0);
      read_opt(m, "alpha", c.mcl.alpha);
      read_opt(m, "lambda", c.mcl.lambda);
      read_opt(m, "capacity", c.mcl.capacity);
      read_opt(m, "dim", c.mcl.dim);
    }
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      reject_unknown_keys(s,
                          {"base_lr", "warmup_iterations", "warmup_start_fraction", "milestones",
                           "decay_factor"},
                          "config.schedule");
      read_opt(s, "base_lr", c.schedule.base_lr);
      read_opt(s, "warmup_iterations", c.schedule.warmup_iterations);
      read_opt(s, "warmup_start_fraction", c.schedule.warmup_start_fraction);
      read_opt(s, "milestones", c.schedule.milestones);
      read_opt(s, "decay_factor", c.schedule.decay_factor);
    }
    if (j.contains("sgd")) {
      const auto& s = j.at("sgd");
      reject_unknown_keys(s, {"momentum", "weight_decay"}, "config.sgd");
      read_opt(s, "momentum", c.sgd.momentum);
      read_opt(s, "weight_decay", c.sgd.weight_decay);
    }
    read_opt(j, "hidden_dim", c.hidden_dim);
    read_opt(j, "iterations", c.iterations);
    read_opt(j, "surrogate_cls", c.surrogate_cls);
    read_opt(j, "eval_samples", c.eval_samples);
    read_opt(j, "smoothing_window", c.smoothing_window);
    if (j.contains("enqueue")) {
      const auto policy = j.at("enqueue").get<std::string>();
      if (policy == "all") {
        c.enqueue = EnqueuePolicy::all;
      } else if (policy == "gated") {
        c.enqueue = EnqueuePolicy::gated;
      } else {
        throw std::invalid_argument("config.enqueue must be 'all' or 'gated'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainResult train(const TrainConfig& config) {
  config.validate();
  const int embed_dim = static_cast<int>(config.mcl.dim);
  TrainResult result{
      ProjectionEncoder::init(config.data.input_dim, config.hidden_dim, embed_dim, config.data.seed),
      {},
      LinearHead::init(embed_dim, config.data.classes, config.data.seed),
      {},
      MemoryBank(config.mcl.capacity, config.mcl.dim),
      {},
      {},
      generate_eval_set(config.data, static_cast<std::size_t>(config.eval_samples)),
      {}};
  result.encoder = result.initial_encoder;
  result.initial_metrics = measure(result.encoder, result.eval_set);

  // With no loss term enabled there is nothing to optimize; weight decay
  // alone would still move the parameters, so the optimizer is not stepped.
  const bool has_objective = config.mcl.lambda > 0.0 || config.surrogate_cls;
  SgdState optimizer(config.sgd);
  result.history.reserve(static_cast<std::size_t>(config.iterations));

  for (int it = 0; it < config.iterations; ++it) {
    const auto step = static_cast<std::uint64_t>(it);
    const SyntheticBatch batch = generate_batch(config.data, step);
    const EncoderCache cache = encoder_forward(result.encoder, batch.features);
    const ContrastiveBatch contrastive{cache.embeddings, batch.labels, batch.consistencies};
    contrastive.validate();

    const std::vector<ProposalRecord> bank = result.bank.snapshot();
    const std::vector<std::uint64_t> offsets = result.bank.backward_offsets(step);
    const MclGradient mcl = mcl_loss_grad(contrastive, bank, offsets, config.mcl);

    Matrix grad_z = config.mcl.lambda * mcl.grad;
    double cls = 0.0;
    HeadResult head;
    if (config.surrogate_cls) {
      head = head_loss(result.head, cache.embeddings, batch.labels);
      cls = head.loss;
      grad_z += head.grad_embeddings;
    }

    LossRecord rec;
    rec.iteration = it;
    rec.mcl = mcl.loss.total;
    rec.in_batch = mcl.loss.in_batch;
    rec.cross_batch = mcl.loss.cross_batch;
    rec.cls = cls;
    rec.total = total_loss({cls, 0.0, mcl.loss.total}, config.mcl.lambda);
    result.history.push_back(rec);

    if (has_objective) {
      const EncoderGradients grads = encoder_backward(result.encoder, cache, grad_z);
      auto params = result.encoder.parameters();
      auto grad_views = grads.parameters();
      if (config.surrogate_cls) {
        for (auto p : result.head.parameters()) params.push_back(p);
        grad_views.push_back(view(head.grad_w));
        grad_views.push_back(view(head.grad_b));
      }
      optimizer.step(params, grad_views, lr_at(config.schedule, it));
    }

    std::vector<ProposalRecord> records;
    records.reserve(batch.labels.size());
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
      records.push_back({cache.embeddings.row(static_cast<Eigen::Index>(i)).transpose(),
                         batch.labels[i], batch.consistencies[i], step});
    }
    result.bank.enqueue_batch(select_for_enqueue(records, config.enqueue, config.mcl.theta), step);
  }

  result.eval_embeddings = encoder_forward(result.encoder, result.eval_set.features).embeddings;
  result.final_metrics = compactness_metrics(result.eval_embeddings, result.eval_set.labels);
  return result;
}

double smoothed_tail(std::span<const double> values, std::size_t window) {
  if (values.empty()) return 0.0;
  const std::size_t n = std::min(window, values.size());
  double sum = 0.0;
  for (std::size_t i = values.size() - n; i < values.size(); ++i) sum += values[i];
  return sum / static_cast<double>(n);
}

double smoothed_head(std::span<const double> values, std::size_t window) {
  if (values.empty()) return 0.0;
  const std::size_t n = std::min(window, values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += values[i];
  return sum / static_cast<double>(n);
}

Compactness compactness_metrics(const Matrix& embeddings, std::span<const int> labels) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw std::invalid_argument("compactness_metrics: embeddings and labels differ in length");
  }
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  Compactness out;
  std::set<int> kept;
  for (const auto& [label, n] : counts) {
    if (n >= 2) {
      kept.insert(label);
    } else {
      out.excluded_labels.push_back(label);
    }
  }
  if (kept.size() < 2) {
    throw std::invalid_argument("compactness_metrics: need at least two classes with two samples each");
  }

  Matrix unit = embeddings;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) unit.row(i).normalize();

  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const int li = labels[static_cast<std::size_t>(i)];
    if (!kept.contains(li)) continue;
    for (Eigen::Index j = i + 1; j < unit.rows(); ++j) {
      const int lj = labels[static_cast<std::size_t>(j)];
      if (!kept.contains(lj)) continue;
      const double cos = unit.row(i).dot(unit.row(j));
      if (li == lj) {
        intra += cos;
        ++n_intra;
      } else {
        inter += cos;
        ++n_inter;
      }
    }
  }
  out.intra = intra / static_cast<double>(n_intra);
  out.inter = inter / static_cast<double>(n_inter);
  out.margin = out.intra - out.inter;
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return {buf, ptr};
}

void export_embeddings(const Matrix& embeddings, std::span<const int> labels,
                       const std::filesystem::path& path) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw std::invalid_argument("export_embeddings: embeddings and labels differ in length");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "label";
  for (Eigen::Index d = 0; d < embeddings.cols(); ++d) out << ",dim" << d;
  out << '\n';
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    out << labels[static_cast<std::size_t>(i)];
    for (Eigen::Index d = 0; d < embeddings.cols(); ++d) out << ',' << format_double(embeddings(i, d));
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::pair<Matrix, std::vector<int>> read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  const auto dims = static_cast<Eigen::Index>(std::count(header.begin(), header.end(), ','));
  std::vector<int> labels;
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t start = 0;
    Eigen::Index field = 0;
    while (start <= line.size()) {
      const std::size_t comma = std::min(line.find(',', start), line.size());
      const char* b = line.data() + start;
      const char* e = line.data() + comma;
      if (field == 0) {
        int label = 0;
        std::from_chars(b, e, label);
        labels.push_back(label);
      } else {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(b, e, v);
        if (ec != std::errc() || ptr != e) throw std::runtime_error(path.string() + ": bad number");
        values.push_back(v);
      }
      ++field;
      start = comma + 1;
    }
    if (field != dims + 1) throw std::runtime_error(path.string() + ": ragged row");
  }
  Matrix m(static_cast<Eigen::Index>(labels.size()), dims);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = values[static_cast<std::size_t>(i)];
  return {std::move(m), std::move(labels)};
}

void write_loss_curve(std::span<const LossRecord> history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "iteration,total,in_batch,cross_batch,mcl,cls\n";
  for (const auto& r : history) {
    out << r.iteration << ',' << format_double(r.total) << ',' << format_double(r.in_batch) << ','
        << format_double(r.cross_batch) << ',' << format_double(r.mcl) << ',' << format_double(r.cls)
        << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace fsood
