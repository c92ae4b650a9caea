#include "modalign/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "modalign/error.hpp"
#include "modalign/io.hpp"
#include "modalign/random.hpp"

namespace modalign {

namespace {

// Below this spread of logits around the positive the objective is evaluated
// as log1p(mean(expm1(d))), which keeps full relative precision of the
// (loss - ln B) part when the softmax is nearly uniform.
constexpr double kNearUniformSpread = 0.5;

/// Cross-entropy of one softmax direction over a B x B similarity block.
/// Returns sum_i (loss_i - shift) / B and, if `grad` is set, adds
/// weight * d(mean loss)/d s into it.
double softmax_cross_entropy(const DenseMatrix& sims, double temperature, bool columns,
                             double shift, double weight, DenseMatrix* grad) {
  const std::size_t batch = sims.rows;
  const double log_batch = std::log(static_cast<double>(batch));
  std::vector<double> d(batch);
  std::vector<double> p(batch);
  double total = 0.0;

  for (std::size_t i = 0; i < batch; ++i) {
    auto logit = [&](std::size_t j) {
      return (columns ? sims.at(j, i) : sims.at(i, j)) / temperature;
    };
    const double positive = logit(i);
    double max_d = 0.0;
    double max_abs = 0.0;
    for (std::size_t j = 0; j < batch; ++j) {
      d[j] = logit(j) - positive;
      max_d = std::max(max_d, d[j]);
      max_abs = std::max(max_abs, std::abs(d[j]));
    }

    double row_value = 0.0;
    if (max_abs <= kNearUniformSpread) {
      double acc = 0.0;
      for (std::size_t j = 0; j < batch; ++j) acc += std::expm1(d[j]);
      row_value = std::log1p(acc / static_cast<double>(batch)) + (log_batch - shift);
    } else if (max_d == 0.0) {
      double acc = 0.0;
      for (std::size_t j = 0; j < batch; ++j) {
        if (j != i) acc += std::exp(d[j]);
      }
      row_value = std::log1p(acc) - shift;
    } else {
      double acc = 0.0;
      for (std::size_t j = 0; j < batch; ++j) acc += std::exp(d[j] - max_d);
      row_value = max_d + std::log(acc) - shift;
    }
    total += row_value;

    if (grad != nullptr) {
      double z = 0.0;
      for (std::size_t j = 0; j < batch; ++j) {
        p[j] = std::exp(d[j] - max_d);
        z += p[j];
      }
      const double scale = weight / (static_cast<double>(batch) * temperature);
      for (std::size_t j = 0; j < batch; ++j) {
        const double g = scale * (p[j] / z - (j == i ? 1.0 : 0.0));
        if (columns) {
          grad->at(j, i) += g;
        } else {
          grad->at(i, j) += g;
        }
      }
    }
  }
  return total / static_cast<double>(batch);
}

void check_loss_inputs(const EmbeddingMatrix& adapted, const EmbeddingMatrix& texts,
                       double temperature) {
  if (adapted.rows() != texts.rows() || adapted.dim() != texts.dim()) {
    fail(ErrorCode::DimensionMismatch,
         "loss inputs must share shape: [" + std::to_string(adapted.rows()) + " x " +
             std::to_string(adapted.dim()) + "] vs [" + std::to_string(texts.rows()) + " x " +
             std::to_string(texts.dim()) + "]");
  }
  if (adapted.rows() < 2) fail(ErrorCode::DegenerateBatch, "a batch needs at least 2 pairs");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorCode::NonPositiveTemperature, "temperature must be positive and finite");
  }
}

/// Loss objective minus `shift` per anchor; gradient w.r.t. adapted rows on request.
double contrastive_objective(const EmbeddingMatrix& adapted, const EmbeddingMatrix& texts,
                             double temperature, bool symmetric, double shift,
                             DenseMatrix* grad_adapted) {
  const std::size_t batch = adapted.rows();
  DenseMatrix sims{batch, batch, std::vector<double>(batch * batch)};
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < batch; ++j) sims.at(i, j) = dot(adapted.row(i), texts.row(j));
  }

  DenseMatrix grad_sims{batch, batch, std::vector<double>(batch * batch, 0.0)};
  DenseMatrix* gs = grad_adapted != nullptr ? &grad_sims : nullptr;
  double value = 0.0;
  if (symmetric) {
    value = 0.5 * softmax_cross_entropy(sims, temperature, false, shift, 0.5, gs) +
            0.5 * softmax_cross_entropy(sims, temperature, true, shift, 0.5, gs);
  } else {
    value = softmax_cross_entropy(sims, temperature, false, shift, 1.0, gs);
  }

  if (grad_adapted != nullptr) {
    const std::size_t dim = adapted.dim();
    *grad_adapted = DenseMatrix{batch, dim, std::vector<double>(batch * dim, 0.0)};
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < batch; ++j) {
        const double g = grad_sims.at(i, j);
        auto z = texts.row(j);
        for (std::size_t c = 0; c < dim; ++c) grad_adapted->at(i, c) += g * z[c];
      }
    }
  }
  return value;
}

struct Forward {
  EmbeddingMatrix adapted;
  std::vector<double> norms;  // |W v + b| per row, before normalization
};

Forward forward(const LinearAdapter& adapter, const EmbeddingMatrix& visual) {
  if (visual.dim() != adapter.dim_in) {
    fail(ErrorCode::DimensionMismatch, "adapter expects dim " + std::to_string(adapter.dim_in) +
                                           ", got " + std::to_string(visual.dim()));
  }
  Forward f{EmbeddingMatrix(visual.rows(), adapter.dim_out), std::vector<double>(visual.rows())};
  for (std::size_t r = 0; r < visual.rows(); ++r) {
    auto v = visual.row(r);
    auto out = f.adapted.row(r);
    for (std::size_t o = 0; o < adapter.dim_out; ++o) {
      double acc = adapter.bias[o];
      const double* w = adapter.weight.data() + o * adapter.dim_in;
      for (std::size_t c = 0; c < adapter.dim_in; ++c) acc += w[c] * v[c];
      out[o] = acc;
    }
    f.norms[r] = l2_norm(out);
    if (!(f.norms[r] >= kZeroNormThreshold)) {
      fail(ErrorCode::ZeroVector, "adapted row " + std::to_string(r) + " collapsed to zero");
    }
    for (double& x : out) x /= f.norms[r];
  }
  return f;
}

/// Chain rule through a = u/|u| and u = W v + b. Output: [dW..., db...].
std::vector<double> backprop(const LinearAdapter& adapter, const EmbeddingMatrix& visual,
                             const Forward& f, const DenseMatrix& grad_adapted) {
  const std::size_t n_weight = adapter.dim_out * adapter.dim_in;
  std::vector<double> grad(n_weight + adapter.dim_out, 0.0);
  std::vector<double> du(adapter.dim_out);
  for (std::size_t r = 0; r < visual.rows(); ++r) {
    auto a = f.adapted.row(r);
    double ga = 0.0;
    for (std::size_t o = 0; o < adapter.dim_out; ++o) ga += grad_adapted.at(r, o) * a[o];
    for (std::size_t o = 0; o < adapter.dim_out; ++o) {
      du[o] = (grad_adapted.at(r, o) - ga * a[o]) / f.norms[r];
    }
    auto v = visual.row(r);
    for (std::size_t o = 0; o < adapter.dim_out; ++o) {
      double* gw = grad.data() + o * adapter.dim_in;
      for (std::size_t c = 0; c < adapter.dim_in; ++c) gw[c] += du[o] * v[c];
      grad[n_weight + o] += du[o];
    }
  }
  return grad;
}

double& parameter(LinearAdapter& adapter, std::size_t p) {
  const std::size_t n_weight = adapter.weight.size();
  return p < n_weight ? adapter.weight[p] : adapter.bias[p - n_weight];
}

bool parse_bool(const std::string& value, std::size_t line) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  fail(ErrorCode::Format, "config line " + std::to_string(line) + ": expected a boolean");
}

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

}  // namespace

LinearAdapter LinearAdapter::identity(std::size_t dim, std::string modality) {
  LinearAdapter a{std::move(modality), dim, dim, std::vector<double>(dim * dim, 0.0),
                  std::vector<double>(dim, 0.0)};
  for (std::size_t i = 0; i < dim; ++i) a.weight[i * dim + i] = 1.0;
  return a;
}

LinearAdapter LinearAdapter::random(std::size_t dim_in, std::size_t dim_out, std::uint64_t seed,
                                    std::string modality) {
  if (dim_in == 0 || dim_out == 0) fail(ErrorCode::InvalidArgument, "adapter dims must be >= 1");
  Rng rng(seed);
  LinearAdapter a{std::move(modality), dim_in, dim_out,
                  gaussian_vector(rng, dim_in * dim_out, 1.0 / std::sqrt(double(dim_in))),
                  std::vector<double>(dim_out, 0.0)};
  return a;
}

void LinearAdapter::validate() const {
  if (dim_in == 0 || dim_out == 0) fail(ErrorCode::InvalidArgument, "adapter dims must be >= 1");
  if (weight.size() != dim_in * dim_out || bias.size() != dim_out) {
    fail(ErrorCode::DimensionMismatch, "adapter parameter shapes do not match its dims");
  }
  for (double w : weight) {
    if (!std::isfinite(w)) fail(ErrorCode::NonFinite, "adapter weight is not finite");
  }
  for (double b : bias) {
    if (!std::isfinite(b)) fail(ErrorCode::NonFinite, "adapter bias is not finite");
  }
}

void TrainConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorCode::NonPositiveTemperature, "temperature must be positive and finite");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorCode::InvalidArgument, "learning_rate must be positive");
  }
  if (batch_size < 2) fail(ErrorCode::InvalidArgument, "batch_size must be >= 2");
  if (epochs < 1) fail(ErrorCode::InvalidArgument, "epochs must be >= 1");
}

TrainConfig TrainConfig::parse(std::string_view text) {
  TrainConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string content = trim(raw);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::Format, "config line " + std::to_string(line) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    try {
      if (key == "temperature") {
        cfg.temperature = std::stod(value);
      } else if (key == "learning_rate") {
        cfg.learning_rate = std::stod(value);
      } else if (key == "batch_size") {
        cfg.batch_size = std::stoull(value);
      } else if (key == "epochs") {
        cfg.epochs = std::stoull(value);
      } else if (key == "seed") {
        cfg.seed = std::stoull(value);
      } else if (key == "optimizer") {
        if (value == "sgd" || value == "SGD") {
          cfg.optimizer = Optimizer::Sgd;
        } else if (value == "adam" || value == "ADAM") {
          cfg.optimizer = Optimizer::Adam;
        } else {
          fail(ErrorCode::Format, "config line " + std::to_string(line) + ": optimizer is sgd|adam");
        }
      } else if (key == "symmetric_loss") {
        cfg.symmetric_loss = parse_bool(value, line);
      } else {
        fail(ErrorCode::Format, "config line " + std::to_string(line) + ": unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      fail(ErrorCode::Format, "config line " + std::to_string(line) + ": bad value for '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

std::vector<TrainingPair> make_training_pairs(const KnowledgeBase& kb,
                                              const EmbeddingMatrix& visual,
                                              std::span<const std::string> sample_ids) {
  if (!visual.has_labels()) {
    fail(ErrorCode::Format, "visual embeddings need sample-id labels to be paired");
  }
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t r = 0; r < visual.rows(); ++r) by_id.emplace(visual.label(r), r);

  std::vector<TrainingPair> pairs;
  auto add = [&](const std::string& id, std::size_t visual_row) {
    auto text_row = kb.pair_row(id);
    if (!text_row) fail(ErrorCode::UnknownSample, "no paired description for sample '" + id + "'");
    pairs.push_back({id, visual.embedding(visual_row), *text_row});
  };
  if (sample_ids.empty()) {
    for (std::size_t r = 0; r < visual.rows(); ++r) add(visual.label(r), r);
  } else {
    for (const auto& id : sample_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) fail(ErrorCode::UnknownSample, "sample '" + id + "' has no embedding");
      add(id, it->second);
    }
  }
  return pairs;
}

LossResult info_nce_loss(const EmbeddingMatrix& adapted, const EmbeddingMatrix& texts,
                         double temperature, bool symmetric) {
  check_loss_inputs(adapted, texts, temperature);
  LossResult result;
  result.loss = contrastive_objective(adapted, texts, temperature, symmetric, 0.0, &result.gradient);
  return result;
}

EmbeddingMatrix apply(const LinearAdapter& adapter, const EmbeddingMatrix& visual) {
  adapter.validate();
  auto f = forward(adapter, visual);
  if (visual.has_labels()) f.adapted.set_labels(visual.labels());
  return std::move(f.adapted);
}

TrainResult train(std::span<const TrainingPair> pairs, const KnowledgeBase& kb,
                  const TrainConfig& config, const std::optional<LinearAdapter>& init) {
  config.validate();
  if (pairs.size() < 2) fail(ErrorCode::DegenerateBatch, "training needs at least 2 pairs");
  const std::size_t dim_in = pairs.front().visual.dim();
  for (const auto& p : pairs) {
    if (p.visual.dim() != dim_in) {
      fail(ErrorCode::DimensionMismatch, "sample '" + p.sample_id + "' has a different dim");
    }
    auto row = kb.pair_row(p.sample_id);
    if (!row || *row != p.text_row) {
      fail(ErrorCode::UnknownSample, "sample '" + p.sample_id + "' is not paired with row " +
                                         std::to_string(p.text_row));
    }
  }
  const bool single_text = std::all_of(pairs.begin(), pairs.end(), [&](const TrainingPair& p) {
    return p.text_row == pairs.front().text_row;
  });
  if (single_text) {
    fail(ErrorCode::DegenerateBatch, "all pairs share one description; no negatives available");
  }

  LinearAdapter adapter;
  if (init) {
    adapter = *init;
  } else if (dim_in == kb.dim()) {
    adapter = LinearAdapter::identity(dim_in);
  } else {
    adapter = LinearAdapter::random(dim_in, kb.dim(), derive_seed(config.seed, "adapter-init"));
  }
  adapter.validate();
  if (adapter.dim_in != dim_in || adapter.dim_out != kb.dim()) {
    fail(ErrorCode::DimensionMismatch, "initial adapter shape does not match data");
  }

  const std::size_t n_params = adapter.weight.size() + adapter.bias.size();
  std::vector<double> first_moment(n_params, 0.0);
  std::vector<double> second_moment(n_params, 0.0);
  std::uint64_t step = 0;

  TrainResult result;
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, "shuffle", epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::size_t batch = end - start;
      if (batch < 2) break;

      EmbeddingMatrix visual(batch, dim_in);
      EmbeddingMatrix texts(batch, kb.dim());
      for (std::size_t b = 0; b < batch; ++b) {
        const auto& pair = pairs[order[start + b]];
        std::copy_n(pair.visual.values().begin(), dim_in, visual.row(b).begin());
        auto z = kb.embeddings().row(pair.text_row);
        std::copy(z.begin(), z.end(), texts.row(b).begin());
      }

      const Forward f = forward(adapter, visual);
      DenseMatrix grad_adapted;
      const double loss = contrastive_objective(f.adapted, texts, config.temperature,
                                                config.symmetric_loss, 0.0, &grad_adapted);
      if (!std::isfinite(loss)) fail(ErrorCode::Numerical, "training loss became non-finite");
      const auto grad = backprop(adapter, visual, f, grad_adapted);

      ++step;
      for (std::size_t p = 0; p < n_params; ++p) {
        double update = grad[p];
        if (config.optimizer == Optimizer::Adam) {
          first_moment[p] = TrainConfig::kAdamBeta1 * first_moment[p] +
                            (1.0 - TrainConfig::kAdamBeta1) * grad[p];
          second_moment[p] = TrainConfig::kAdamBeta2 * second_moment[p] +
                             (1.0 - TrainConfig::kAdamBeta2) * grad[p] * grad[p];
          const double m_hat =
              first_moment[p] / (1.0 - std::pow(TrainConfig::kAdamBeta1, double(step)));
          const double v_hat =
              second_moment[p] / (1.0 - std::pow(TrainConfig::kAdamBeta2, double(step)));
          update = m_hat / (std::sqrt(v_hat) + TrainConfig::kAdamEpsilon);
        }
        parameter(adapter, p) -= config.learning_rate * update;
      }

      epoch_loss += loss * static_cast<double>(batch);
      epoch_count += batch;
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(epoch_count));
  }
  adapter.validate();
  result.adapter = std::move(adapter);
  return result;
}

GradientCheckReport gradient_check(const LinearAdapter& adapter, const EmbeddingMatrix& visual,
                                   const EmbeddingMatrix& texts, const TrainConfig& config) {
  adapter.validate();
  const EmbeddingMatrix unit_texts = normalize_rows(texts);
  if (visual.rows() != texts.rows()) {
    fail(ErrorCode::DimensionMismatch, "visual and text batches differ in size");
  }
  check_loss_inputs(EmbeddingMatrix(visual.rows(), adapter.dim_out), unit_texts,
                    config.temperature);

  const Forward f = forward(adapter, visual);
  DenseMatrix grad_adapted;
  contrastive_objective(f.adapted, unit_texts, config.temperature, config.symmetric_loss, 0.0,
                        &grad_adapted);
  const auto analytic = backprop(adapter, visual, f, grad_adapted);

  // The constant ln B is subtracted before differencing so the near-uniform
  // regime keeps its small variations above rounding noise.
  const double shift = std::log(static_cast<double>(visual.rows()));
  auto objective = [&](const LinearAdapter& a) {
    return contrastive_objective(forward(a, visual).adapted, unit_texts, config.temperature,
                                 config.symmetric_loss, shift, nullptr);
  };

  GradientCheckReport report;
  LinearAdapter probe = adapter;
  for (std::size_t p = 0; p < analytic.size(); ++p) {
    double& theta = parameter(probe, p);
    const double saved = theta;
    theta = saved + kGradientCheckStep;
    const double up = objective(probe);
    theta = saved - kGradientCheckStep;
    const double down = objective(probe);
    theta = saved;
    const double numeric = (up - down) / (2.0 * kGradientCheckStep);
    const double denom =
        std::max({std::abs(analytic[p]), std::abs(numeric), kGradientCheckFloor});
    const double rel = std::abs(analytic[p] - numeric) / denom;
    if (!std::isfinite(rel)) fail(ErrorCode::Numerical, "gradient check produced a non-finite value");
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  report.parameters_checked = analytic.size();
  report.pass = report.max_rel_error < kGradientCheckTolerance;
  return report;
}

GradientCheckReport gradient_check(const LinearAdapter& adapter,
                                   std::span<const TrainingPair> batch, const KnowledgeBase& kb,
                                   const TrainConfig& config) {
  if (batch.size() < 2) fail(ErrorCode::DegenerateBatch, "gradient check needs batch >= 2");
  EmbeddingMatrix visual;
  EmbeddingMatrix texts;
  for (const auto& p : batch) {
    visual.append_row(p.visual.values());
    texts.append_row(kb.embeddings().row(p.text_row));
  }
  return gradient_check(adapter, visual, texts, config);
}

GradientCheckReport gradient_check_random(std::size_t dim_in, std::size_t dim_out,
                                          std::size_t batch, std::uint64_t seed,
                                          const TrainConfig& config) {
  const auto adapter =
      LinearAdapter::random(dim_in, dim_out, derive_seed(seed, "gradcheck-adapter"));
  LinearAdapter biased = adapter;
  Rng rng(derive_seed(seed, "gradcheck-data"));
  biased.bias = gaussian_vector(rng, dim_out, 0.1);
  EmbeddingMatrix visual;
  EmbeddingMatrix texts;
  for (std::size_t b = 0; b < batch; ++b) {
    visual.append_row(random_unit_vector(rng, dim_in));
    texts.append_row(random_unit_vector(rng, dim_out));
  }
  return gradient_check(biased, visual, texts, config);
}

void write_adapter(const std::filesystem::path& path, const LinearAdapter& adapter) {
  adapter.validate();
  nlohmann::ordered_json header;
  header["format"] = "modalign-adapter";
  header["version"] = 1;
  header["modality"] = adapter.modality;
  header["dim_in"] = adapter.dim_in;
  header["dim_out"] = adapter.dim_out;
  std::ostringstream out(std::ios::binary);
  out << header.dump() << '\n';
  write_ubem(out, EmbeddingMatrix(adapter.dim_out, adapter.dim_in, adapter.weight));
  write_ubem(out, EmbeddingMatrix(1, adapter.dim_out, adapter.bias));
  write_file_atomic(path, out.str());
}

LinearAdapter read_adapter(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  LinearAdapter a;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != "modalign-adapter") {
      fail(ErrorCode::Format, path.string() + ": not an adapter file");
    }
    a.modality = header.at("modality").get<std::string>();
    a.dim_in = header.at("dim_in").get<std::size_t>();
    a.dim_out = header.at("dim_out").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, path.string() + ": bad adapter header: " + e.what());
  }
  const auto weight = read_ubem(in);
  const auto bias = read_ubem(in);
  if (weight.rows() != a.dim_out || weight.dim() != a.dim_in || bias.rows() != 1 ||
      bias.dim() != a.dim_out) {
    fail(ErrorCode::Format, path.string() + ": adapter blobs do not match header dims");
  }
  a.weight.assign(weight.data().begin(), weight.data().end());
  a.bias.assign(bias.data().begin(), bias.data().end());
  a.validate();
  return a;
}

}  // namespace modalign
