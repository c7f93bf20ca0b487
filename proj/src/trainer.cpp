// SPDX-License-Identifier: Apache-2.0

#include "mvl/trainer.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "mvl/data.hpp"
#include "mvl/errors.hpp"
#include "mvl/rng.hpp"

namespace mvl {

StageConfig StageConfig::defaults(int stage) {
  StageConfig c;
  c.stage = stage;
  if (stage == 2) {
    c.batch_size = 128;
    c.peak_lr = 2e-5;
  }
  c.validate();
  return c;
}

void StageConfig::validate() const {
  if (stage != 1 && stage != 2) throw Error(ErrorKind::kConfig, fmt::format("stage must be 1 or 2, got {}", stage));
  if (batch_size == 0) throw Error(ErrorKind::kConfig, "batch size must be positive");
  if (physical_batch == 0) throw Error(ErrorKind::kConfig, "physical batch must be positive");
  if (!(peak_lr >= 0.0) || !(min_lr >= 0.0) || min_lr > peak_lr) {
    throw Error(ErrorKind::kConfig, fmt::format("need 0 <= min_lr ({}) <= peak_lr ({})", min_lr, peak_lr));
  }
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
    throw Error(ErrorKind::kConfig, fmt::format("warmup ratio {} outside [0, 1)", warmup_ratio));
  }
}

std::size_t StageConfig::accumulation_steps() const { return (batch_size + physical_batch - 1) / physical_batch; }

std::size_t StageConfig::total_steps(std::size_t n_samples) const {
  const std::size_t per_epoch = (n_samples + batch_size - 1) / batch_size;
  const std::size_t steps = epochs * per_epoch;
  return max_steps > 0 ? std::min(steps, max_steps) : steps;
}

LrSchedule StageConfig::schedule(std::size_t n_samples) const {
  return make_schedule(peak_lr, min_lr, std::max<std::size_t>(total_steps(n_samples), 1), warmup_ratio);
}

std::vector<NamedParam<float>> trainable_parameters(const MultimodalModel<float>& model, int stage) {
  if (stage != 1 && stage != 2) throw Error(ErrorKind::kConfig, fmt::format("stage must be 1 or 2, got {}", stage));
  auto params = model.parameters(ParamGroup::kProjector);
  if (stage == 2) {
    auto lm = model.parameters(ParamGroup::kLm);
    std::move(lm.begin(), lm.end(), std::back_inserter(params));
  }
  return params;
}

void apply_freezing(MultimodalModel<float>& model, int stage) {
  if (stage != 1 && stage != 2) throw Error(ErrorKind::kConfig, fmt::format("stage must be 1 or 2, got {}", stage));
  model.set_requires_grad(ParamGroup::kEncoder, false);
  model.set_requires_grad(ParamGroup::kProjector, true);
  model.set_requires_grad(ParamGroup::kLm, stage == 2);
}

std::vector<PreparedSample> prepare_samples(std::span<const ConversationSample> samples, const ModelConfig& config,
                                            bool for_training, const RenderOptions& options) {
  std::map<std::string, std::shared_ptr<const ImageInput>> images;
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    PreparedSample p;
    p.id = s.id;
    p.rendered = render_conversation(s, for_training, options);
    const std::size_t length = assembled_length(p.rendered, config.encoder.token_count());
    if (length > config.lm.context_length) {
      throw Error(ErrorKind::kContextOverflow,
                  fmt::format("sample '{}' assembles to {} positions, context is {}", s.id, length,
                              config.lm.context_length));
    }
    if (s.image) {
      auto& slot = images[s.image->key()];
      if (!slot) slot = std::make_shared<const ImageInput>(preprocess(load_image(*s.image), config.encoder.image_size));
      p.image = slot;
    }
    out.push_back(std::move(p));
  }
  return out;
}

StageResult run_stage(MultimodalModel<float>& model, std::span<const PreparedSample> data, const StageConfig& config,
                      const StepCallback& on_step) {
  config.validate();
  StageResult result;
  const std::size_t total = config.total_steps(data.size());
  if (total == 0) return result;
  if (data.empty()) throw Error(ErrorKind::kContract, "run_stage needs at least one sample");

  apply_freezing(model, config.stage);
  auto params = trainable_parameters(model, config.stage);
  auto states = make_adam_states<float>(params);
  const auto schedule = config.schedule(data.size());

  // The encoder is frozen in both stages, so its output per image never changes.
  std::map<const ImageInput*, Tensor<float>> feature_cache;
  auto features_for = [&](const PreparedSample& s) -> std::optional<Tensor<float>> {
    if (!s.image || !s.rendered.image_slot) return std::nullopt;
    auto it = feature_cache.find(s.image.get());
    if (it == feature_cache.end()) it = feature_cache.emplace(s.image.get(), encode_frozen(model, *s.image)).first;
    return it->second;
  };

  const std::uint64_t stage_seed = config.seed ^ static_cast<std::uint64_t>(config.stage);
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = data.size();
  std::size_t epoch = 0;

  for (std::size_t step = 0; step < total; ++step) {
    if (cursor >= data.size()) {
      std::iota(order.begin(), order.end(), 0);
      Rng rng(derive_seed(stage_seed, epoch++));
      rng.shuffle(std::span<std::size_t>(order));
      cursor = 0;
    }
    const std::size_t batch_end = std::min(cursor + config.batch_size, data.size());
    const std::size_t batch = batch_end - cursor;

    for (auto& p : params) p.tensor.zero_grad();
    double batch_loss = 0.0;
    for (std::size_t begin = cursor; begin < batch_end; begin += config.physical_batch) {
      const std::size_t end = std::min(begin + config.physical_batch, batch_end);
      std::vector<PreparedSample> chunk;
      std::vector<std::optional<Tensor<float>>> cached;
      for (std::size_t k = begin; k < end; ++k) {
        chunk.push_back(data[order[k]]);
        cached.push_back(features_for(data[order[k]]));
      }
      const auto loss = compute_loss<float>(model, chunk, cached);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        std::vector<std::string> ids;
        for (const auto& s : chunk) ids.push_back(s.id);
        throw Error(ErrorKind::kNonFinite, fmt::format("non-finite loss {} at step {} in samples [{}]", value, step,
                                                       fmt::join(ids, ", ")));
      }
      const double weight = static_cast<double>(end - begin) / static_cast<double>(batch);
      batch_loss += value * weight;
      backward(scale(loss, static_cast<float>(weight)));
    }
    cursor = batch_end;

    const double lr = cosine_lr(schedule, step);
    adam_step<float>(params, states, lr, config.adam);
    LogRecord record{step, lr, batch_loss};
    result.log.push_back(record);
    if (on_step) on_step(record);
  }
  result.steps = total;
  for (auto& p : params) p.tensor.clear_grad();
  return result;
}

std::string metric_log_text(std::span<const LogRecord> log) {
  std::string out;
  for (const auto& r : log) out += fmt::format("{{\"step\":{},\"lr\":{},\"loss\":{}}}\n", r.step, r.lr, r.loss);
  return out;
}

void write_metric_log(const std::filesystem::path& path, std::span<const LogRecord> log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write metric log '{}'", path.string()));
  out << metric_log_text(log);
}

}  // namespace mvl
