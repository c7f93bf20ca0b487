// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training: stage 1 updates only the projector, stage 2 the
// projector and the language model. The vision encoder is frozen throughout.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mvl/model.hpp"
#include "mvl/optim.hpp"
#include "mvl/sample.hpp"

namespace mvl {

struct StageConfig {
  int stage = 1;
  std::size_t batch_size = 256;
  double peak_lr = 2e-3;
  double min_lr = 0.0;
  std::size_t epochs = 1;
  double warmup_ratio = 0.03;
  // Stops after this many optimizer steps when nonzero.
  std::size_t max_steps = 0;
  // Samples taped per backward pass; larger logical batches accumulate.
  std::size_t physical_batch = 16;
  std::uint64_t seed = 0;
  AdamConfig adam;

  /// Batch size and learning rate defaults for `stage` (256 / 2e-3 and 128 / 2e-5).
  static StageConfig defaults(int stage);

  std::size_t accumulation_steps() const;
  std::size_t total_steps(std::size_t n_samples) const;
  /// Schedule over total_steps(n_samples) optimizer steps.
  LrSchedule schedule(std::size_t n_samples) const;
  void validate() const;
};

/// Stage 1: projector. Stage 2: projector and language model. Never the encoder.
std::vector<NamedParam<float>> trainable_parameters(const MultimodalModel<float>& model, int stage);

/// Sets requires_grad on exactly the stage's trainable parameters.
void apply_freezing(MultimodalModel<float>& model, int stage);

/// Renders and preprocesses samples for `config`. Images shared between
/// samples are decoded once. Samples whose assembled length exceeds the
/// context are rejected with a context-overflow error naming the sample.
std::vector<PreparedSample> prepare_samples(std::span<const ConversationSample> samples, const ModelConfig& config,
                                            bool for_training = true, const RenderOptions& options = {});

struct LogRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;

  bool operator==(const LogRecord&) const = default;
};

struct StageResult {
  std::vector<LogRecord> log;
  std::size_t steps = 0;
};

using StepCallback = std::function<void(const LogRecord&)>;

/// Runs epochs x ceil(N / batch) optimizer steps (capped by max_steps). Step k
/// uses cosine_lr(schedule, k). A non-finite loss aborts with the step and
/// the ids of the offending batch.
StageResult run_stage(MultimodalModel<float>& model, std::span<const PreparedSample> data, const StageConfig& config,
                      const StepCallback& on_step = {});

/// One JSON object per line: {"step", "lr", "loss"}.
void write_metric_log(const std::filesystem::path& path, std::span<const LogRecord> log);
std::string metric_log_text(std::span<const LogRecord> log);

}  // namespace mvl
