#include <json.hpp>

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "av360/model.hpp"

namespace av360::model {

using nlohmann::json;

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

std::vector<TrainLogEntry> train(TrimodalTransformer& model,
                                 const std::vector<ModelSample>& dataset,
                                 const TrainParams& params, Phase phase,
                                 std::ostream* log_out) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (params.batch_size == 0 || params.grad_accum == 0)
    throw std::invalid_argument("train: batch size and accumulation must be positive");

  const std::size_t n = dataset.size();
  const std::size_t micro_per_epoch = (n + params.batch_size - 1) / params.batch_size;
  const std::size_t steps_per_epoch =
      (micro_per_epoch + params.grad_accum - 1) / params.grad_accum;
  const std::size_t total_steps = steps_per_epoch * params.epochs;

  Rng shuffle_rng(derive_seed(params.seed, "shuffle"));
  Rng mask_rng(derive_seed(params.seed, "mask"));
  nn::AdamW opt(params.weight_decay);

  std::vector<TrainLogEntry> log;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    std::size_t cursor = 0;
    while (cursor < n) {
      model.params().zero_grad();
      double step_loss = 0.0;
      std::map<std::string, double> step_components;
      std::size_t micro_done = 0;

      for (std::size_t acc = 0; acc < params.grad_accum && cursor < n; ++acc) {
        const std::size_t batch_end = std::min(cursor + params.batch_size, n);
        const double batch_count = static_cast<double>(batch_end - cursor);
        double micro_loss = 0.0;

        for (; cursor < batch_end; ++cursor) {
          const ModelSample& sample = dataset[order[cursor]];
          LossBreakdown parts;
          ad::Var loss;
          if (phase == Phase::Pretrain) {
            MaskPlan plan = sample_mask_plan(sample.regions.size(),
                                             sample.events.size(),
                                             sample.tokens.size(), params.mask_p,
                                             mask_rng);
            loss = model.pretrain_loss(sample, plan, params.grounding_weight, &parts);
          } else {
            loss = model.finetune_loss(sample, params.grounding_weight, &parts);
          }
          if (!std::isfinite(parts.total))
            throw std::runtime_error(
                "training diverged: non-finite loss at optimizer step " +
                std::to_string(step) + " (" + std::string(to_string(phase)) + ")");
          micro_loss += parts.total;
          for (const auto& [k, v] : parts.components) step_components[k] += v;

          // mean over the micro-batch, averaged across accumulated batches
          ad::Var scaled =
              ad::scale(loss, 1.0 / (batch_count * params.grad_accum));
          ad::backward(scaled);
        }
        step_loss += micro_loss / batch_count;
        ++micro_done;
      }

      const double lr = nn::lr_schedule(step, total_steps, params.lr, params.warmup);
      opt.step(model.params(), lr);

      TrainLogEntry entry;
      entry.step = step;
      entry.phase = phase;
      entry.lr = lr;
      entry.loss = step_loss / static_cast<double>(micro_done);
      for (auto& [k, v] : step_components) entry.components[k] = v;
      log.push_back(entry);

      if (log_out) {
        json j{{"step", entry.step},
               {"phase", to_string(phase)},
               {"lr", entry.lr},
               {"loss", entry.loss}};
        for (const auto& [k, v] : entry.components) j["components"][k] = v;
        (*log_out) << j.dump() << "\n";
      }
      ++step;
    }
  }
  return log;
}

}  // namespace av360::model
