#pragma once

#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "xmodal/eval.hpp"
#include "xmodal/grad.hpp"

namespace xmodal {

struct TrainConfig {
  double lr = 5e-5;
  double weight_decay = 1e-6;
  std::size_t batch_size = 48;
  double tau = 0.1;
  double lambda = 10.0;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;  // epochs without a validation improvement
  std::vector<std::size_t> recall_ks = {1, 5, 10};
  std::uint64_t seed = 1;
  RankScore rank_score = RankScore::Aggregated;
  ExtVariant ext_variant = ExtVariant::SummedScore;
  bool apply_pe = true;
  int threads = 1;
};

// Reads known keys, rejecting unknown ones and naming bad fields.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& c);

// Adam with decoupled weight decay: p <- p - lr*wd*p applied before the
// moment update; beta1=0.9, beta2=0.999, eps=1e-8, bias-corrected.
struct AdamState {
  std::vector<std::vector<double>> m;  // per parameter block
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};
AdamState make_adam_state(const HeadParams& params);
void adam_step(HeadParams& params, const GradientSet& grads, AdamState& state, double lr,
               double weight_decay);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss_global = 0.0;
  double loss_external = 0.0;
  double loss_internal = 0.0;
  double r_sum = 0.0;  // validation
};

struct Checkpoint {
  HeadParams params;
  std::size_t epoch = 0;
  double r_sum = 0.0;
  std::string rng_state;  // shuffle engine state at snapshot time
};

struct FitResult {
  Checkpoint best;
  std::vector<EpochStats> history;
  bool diverged = false;
  std::string message;
};

// Shuffled seeded batches over the training corpus; a trailing batch of size
// one is dropped (it carries no contrastive signal). After every epoch the
// validation corpus is scored with the configured ranking score; the best
// checkpoint is the highest validation R_sum, and training stops early after
// `patience` epochs without strict improvement. A non-finite loss aborts and
// returns the best checkpoint so far with diverged set.
FitResult fit(const Corpus& train, const Corpus& val, const TrainConfig& config);

// Binary checkpoint (magic "LMTC", version, float64 payloads, checksum).
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// CSV history: epoch, the three loss components, validation R_sum.
void write_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path);

}  // namespace xmodal
