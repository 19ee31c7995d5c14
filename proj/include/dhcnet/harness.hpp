#pragma once

#include "dhcnet/backbone.hpp"
#include "dhcnet/losses.hpp"
#include "dhcnet/rng.hpp"
#include "dhcnet/synth.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace dhcnet {

enum class HceMode { online, frozen };
enum class HclLoss { hor, ce };
enum class HceLoss { exp, ce };

// Complete experiment description; round-trips through JSON losslessly.
struct TrainConfig {
  std::string dataset;  // manifest path
  std::uint64_t seed = 0;
  double sigma = 0.25;
  int m = 3;
  LossWeights weights;  // alpha 2.0, beta 1.0, gamma 0.6
  HceMode hce_mode = HceMode::online;
  HclLoss hcl_loss = HclLoss::hor;
  HceLoss hce_loss = HceLoss::exp;
  OrderingMode ordering_mode = OrderingMode::hinge;
  bool enable_hcl = true;
  bool enable_hce = true;
  // First epoch at which the alignment branch contributes. From random
  // init the alignment term collapses the shared features to zero before
  // classification can learn; deferring it until features exist mirrors
  // the intended use on a backbone that already classifies.
  int hce_start_epoch = 0;
  bool mixup_baseline = false;
  bool hflip_augment = true;  // random horizontal flip on training batches
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_decay = 0.9;
  int lr_decay_every = 5;  // epochs
  int epochs = 60;
  int batch_size = 8;
  int samples_per_bin = 2;
  BackboneConfig backbone;  // num_classes 0 = take it from the dataset

  double sigma_v() const { return std::max(sigma, 0.25); }
  double lr_at(int epoch) const;  // lr * lr_decay^(epoch / lr_decay_every)
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig config_from_file(const std::string& path);

// One SGD-with-momentum training step over a batch. Owns the momentum
// buffers; images arrive already flip-augmented.
class Trainer {
 public:
  Trainer(StagedBackbone& model, TrainConfig config);

  // hcl_rng drives region/permutation draws, mix_rng the mixup pairing.
  LossReport step(const std::vector<const Tensor*>& images,
                  const std::vector<int>& labels, double lr, Rng& hcl_rng,
                  Rng& mix_rng, int epoch = 0);

  const TrainConfig& config() const { return cfg_; }

 private:
  StagedBackbone* model_;
  TrainConfig cfg_;
  std::vector<Array> velocity_;  // aligned with named_params order
};

double evaluate(const StagedBackbone& model, const std::vector<Tensor>& images,
                const std::vector<int>& labels,
                std::vector<int>* per_class_correct = nullptr,
                std::vector<int>* per_class_total = nullptr);

struct TrainResult {
  double best_test_acc = 0.0;
  double final_test_acc = 0.0;
  double final_train_acc = 0.0;
  int best_epoch = -1;
  std::string metrics_path;
  std::string final_checkpoint_path;
  std::string best_checkpoint_path;
};

// Full training run: per-epoch metrics JSONL, best + final checkpoints
// under out_dir. Single-threaded and byte-deterministic in the seed.
TrainResult train(const TrainConfig& config, const std::string& out_dir);

// ------------------------------------------------------------ checkpoint

struct Checkpoint {
  TrainConfig config;
  int epoch = 0;
  double best_test_acc = 0.0;
  double final_test_acc = 0.0;
  std::vector<std::pair<std::string, Tensor>> params;
};

// Binary format: magic "DHCNETCK", u32 LE header length, JSON header
// {format_version, config, epoch, metrics, params: [{name, shape,
// offset}]}, then little-endian f32 arrays.
void save_checkpoint(const std::string& path, const StagedBackbone& model,
                     const TrainConfig& config, int epoch, double best_test_acc,
                     double final_test_acc);
Checkpoint load_checkpoint(const std::string& path);
StagedBackbone model_from_checkpoint(const Checkpoint& ck, int num_classes = 0);

// --------------------------------------------------------------- ablate

struct AblateOptions {
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  bool loss_variants = false;        // hor/ce x exp/ce grid
  bool hce_mode_sweep = false;       // frozen vs online
  bool mixup_row = false;            // Mixup comparator
  std::vector<double> sigma_sweep;   // optional
  std::vector<int> m_sweep;          // optional
};

struct AblateRow {
  std::string name;
  std::vector<double> accs;  // best test acc per seed
  double mean = 0.0;
  double spread = 0.0;  // max - min
};

// Runs {baseline, +HCL, +HCE, full} plus requested sweeps over the
// seeds. Cells run in parallel up to DHCNET_THREADS workers.
std::vector<AblateRow> ablate(const TrainConfig& base,
                              const AblateOptions& options,
                              const std::string& out_dir);

std::string ablate_table_json(const std::vector<AblateRow>& rows);

int worker_thread_cap();  // DHCNET_THREADS, default 1

}  // namespace dhcnet
