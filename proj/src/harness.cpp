#include "dhcnet/harness.hpp"

#include "dhcnet/hce.hpp"
#include "dhcnet/hcl.hpp"
#include "dhcnet/nn.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace dhcnet {

// --------------------------------------------------------------- config

double TrainConfig::lr_at(int epoch) const {
  return lr * std::pow(lr_decay, epoch / lr_decay_every);
}

void TrainConfig::validate() const {
  if (!(sigma > 0.0) || sigma > 1.0)
    throw std::invalid_argument("TrainConfig: sigma outside (0,1]");
  if (m < 1) throw std::invalid_argument("TrainConfig: m < 1");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs < 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
  if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr <= 0");
  if (lr_decay_every < 1)
    throw std::invalid_argument("TrainConfig: lr_decay_every < 1");
  auto nonneg = [](double v, const char* n) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string("TrainConfig: ") + n +
                                  " must be finite and >= 0");
  };
  nonneg(weights.alpha, "alpha");
  nonneg(weights.beta, "beta");
  nonneg(weights.gamma, "gamma");
  if (samples_per_bin < 1)
    throw std::invalid_argument("TrainConfig: samples_per_bin < 1");
  if (hce_start_epoch < 0)
    throw std::invalid_argument("TrainConfig: hce_start_epoch < 0");
}

namespace {
std::string hce_mode_str(HceMode m) {
  return m == HceMode::online ? "online" : "frozen";
}
HceMode hce_mode_parse(const std::string& s) {
  if (s == "online") return HceMode::online;
  if (s == "frozen") return HceMode::frozen;
  throw std::invalid_argument("hce_mode must be online|frozen, got " + s);
}
std::string ordering_str(OrderingMode m) {
  return m == OrderingMode::hinge ? "hinge" : "raw";
}
OrderingMode ordering_parse(const std::string& s) {
  if (s == "hinge") return OrderingMode::hinge;
  if (s == "raw") return OrderingMode::raw;
  throw std::invalid_argument("ordering_mode must be hinge|raw, got " + s);
}
}  // namespace

void to_json(json& j, const TrainConfig& c) {
  j = json{{"dataset", c.dataset},
           {"seed", c.seed},
           {"sigma", c.sigma},
           {"m", c.m},
           {"alpha", c.weights.alpha},
           {"beta", c.weights.beta},
           {"gamma", c.weights.gamma},
           {"hce_mode", hce_mode_str(c.hce_mode)},
           {"hcl_loss", c.hcl_loss == HclLoss::hor ? "hor" : "ce"},
           {"hce_loss", c.hce_loss == HceLoss::exp ? "exp" : "ce"},
           {"ordering_mode", ordering_str(c.ordering_mode)},
           {"enable_hcl", c.enable_hcl},
           {"enable_hce", c.enable_hce},
           {"hce_start_epoch", c.hce_start_epoch},
           {"mixup_baseline", c.mixup_baseline},
           {"hflip_augment", c.hflip_augment},
           {"lr", c.lr},
           {"momentum", c.momentum},
           {"weight_decay", c.weight_decay},
           {"lr_decay", c.lr_decay},
           {"lr_decay_every", c.lr_decay_every},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"samples_per_bin", c.samples_per_bin},
           {"backbone",
            json{{"input_size", c.backbone.input_size},
                 {"stage_channels", c.backbone.stage_channels},
                 {"blocks_per_stage", c.backbone.blocks_per_stage},
                 {"num_classes", c.backbone.num_classes},
                 {"seed", c.backbone.seed}}}};
}

void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.dataset = j.value("dataset", d.dataset);
  c.seed = j.value("seed", d.seed);
  c.sigma = j.value("sigma", d.sigma);
  c.m = j.value("m", d.m);
  c.weights.alpha = j.value("alpha", d.weights.alpha);
  c.weights.beta = j.value("beta", d.weights.beta);
  c.weights.gamma = j.value("gamma", d.weights.gamma);
  c.hce_mode = hce_mode_parse(j.value("hce_mode", "online"));
  c.hcl_loss = j.value("hcl_loss", "hor") == std::string("hor") ? HclLoss::hor
                                                                : HclLoss::ce;
  c.hce_loss = j.value("hce_loss", "exp") == std::string("exp") ? HceLoss::exp
                                                                : HceLoss::ce;
  c.ordering_mode = ordering_parse(j.value("ordering_mode", "hinge"));
  c.enable_hcl = j.value("enable_hcl", d.enable_hcl);
  c.enable_hce = j.value("enable_hce", d.enable_hce);
  c.hce_start_epoch = j.value("hce_start_epoch", d.hce_start_epoch);
  c.mixup_baseline = j.value("mixup_baseline", d.mixup_baseline);
  c.hflip_augment = j.value("hflip_augment", d.hflip_augment);
  c.lr = j.value("lr", d.lr);
  c.momentum = j.value("momentum", d.momentum);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.lr_decay = j.value("lr_decay", d.lr_decay);
  c.lr_decay_every = j.value("lr_decay_every", d.lr_decay_every);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.samples_per_bin = j.value("samples_per_bin", d.samples_per_bin);
  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    c.backbone.input_size = b.value("input_size", d.backbone.input_size);
    c.backbone.stage_channels =
        b.value("stage_channels", d.backbone.stage_channels);
    c.backbone.blocks_per_stage =
        b.value("blocks_per_stage", d.backbone.blocks_per_stage);
    c.backbone.num_classes = b.value("num_classes", 0);
    c.backbone.seed = b.value("seed", d.backbone.seed);
  } else {
    c.backbone = d.backbone;
    c.backbone.num_classes = 0;
  }
}

TrainConfig config_from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config_from_file: cannot open " + path);
  json j;
  f >> j;
  return j.get<TrainConfig>();
}

// -------------------------------------------------------------- trainer

Trainer::Trainer(StagedBackbone& model, TrainConfig config)
    : model_(&model), cfg_(std::move(config)) {
  for (auto& [name, t] : model_->named_params())
    velocity_.push_back(Array::Zero(t->size()));
}

namespace {
Tensor zero_scalar() { return Tensor::scalar_value(0.0); }

// N images of 3xSxS -> N x 3 x S x S
Tensor stack_images(const std::vector<Tensor>& imgs) { return stack(imgs); }
}  // namespace

LossReport Trainer::step(const std::vector<const Tensor*>& images,
                         const std::vector<int>& labels, double lr,
                         Rng& hcl_rng, Rng& mix_rng, int epoch) {
  const int N = static_cast<int>(images.size());
  if (N == 0 || labels.size() != images.size())
    throw std::invalid_argument("Trainer::step: empty or mismatched batch");
  const int L = kNumStages;
  const int K = model_->config.num_classes;

  Tape tape;
  BoundBackbone net(*model_, &tape);

  Tensor cls_t, hor_t = zero_scalar(), exp_t = zero_scalar();
  std::vector<double> confs;

  if (cfg_.mixup_baseline) {
    std::vector<Tensor> blended;
    Tensor soft = Tensor::zeros({N, K});
    for (int i = 0; i < N; ++i) {
      int j = static_cast<int>(mix_rng.uniform_int(N));
      double lambda = mix_rng.uniform();
      Tensor ea = Tensor::zeros({K});
      ea.values[labels[i]] = 1.0;
      Tensor eb = Tensor::zeros({K});
      eb.values[labels[j]] = 1.0;
      auto [img, lbl] = mixup(*images[i], *images[j], ea, eb, lambda);
      blended.push_back(std::move(img));
      soft.values.segment(static_cast<Eigen::Index>(i) * K, K) = lbl.values;
    }
    Tensor F = net.forward_full(stack_images(blended));
    Tensor lsm = log_softmax(net.head_logits(L, F));
    cls_t = mean_all(neg(reduce(ReduceKind::sum, mul(lsm, soft), {1})));
  } else {
    std::vector<Tensor> plain;
    plain.reserve(N);
    for (auto* p : images) plain.push_back(p->detached());
    Tensor X = stack_images(plain);
    Tensor F = net.forward_full(X);  // N x C x h x w
    cls_t = cls_loss(log_softmax(net.head_logits(L, F)), labels);

    if (cfg_.enable_hcl) {
      std::vector<AugmentedSet> sets;
      sets.reserve(N);
      for (int i = 0; i < N; ++i)
        sets.push_back(
            build_augmented_set(*images[i], i, cfg_.sigma, cfg_.m, L, hcl_rng));
      std::vector<HorEntry> entries;
      for (std::size_t e = 0; e < sets[0].variants.size(); ++e) {
        std::vector<Tensor> batch_k;
        batch_k.reserve(N);
        for (int i = 0; i < N; ++i)
          batch_k.push_back(sets[i].variants[e].image);
        int target = sets[0].variants[e].target_last_stage;
        Tensor feat = net.forward_truncated(stack_images(batch_k), target);
        entries.push_back({net.head_logits(target, feat), labels});
      }
      hor_t = hor_loss(entries, cfg_.ordering_mode,
                       /*with_ordering=*/cfg_.hcl_loss == HclLoss::hor);
      confs = hor_confidences(entries);
    }

    if (cfg_.enable_hce && epoch >= cfg_.hce_start_epoch) {
      std::vector<ViewSet> vsets;
      std::vector<Tensor> view_imgs;  // 4N entries of 3xSxS
      vsets.reserve(N);
      for (int i = 0; i < N; ++i) {
        vsets.push_back(extract_views(*images[i], cfg_.sigma_v()));
        for (int v = 0; v < 4; ++v)
          view_imgs.push_back(slice0(vsets.back().views, v));
      }
      Tensor Vb = stack_images(view_imgs);  // 4N x 3 x S x S
      Tensor F_L_all;
      if (cfg_.hce_mode == HceMode::online) {
        F_L_all = net.forward_full(Vb);
      } else {
        BoundBackbone frozen(*model_, nullptr);
        F_L_all = frozen.forward_full(Vb);  // detached
      }

      if (cfg_.hce_loss == HceLoss::exp) {
        int fh = F.shape[2], fw = F.shape[3];
        Tensor acc = zero_scalar();
        for (int i = 0; i < N; ++i) {
          Tensor F_G = global_features(slice0(F, i), vsets[i], fh, fw,
                                       model_->config.total_stride(),
                                       cfg_.samples_per_bin);
          std::vector<Tensor> fl;
          for (int v = 0; v < 4; ++v) fl.push_back(slice0(F_L_all, 4 * i + v));
          acc = add(acc, exp_loss(F_G, stack(fl)));
        }
        exp_t = mul_scalar(acc, 1.0 / N);
      } else {
        // CE-on-views ablation: classify the local views with the final head
        std::vector<int> vlabels(static_cast<std::size_t>(4) * N);
        for (int i = 0; i < N; ++i)
          for (int v = 0; v < 4; ++v) vlabels[4 * i + v] = labels[i];
        exp_t =
            cls_loss(log_softmax(net.head_logits(L, F_L_all)), vlabels);
      }
    }
  }

  auto [total, report] = total_loss(cls_t, hor_t, exp_t, cfg_.weights);
  report.confidences = std::move(confs);

  auto grads = backward(total);
  auto named = model_->named_params();
  const auto& leaves = net.params();
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor* theta = named[i].second;
    Array g = Array::Zero(theta->size());
    if (auto it = grads.find(leaves[i].node); it != grads.end()) g = it->second;
    velocity_[i] = cfg_.momentum * velocity_[i] + g +
                   cfg_.weight_decay * theta->values;
    theta->values -= lr * velocity_[i];
  }
  return report;
}

// ------------------------------------------------------------- evaluate

double evaluate(const StagedBackbone& model, const std::vector<Tensor>& images,
                const std::vector<int>& labels,
                std::vector<int>* per_class_correct,
                std::vector<int>* per_class_total) {
  if (images.empty()) throw std::invalid_argument("evaluate: empty split");
  int K = model.config.num_classes;
  for (int l : labels)
    if (l < 0 || l >= K)
      throw std::invalid_argument("evaluate: label out of range; class counts "
                                  "do not match the checkpoint");
  BoundBackbone net(model, nullptr);
  if (per_class_correct) per_class_correct->assign(K, 0);
  if (per_class_total) per_class_total->assign(K, 0);
  int correct = 0;
  const int chunk = 16;
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    std::size_t end = std::min(images.size(), start + chunk);
    std::vector<Tensor> batch(images.begin() + start, images.begin() + end);
    Tensor logits = net.head_logits(kNumStages, net.forward_full(stack(batch)));
    for (std::size_t i = start; i < end; ++i) {
      int arg = 0;
      auto row = logits.values.segment(
          static_cast<Eigen::Index>(i - start) * K, K);
      row.maxCoeff(&arg);
      if (per_class_total) ++(*per_class_total)[labels[i]];
      if (arg == labels[i]) {
        ++correct;
        if (per_class_correct) ++(*per_class_correct)[labels[i]];
      }
    }
  }
  return static_cast<double>(correct) / images.size();
}

// ----------------------------------------------------------- checkpoint

static constexpr char kMagic[8] = {'D', 'H', 'C', 'N', 'E', 'T', 'C', 'K'};

void save_checkpoint(const std::string& path, const StagedBackbone& model,
                     const TrainConfig& config, int epoch, double best_test_acc,
                     double final_test_acc) {
  auto named = model.named_params();
  json header;
  header["format_version"] = 1;
  header["config"] = config;
  header["epoch"] = epoch;
  header["metrics"] = {{"best_test_acc", best_test_acc},
                       {"final_test_acc", final_test_acc}};
  json table = json::array();
  std::uint64_t offset = 0;
  for (auto& [name, t] : named) {
    table.push_back({{"name", name}, {"shape", t->shape}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t->size()) * 4;
  }
  header["params"] = table;
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(kMagic, 8);
  std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
  unsigned char lenb[4] = {static_cast<unsigned char>(hlen & 0xff),
                           static_cast<unsigned char>((hlen >> 8) & 0xff),
                           static_cast<unsigned char>((hlen >> 16) & 0xff),
                           static_cast<unsigned char>((hlen >> 24) & 0xff)};
  f.write(reinterpret_cast<char*>(lenb), 4);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (auto& [name, t] : named) {
    std::vector<float> buf(t->size());
    for (int i = 0; i < t->size(); ++i)
      buf[i] = static_cast<float>(t->values[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * 4));
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  unsigned char lenb[4];
  f.read(reinterpret_cast<char*>(lenb), 4);
  std::uint32_t hlen = lenb[0] | (lenb[1] << 8) | (lenb[2] << 16) |
                       (static_cast<std::uint32_t>(lenb[3]) << 24);
  std::string hs(hlen, '\0');
  f.read(hs.data(), hlen);
  if (!f) throw std::runtime_error("load_checkpoint: truncated header");
  json header = json::parse(hs);

  Checkpoint ck;
  ck.config = header.at("config").get<TrainConfig>();
  ck.epoch = header.at("epoch").get<int>();
  ck.best_test_acc = header.at("metrics").at("best_test_acc").get<double>();
  ck.final_test_acc = header.at("metrics").at("final_test_acc").get<double>();
  for (const json& row : header.at("params")) {
    Shape shape = row.at("shape").get<Shape>();
    int n = shape_size(shape);
    std::vector<float> buf(n);
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * 4));
    if (!f) throw std::runtime_error("load_checkpoint: truncated data");
    Tensor t = Tensor::zeros(shape);
    for (int i = 0; i < n; ++i) t.values[i] = buf[i];
    ck.params.emplace_back(row.at("name").get<std::string>(), std::move(t));
  }
  return ck;
}

StagedBackbone model_from_checkpoint(const Checkpoint& ck, int num_classes) {
  BackboneConfig bc = ck.config.backbone;
  if (bc.num_classes == 0) bc.num_classes = num_classes;
  if (num_classes != 0 && bc.num_classes != num_classes)
    throw std::runtime_error(
        "model_from_checkpoint: checkpoint has " +
        std::to_string(bc.num_classes) + " classes, dataset has " +
        std::to_string(num_classes));
  StagedBackbone model = StagedBackbone::init(bc);
  auto named = model.named_params();
  if (named.size() != ck.params.size())
    throw std::runtime_error("model_from_checkpoint: parameter table mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != ck.params[i].first ||
        named[i].second->shape != ck.params[i].second.shape)
      throw std::runtime_error("model_from_checkpoint: parameter " +
                               named[i].first + " does not match checkpoint");
    named[i].second->values = ck.params[i].second.values;
  }
  return model;
}

// ---------------------------------------------------------------- train

namespace {
enum StreamKind : std::uint64_t {
  kOrderStream = 1,
  kFlipStream = 2,
  kHclStream = 3,
  kMixStream = 4,
  kInitStream = 5
};

Tensor hflip(const Tensor& img) {
  int C = img.shape[0], H = img.shape[1], W = img.shape[2];
  Tensor out = Tensor::zeros(img.shape);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        out.values[(c * H + y) * W + x] =
            img.values[(c * H + y) * W + (W - 1 - x)];
  return out;
}
}  // namespace

TrainResult train(const TrainConfig& config, const std::string& out_dir) {
  TrainConfig cfg = config;
  cfg.validate();
  Dataset ds = load_dataset(cfg.dataset);
  if (cfg.backbone.num_classes == 0) cfg.backbone.num_classes = ds.num_classes;
  else if (cfg.backbone.num_classes != ds.num_classes)
    throw std::runtime_error("train: config expects " +
                             std::to_string(cfg.backbone.num_classes) +
                             " classes, dataset has " +
                             std::to_string(ds.num_classes));
  cfg.backbone.input_size = ds.image_size;
  Rng root(cfg.seed);
  cfg.backbone.seed = root.spawn(kInitStream).next_u64();

  StagedBackbone model = StagedBackbone::init(cfg.backbone);
  Trainer trainer(model, cfg);

  fs::create_directories(out_dir);
  TrainResult res;
  res.metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  res.final_checkpoint_path = (fs::path(out_dir) / "final.ckpt").string();
  res.best_checkpoint_path = (fs::path(out_dir) / "best.ckpt").string();
  std::ofstream metrics(res.metrics_path, std::ios::binary);
  if (!metrics)
    throw std::runtime_error("train: cannot write " + res.metrics_path);

  const int T = static_cast<int>(ds.train_images.size());
  std::vector<int> order(T);
  std::iota(order.begin(), order.end(), 0);
  double best = -1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr_at(epoch);
    Rng order_rng = root.spawn(kOrderStream).spawn(epoch);
    Rng flip_rng = root.spawn(kFlipStream).spawn(epoch);
    Rng hcl_rng = root.spawn(kHclStream).spawn(epoch);
    Rng mix_rng = root.spawn(kMixStream).spawn(epoch);
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);

    double cls_sum = 0, hor_sum = 0, exp_sum = 0, total_sum = 0;
    for (int start = 0; start < T; start += cfg.batch_size) {
      int end = std::min(T, start + cfg.batch_size);
      std::vector<Tensor> owned;
      std::vector<const Tensor*> batch;
      std::vector<int> labels;
      for (int b = start; b < end; ++b) {
        int idx = order[b];
        if (cfg.hflip_augment && flip_rng.uniform() < 0.5)
          owned.push_back(hflip(ds.train_images[idx]));
        else
          owned.push_back(ds.train_images[idx].detached());
        labels.push_back(ds.train_labels[idx]);
      }
      for (auto& t : owned) batch.push_back(&t);
      LossReport r = trainer.step(batch, labels, lr, hcl_rng, mix_rng, epoch);
      double w = static_cast<double>(end - start) / T;
      cls_sum += r.cls * w;
      hor_sum += r.hor * w;
      exp_sum += r.exp * w;
      total_sum += r.total * w;
    }

    double train_acc = evaluate(model, ds.train_images, ds.train_labels);
    double test_acc = evaluate(model, ds.test_images, ds.test_labels);
    json line = {{"epoch", epoch},     {"lr", lr},
                 {"cls", cls_sum},     {"hor", hor_sum},
                 {"exp", exp_sum},     {"total", total_sum},
                 {"train_acc", train_acc}, {"test_acc", test_acc}};
    metrics << line.dump() << "\n";

    res.final_train_acc = train_acc;
    res.final_test_acc = test_acc;
    if (test_acc > best) {
      best = test_acc;
      res.best_epoch = epoch;
      res.best_test_acc = test_acc;
      save_checkpoint(res.best_checkpoint_path, model, cfg, epoch, best,
                      test_acc);
    }
  }
  save_checkpoint(res.final_checkpoint_path, model, cfg, cfg.epochs - 1,
                  res.best_test_acc, res.final_test_acc);
  return res;
}

// --------------------------------------------------------------- ablate

int worker_thread_cap() {
  const char* env = std::getenv("DHCNET_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

std::vector<AblateRow> ablate(const TrainConfig& base,
                              const AblateOptions& options,
                              const std::string& out_dir) {
  struct Cell {
    std::string name;
    TrainConfig cfg;
  };
  std::vector<Cell> cells;
  auto push = [&](const std::string& name, auto mod) {
    TrainConfig c = base;
    c.mixup_baseline = false;
    mod(c);
    cells.push_back({name, std::move(c)});
  };

  push("baseline", [](TrainConfig& c) { c.enable_hcl = c.enable_hce = false; });
  push("hcl", [](TrainConfig& c) { c.enable_hcl = true; c.enable_hce = false; });
  push("hce", [](TrainConfig& c) { c.enable_hcl = false; c.enable_hce = true; });
  push("full", [](TrainConfig& c) { c.enable_hcl = c.enable_hce = true; });
  if (options.loss_variants) {
    push("hcl_ce+hce_ce", [](TrainConfig& c) {
      c.enable_hcl = c.enable_hce = true;
      c.hcl_loss = HclLoss::ce;
      c.hce_loss = HceLoss::ce;
    });
    push("hcl_hor+hce_ce", [](TrainConfig& c) {
      c.enable_hcl = c.enable_hce = true;
      c.hcl_loss = HclLoss::hor;
      c.hce_loss = HceLoss::ce;
    });
    push("hcl_ce+hce_exp", [](TrainConfig& c) {
      c.enable_hcl = c.enable_hce = true;
      c.hcl_loss = HclLoss::ce;
      c.hce_loss = HceLoss::exp;
    });
  }
  if (options.hce_mode_sweep)
    push("full_frozen", [](TrainConfig& c) {
      c.enable_hcl = c.enable_hce = true;
      c.hce_mode = HceMode::frozen;
    });
  if (options.mixup_row)
    push("mixup", [](TrainConfig& c) {
      c.enable_hcl = c.enable_hce = false;
      c.mixup_baseline = true;
    });
  for (double s : options.sigma_sweep)
    push("sigma_" + std::to_string(s), [&](TrainConfig& c) { c.sigma = s; });
  for (int m : options.m_sweep)
    push("m_" + std::to_string(m), [&](TrainConfig& c) { c.m = m; });

  struct Task {
    int cell;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (int c = 0; c < static_cast<int>(cells.size()); ++c)
    for (std::uint64_t s : options.seeds) tasks.push_back({c, s});

  std::vector<AblateRow> rows(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    rows[c].name = cells[c].name;
    rows[c].accs.resize(options.seeds.size());
  }

  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t t;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= tasks.size()) return;
        t = next++;
      }
      const Task& task = tasks[t];
      TrainConfig cfg = cells[task.cell].cfg;
      cfg.seed = task.seed;
      std::string dir = (fs::path(out_dir) / cells[task.cell].name /
                         ("seed" + std::to_string(task.seed)))
                            .string();
      TrainResult r = train(cfg, dir);
      std::size_t si = 0;
      while (options.seeds[si] != task.seed) ++si;
      rows[task.cell].accs[si] = r.best_test_acc;
    }
  };

  int nthreads = std::min<int>(worker_thread_cap(),
                               static_cast<int>(tasks.size()));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (auto& r : rows) {
    double mn = r.accs[0], mx = r.accs[0], sum = 0;
    for (double a : r.accs) {
      mn = std::min(mn, a);
      mx = std::max(mx, a);
      sum += a;
    }
    r.mean = sum / r.accs.size();
    r.spread = mx - mn;
  }
  return rows;
}

std::string ablate_table_json(const std::vector<AblateRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"name", r.name},
                   {"accs", r.accs},
                   {"mean", r.mean},
                   {"spread", r.spread}});
  return out.dump(2);
}

}  // namespace dhcnet
