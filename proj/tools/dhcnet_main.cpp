// Command-line front end: dataset generation, training, evaluation,
// augmentation preview, gradient checks, and the ablation grid.
#include "dhcnet/harness.hpp"
#include "dhcnet/hce.hpp"
#include "dhcnet/hcl.hpp"
#include "dhcnet/nn.hpp"
#include "dhcnet/png_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dhcnet;

namespace {

int cmd_gen_data(const DatasetSpec& spec, const std::string& out) {
  Manifest man = gen_dataset(spec, out);
  std::cout << "wrote " << man.rows.size() << " images under " << man.dir
            << "\n";
  return 0;
}

int cmd_train(TrainConfig cfg, const std::string& out) {
  TrainResult r = train(cfg, out);
  json summary = {{"best_test_acc", r.best_test_acc},
                  {"final_test_acc", r.final_test_acc},
                  {"final_train_acc", r.final_train_acc},
                  {"best_epoch", r.best_epoch},
                  {"metrics", r.metrics_path},
                  {"final_checkpoint", r.final_checkpoint_path},
                  {"best_checkpoint", r.best_checkpoint_path}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset,
             const std::string& split) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  Dataset ds = load_dataset(dataset);
  StagedBackbone model = model_from_checkpoint(ck, ds.num_classes);
  const auto& images = split == "train" ? ds.train_images : ds.test_images;
  const auto& labels = split == "train" ? ds.train_labels : ds.test_labels;
  std::vector<int> correct, total;
  double acc = evaluate(model, images, labels, &correct, &total);
  json per_class = json::array();
  for (std::size_t k = 0; k < correct.size(); ++k)
    per_class.push_back({{"class", k},
                         {"correct", correct[k]},
                         {"total", total[k]}});
  std::cout << json{{"split", split},
                    {"accuracy", acc},
                    {"per_class", per_class}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_augment(const std::string& image_path, const std::string& out,
                double sigma, int m, std::uint64_t seed) {
  Tensor img = read_png(image_path);
  Rng rng(seed);
  AugmentedSet set =
      build_augmented_set(img, 0, sigma, m, kNumStages, rng);
  fs::create_directories(out);
  json meta;
  meta["sigma"] = sigma;
  meta["m"] = m;
  meta["seed"] = seed;
  meta["region"] = {{"y0", set.region.y0},
                    {"x0", set.region.x0},
                    {"side_h", set.region.side_h},
                    {"side_w", set.region.side_w}};
  json variants = json::array();
  for (const auto& v : set.variants) {
    std::string name = "k" + std::to_string(v.k) + ".png";
    write_png((fs::path(out) / name).string(), v.image);
    variants.push_back({{"k", v.k},
                        {"n", v.n},
                        {"file", name},
                        {"target_last_stage", v.target_last_stage},
                        {"permutation", v.permutation}});
  }
  meta["variants"] = variants;
  std::ofstream f(fs::path(out) / "augment.json");
  f << meta.dump(2) << "\n";
  std::cout << "wrote " << set.variants.size() << " variants to " << out
            << "\n";
  return 0;
}

// Fast end-to-end differentiation check over the pieces the trainer
// composes; exits nonzero if any analytic/numeric mismatch exceeds tol.
int cmd_gradcheck(double tol) {
  Rng rng(17);
  auto rand_t = [&](const Shape& s) {
    Tensor t = Tensor::zeros(s);
    for (int i = 0; i < t.size(); ++i) t.values[i] = rng.uniform(-1.0, 1.0);
    return t;
  };
  struct Case {
    std::string name;
    std::function<Tensor(const Tensor&)> f;
    Tensor x;
  };
  std::vector<Case> cases;

  cases.push_back({"log_softmax+nll", [](const Tensor& x) {
                     return cls_loss(log_softmax(x), {1, 0, 2});
                   },
                   rand_t({3, 4})});
  ConvParams conv_p;
  conv_p.weight = rand_t({2, 3, 3, 3});
  conv_p.bias = rand_t({2});
  conv_p.stride = 2;
  conv_p.padding = 1;
  cases.push_back({"conv2d", [conv_p](const Tensor& x) {
                     return sum_all(relu(conv2d(x, conv_p)));
                   },
                   rand_t({2, 3, 6, 6})});
  cases.push_back({"bilinear_resize", [](const Tensor& x) {
                     return sum_all(mul(bilinear_resize(x, 7, 5),
                                        bilinear_resize(x, 7, 5)));
                   },
                   rand_t({1, 2, 4, 6})});
  cases.push_back({"roi_align", [](const Tensor& x) {
                     Box b{0.6, 0.4, 4.7, 3.1};
                     Tensor r = roi_align(x, b, 3, 3, 2);
                     return sum_all(mul(r, r));
                   },
                   rand_t({2, 5, 6})});
  Tensor head_w = rand_t({3, 4});
  cases.push_back({"gap+head", [head_w](const Tensor& x) {
                     return sum_all(exp(matmul(global_avg_pool(x), head_w)));
                   },
                   rand_t({2, 3, 4, 4})});
  cases.push_back({"pairwise_l2", [](const Tensor& x) {
                     Tensor d = sub(x, mul_scalar(x, 0.3));
                     return sum_all(
                         sqrt(reduce(ReduceKind::sum, mul(d, d), {1})));
                   },
                   rand_t({4, 6})});

  bool ok = true;
  for (auto& c : cases) {
    double err = grad_check(c.f, c.x, 1e-5);
    std::cout << c.name << ": max rel err " << err
              << (err <= tol ? " ok" : " FAIL") << "\n";
    if (err > tol) ok = false;
  }
  return ok ? 0 : 2;
}

int cmd_ablate(const TrainConfig& base, const AblateOptions& opts,
               const std::string& out) {
  auto rows = ablate(base, opts, out);
  std::string table = ablate_table_json(rows);
  fs::create_directories(out);
  std::ofstream f(fs::path(out) / "table.json");
  f << table << "\n";
  std::cout << table << "\n";
  return 0;
}

void add_config_opts(CLI::App* app, TrainConfig& cfg, std::string& config_path) {
  app->add_option("--config", config_path, "JSON config file");
  app->add_option("--dataset", cfg.dataset, "manifest.csv path");
  app->add_option("--seed", cfg.seed, "run seed");
  app->add_option("--sigma", cfg.sigma, "shuffled-region area fraction");
  app->add_option("--m", cfg.m, "number of granularities");
  app->add_option("--alpha", cfg.weights.alpha);
  app->add_option("--beta", cfg.weights.beta);
  app->add_option("--gamma", cfg.weights.gamma);
  app->add_option("--epochs", cfg.epochs);
  app->add_option("--batch-size", cfg.batch_size);
  app->add_option("--lr", cfg.lr);
  app->add_option("--lr-decay-every", cfg.lr_decay_every);
  app->add_option("--momentum", cfg.momentum);
  app->add_option("--blocks-per-stage", cfg.backbone.blocks_per_stage);
  app->add_flag("--no-hcl", [&cfg](std::int64_t) { cfg.enable_hcl = false; },
                "disable region shuffling branch");
  app->add_flag("--no-hce", [&cfg](std::int64_t) { cfg.enable_hce = false; },
                "disable view alignment branch");
  app->add_flag("--mixup", cfg.mixup_baseline, "train the mixup comparator");
  app->add_flag("--no-flip", [&cfg](std::int64_t) { cfg.hflip_augment = false; },
                "disable horizontal-flip augmentation");
  app->add_option("--hce-start", cfg.hce_start_epoch,
                  "first epoch the alignment branch contributes");
  app->add_option_function<std::string>(
      "--hce-mode",
      [&cfg](const std::string& s) {
        if (s == "online") cfg.hce_mode = HceMode::online;
        else if (s == "frozen") cfg.hce_mode = HceMode::frozen;
        else throw CLI::ValidationError("--hce-mode", "must be online|frozen");
      },
      "online|frozen");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical region-shuffle training harness"};
  app.require_subcommand(1);

  // gen-data
  DatasetSpec dspec;
  std::string data_out = "data";
  auto* gen = app.add_subcommand("gen-data", "render the synthetic dataset");
  gen->add_option("--out", data_out, "output directory");
  gen->add_option("--classes", dspec.num_classes);
  gen->add_option("--train-per-class", dspec.train_per_class);
  gen->add_option("--test-per-class", dspec.test_per_class);
  gen->add_option("--size", dspec.image_size);
  gen->add_option("--seed", dspec.seed);
  gen->add_option("--separation", dspec.class_separation);
  gen->add_option("--jitter", dspec.instance_jitter);

  // train
  TrainConfig tcfg;
  std::string tconfig_path, train_out = "runs/train";
  auto* tr = app.add_subcommand("train", "train a model");
  add_config_opts(tr, tcfg, tconfig_path);
  tr->add_option("--out", train_out, "run directory");

  // eval
  std::string ckpt, eval_dataset, split = "test";
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", ckpt)->required();
  ev->add_option("--dataset", eval_dataset)->required();
  ev->add_option("--split", split, "train|test");

  // augment
  std::string aug_image, aug_out = "augmented";
  double aug_sigma = 0.25;
  int aug_m = 3;
  std::uint64_t aug_seed = 0;
  auto* au = app.add_subcommand("augment", "write shuffled variants of a PNG");
  au->add_option("--image", aug_image)->required();
  au->add_option("--out", aug_out);
  au->add_option("--sigma", aug_sigma);
  au->add_option("--m", aug_m);
  au->add_option("--seed", aug_seed);

  // gradcheck
  double gtol = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference spot checks");
  gc->add_option("--tol", gtol, "max allowed relative error");

  // ablate
  TrainConfig acfg;
  std::string aconfig_path, ablate_out = "runs/ablate";
  AblateOptions aopts;
  auto* ab = app.add_subcommand("ablate", "run the ablation grid");
  add_config_opts(ab, acfg, aconfig_path);
  ab->add_option("--out", ablate_out, "grid output directory");
  ab->add_option("--seeds", aopts.seeds, "seed list");
  ab->add_flag("--loss-variants", aopts.loss_variants);
  ab->add_flag("--hce-mode-sweep", aopts.hce_mode_sweep);
  ab->add_flag("--mixup-row", aopts.mixup_row);
  ab->add_option("--sigma-sweep", aopts.sigma_sweep);
  ab->add_option("--m-sweep", aopts.m_sweep);

  try {
    // Config files seed the defaults; parse again so flags win.
    app.parse(argc, argv);
    if (tr->parsed() && !tconfig_path.empty()) {
      tcfg = config_from_file(tconfig_path);
      tr->clear();
      app.clear();
      app.parse(argc, argv);
    }
    if (ab->parsed() && !aconfig_path.empty()) {
      acfg = config_from_file(aconfig_path);
      ab->clear();
      app.clear();
      app.parse(argc, argv);
    }
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(dspec, data_out);
    if (tr->parsed()) return cmd_train(tcfg, train_out);
    if (ev->parsed()) return cmd_eval(ckpt, eval_dataset, split);
    if (au->parsed())
      return cmd_augment(aug_image, aug_out, aug_sigma, aug_m, aug_seed);
    if (gc->parsed()) return cmd_gradcheck(gtol);
    if (ab->parsed()) return cmd_ablate(acfg, aopts, ablate_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
