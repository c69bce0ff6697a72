// ycd: dataset preparation, training, evaluation, inspection, serving and
// benchmarking from one binary.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ycd/bench.hpp"
#include "ycd/bundle.hpp"
#include "ycd/cost.hpp"
#include "ycd/data.hpp"
#include "ycd/image.hpp"
#include "ycd/model.hpp"
#include "ycd/serve.hpp"
#include "ycd/train.hpp"

namespace fs = std::filesystem;
using namespace ycd;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string quote(const std::string& s) {
  if (!s.empty() && s.find_first_of(" \t\"'\\$") == std::string::npos) return s;
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

/// The fully resolved command line, defaults and environment included.
std::string canonical_command(const CLI::App& sub) {
  std::string cmd = "ycd " + sub.get_name();
  std::string positionals;
  for (const CLI::Option* o : sub.get_options()) {
    const auto& names = o->get_lnames();
    if (names.empty()) {
      for (const auto& r : o->results()) positionals += " " + quote(r);
      continue;
    }
    if (names.front() == "help") continue;
    const std::string name = "--" + names.front();
    if (o->get_expected_max() == 0) {
      if (o->count() > 0) cmd += " " + name;
      continue;
    }
    if (!o->results().empty()) {
      for (const auto& r : o->results()) cmd += " " + name + " " + quote(r);
    } else if (!o->get_default_str().empty()) {
      cmd += " " + name + " " + quote(o->get_default_str());
    }
  }
  return cmd + positionals;
}

void print_repro(const CLI::App& sub, std::optional<std::uint64_t> seed) {
  const std::string cmd = canonical_command(sub);
  std::printf("# repro seed=%s digest=%016llx cmd: %s\n", seed ? std::to_string(*seed).c_str() : "none",
              static_cast<unsigned long long>(fnv1a(cmd)), cmd.c_str());
  std::fflush(stdout);
}

void require_writable(const std::string& path, bool force) {
  if (path.empty()) return;
  if (fs::exists(path) && !force) throw std::runtime_error("refusing to overwrite " + path + " (pass --force)");
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// Split options shared by dataset-split, train and eval.
struct SplitOptions {
  std::string data;
  std::string manifest;
  std::optional<std::size_t> test_count;
  std::optional<double> test_fraction;

  void add(CLI::App* app, bool allow_manifest) {
    auto* d = app->add_option("--data", data, "Dataset root: one sub-directory of images per class")
                  ->check(CLI::ExistingDirectory);
    auto* c = app->add_option("--test-count", test_count, "Test images per class");
    auto* f = app->add_option("--test-fraction", test_fraction, "Fraction of each class held out for test")
                  ->check(CLI::Range(0.0, 1.0));
    c->excludes(f);
    if (allow_manifest) {
      auto* m = app->add_option("--manifest", manifest, "Split manifest JSON from dataset-split")
                    ->check(CLI::ExistingFile);
      m->excludes(d)->excludes(c)->excludes(f);
    } else {
      d->required();
    }
  }

  data::SplitPolicy policy() const {
    if (test_count) return data::SplitPolicy::by_count(*test_count);
    if (test_fraction) return data::SplitPolicy::by_fraction(*test_fraction);
    return {};
  }

  data::DatasetManifest resolve(std::uint64_t seed) const {
    if (!manifest.empty()) return data::load_manifest(manifest);
    if (data.empty()) throw UsageError("one of --data or --manifest is required");
    return data::split_manifest(data::scan_dataset(data), policy(), seed);
  }
};

void print_split_table(const data::DatasetManifest& m) {
  std::printf("%-12s %8s %8s %8s\n", "CLASS", "TRAIN", "TEST", "TOTAL");
  for (const auto& c : m.classes) {
    const auto tr = m.count(c, data::Split::Train), te = m.count(c, data::Split::Test);
    std::printf("%-12s %8zu %8zu %8zu\n", c.c_str(), tr, te, tr + te);
  }
}

void report_failures(const std::vector<train::LoadFailure>& failures) {
  for (const auto& f : failures) std::fprintf(stderr, "warning: skipped %s: %s\n", f.path.c_str(), f.message.c_str());
}

void print_cost_table(const ArchSpec& arch) {
  const auto report = nn::count_costs(arch);
  std::printf("input %zux%zux3  alpha %g  rho %g\n", arch.effective_resolution(), arch.effective_resolution(),
              arch.width_multiplier, arch.resolution_multiplier);
  std::printf("%4s  %-14s %2s %2s %6s %6s %14s %10s\n", "#", "KIND", "K", "S", "IN", "OUT", "MACS", "PARAMS");
  for (const auto& c : report.layers) {
    const auto& l = arch.layers[c.index];
    std::printf("%4zu  %-14s %2zu %2zu %6zu %6zu %14llu %10llu\n", c.index, std::string(to_string(l.kind)).c_str(),
                l.params.kernel_size, l.params.stride, l.in_channels(), l.out_channels(),
                static_cast<unsigned long long>(c.macs), static_cast<unsigned long long>(c.params));
  }
  std::printf("total MACs %llu\ntotal params %llu\n", static_cast<unsigned long long>(report.total_macs),
              static_cast<unsigned long long>(report.total_params));
}

void print_comparison(const ArchSpec& a, const ArchSpec& b) {
  if (a.layers.size() != b.layers.size()) throw std::runtime_error("architectures differ in depth");
  const auto ca = nn::count_costs(a), cb = nn::count_costs(b);
  std::printf("\ncomparison: alpha %g rho %g -> alpha %g rho %g\n", a.width_multiplier, a.resolution_multiplier,
              b.width_multiplier, b.resolution_multiplier);
  std::printf("%4s  %-14s %14s %14s %8s\n", "#", "KIND", "MACS_A", "MACS_B", "RATIO");
  std::uint64_t pw_a = 0, pw_b = 0;
  for (std::size_t i = 0; i < ca.layers.size(); ++i) {
    const auto& x = ca.layers[i];
    const auto& y = cb.layers[i];
    if (x.macs == 0) continue;
    if (x.kind == LayerKind::PointwiseConv) {
      pw_a += x.macs;
      pw_b += y.macs;
    }
    std::printf("%4zu  %-14s %14llu %14llu %8.4f\n", i, std::string(to_string(x.kind)).c_str(),
                static_cast<unsigned long long>(x.macs), static_cast<unsigned long long>(y.macs),
                static_cast<double>(y.macs) / static_cast<double>(x.macs));
  }
  std::printf("pointwise MAC ratio %.4f\n", static_cast<double>(pw_b) / static_cast<double>(pw_a));
  std::printf("total MAC ratio %.4f\n", static_cast<double>(cb.total_macs) / static_cast<double>(ca.total_macs));
  std::printf("total param ratio %.4f\n",
              static_cast<double>(cb.total_params) / static_cast<double>(ca.total_params));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Banknote denomination recognition: train, evaluate and serve"};
  app.require_subcommand(1);
  app.fallthrough(false);

  // dataset-scan
  auto* scan = app.add_subcommand("dataset-scan", "List classes and image counts of a dataset root");
  std::string scan_root, scan_out;
  bool scan_force = false;
  scan->add_option("--data", scan_root, "Dataset root")->required()->check(CLI::ExistingDirectory);
  scan->add_option("--out", scan_out, "Write the (unsplit) manifest JSON here");
  scan->add_flag("--force", scan_force, "Overwrite existing output files");

  // dataset-split
  auto* split = app.add_subcommand("dataset-split", "Split each class into train and test");
  SplitOptions split_opts;
  std::uint64_t split_seed = 0;
  std::string split_out;
  bool split_force = false;
  split_opts.add(split, false);
  split->add_option("--seed", split_seed, "Split seed")->envname("YCD_SEED")->capture_default_str();
  split->add_option("--out", split_out, "Write the manifest JSON here");
  split->add_flag("--force", split_force, "Overwrite existing output files");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate the synthetic banknote dataset");
  std::string synth_out;
  std::size_t synth_classes = 4, synth_per_class = data::kFigureClassSize, synth_res = kDefaultResolution;
  std::uint64_t synth_seed = 0;
  bool synth_force = false;
  synth->add_option("--out", synth_out, "Output dataset root")->required();
  synth->add_option("--classes", synth_classes, "Number of denominations")
      ->check(CLI::Range(std::size_t{1}, data::kMaxSyntheticClasses))
      ->capture_default_str();
  synth->add_option("--per-class", synth_per_class, "Images per class")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--resolution", synth_res, "Image side in pixels")->check(CLI::Range(16, 4096))->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->envname("YCD_SEED")->capture_default_str();
  synth->add_flag("--force", synth_force, "Write into a non-empty output root");

  // train
  auto* trn = app.add_subcommand("train", "Extract embeddings and train the classification head");
  SplitOptions train_split;
  double alpha = 1.0, rho = 1.0;
  std::size_t base_res = kDefaultResolution;
  std::uint64_t train_seed = 0;
  train::TrainConfig tcfg;
  std::string model_out = "model.ycdm", metrics_out = "metrics.csv";
  bool train_force = false;
  train_split.add(trn, true);
  trn->add_option("--alpha", alpha, "Width multiplier in (0, 1]")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  trn->add_option("--rho", rho, "Resolution multiplier in (0, 1]")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  trn->add_option("--base-resolution", base_res, "Input side before rho")->check(CLI::PositiveNumber)->capture_default_str();
  trn->add_option("--epochs", tcfg.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  trn->add_option("--batch", tcfg.batch_size, "Mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
  trn->add_option("--lr", tcfg.learning_rate, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  trn->add_option("--momentum", tcfg.momentum, "SGD momentum")->check(CLI::Range(0.0, 0.999999))->capture_default_str();
  trn->add_option("--seed", train_seed, "Seed for split, backbone init and shuffling")
      ->envname("YCD_SEED")
      ->capture_default_str();
  trn->add_option("--out", model_out, "Model bundle path")->capture_default_str();
  trn->add_option("--metrics", metrics_out, "Per-epoch metrics CSV path")->capture_default_str();
  trn->add_flag("--force", train_force, "Overwrite existing output files");

  // eval
  auto* ev = app.add_subcommand("eval", "Per-class accuracy of a model on a dataset split");
  SplitOptions eval_split;
  std::string eval_model, eval_json, eval_which = "test";
  std::uint64_t eval_seed = 0;
  bool eval_force = false;
  eval_split.add(ev, true);
  ev->add_option("--model", eval_model, "Model bundle")->envname("YCD_MODEL")->required()->check(CLI::ExistingFile);
  ev->add_option("--seed", eval_seed, "Split seed (match the train run)")->envname("YCD_SEED")->capture_default_str();
  ev->add_option("--split", eval_which, "test, train or all")
      ->check(CLI::IsMember({"test", "train", "all"}))
      ->capture_default_str();
  ev->add_option("--json", eval_json, "Write the report JSON here");
  ev->add_flag("--force", eval_force, "Overwrite existing output files");

  // classify
  auto* cls = app.add_subcommand("classify", "Classify image files");
  std::string cls_model;
  std::vector<std::string> cls_images;
  std::optional<std::size_t> cls_top_k;
  cls->add_option("--model", cls_model, "Model bundle")->envname("YCD_MODEL")->required()->check(CLI::ExistingFile);
  cls->add_option("--top-k", cls_top_k, "Predictions to print per image")->check(CLI::PositiveNumber);
  cls->add_option("images", cls_images, "JPEG or PNG files")->required()->check(CLI::ExistingFile);

  // info
  auto* info = app.add_subcommand("info", "Layer table, parameter and MAC counts");
  std::string info_model;
  double info_alpha = 1.0, info_rho = 1.0;
  std::size_t info_res = kDefaultResolution;
  std::optional<double> cmp_alpha, cmp_rho;
  auto* im = info->add_option("--model", info_model, "Model bundle")->check(CLI::ExistingFile);
  info->add_option("--alpha", info_alpha, "Width multiplier")->check(CLI::Range(0.0, 1.0))->capture_default_str()->excludes(im);
  info->add_option("--rho", info_rho, "Resolution multiplier")->check(CLI::Range(0.0, 1.0))->capture_default_str()->excludes(im);
  info->add_option("--base-resolution", info_res, "Input side before rho")->check(CLI::PositiveNumber)->capture_default_str();
  info->add_option("--compare-alpha", cmp_alpha, "Also cost this width multiplier")->check(CLI::Range(0.0, 1.0));
  info->add_option("--compare-rho", cmp_rho, "Also cost this resolution multiplier")->check(CLI::Range(0.0, 1.0));

  // serve
  auto* srv = app.add_subcommand("serve", "Run the HTTP classification service");
  std::string srv_addr = "0.0.0.0:8080", srv_model;
  std::optional<std::size_t> srv_top_k;
  std::size_t srv_max_body = serve::kDefaultMaxBody;
  std::vector<std::string> srv_origins;
  srv->add_option("--addr", srv_addr, "host:port to bind")->envname("YCD_ADDR")->capture_default_str();
  srv->add_option("--model", srv_model, "Model bundle")->envname("YCD_MODEL")->check(CLI::ExistingFile);
  srv->add_option("--top-k", srv_top_k, "Default predictions per response")->check(CLI::PositiveNumber);
  srv->add_option("--max-body", srv_max_body, "Request body limit in bytes")->capture_default_str();
  srv->add_option("--allow-origin", srv_origins, "Origin allowed for cross-origin requests; '*' for any");

  // bench
  auto* bn = app.add_subcommand("bench", "Forward-pass latency statistics");
  std::string bn_model, bn_image;
  std::size_t bn_iters = 100;
  std::uint64_t bn_seed = 0;
  bn->add_option("--model", bn_model, "Model bundle")->envname("YCD_MODEL")->required()->check(CLI::ExistingFile);
  bn->add_option("--iterations", bn_iters, "Timed iterations")->check(CLI::PositiveNumber)->capture_default_str();
  bn->add_option("--image", bn_image, "Input image (default: seeded noise)")->check(CLI::ExistingFile);
  bn->add_option("--seed", bn_seed, "Noise seed")->envname("YCD_SEED")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*scan) {
      print_repro(*scan, std::nullopt);
      require_writable(scan_out, scan_force);
      const auto m = data::scan_dataset(scan_root);
      std::printf("%-12s %8s\n", "CLASS", "IMAGES");
      for (const auto& c : m.classes) std::printf("%-12s %8zu\n", c.c_str(), m.count(c, data::Split::Unassigned));
      if (!scan_out.empty()) data::save_manifest(m, scan_out);
    } else if (*split) {
      print_repro(*split, split_seed);
      require_writable(split_out, split_force);
      const auto m = split_opts.resolve(split_seed);
      print_split_table(m);
      if (!split_out.empty()) data::save_manifest(m, split_out);
    } else if (*synth) {
      print_repro(*synth, synth_seed);
      if (fs::exists(synth_out) && !(fs::is_directory(synth_out) && fs::is_empty(synth_out)) && !synth_force)
        throw std::runtime_error("refusing to write into non-empty " + synth_out + " (pass --force)");
      const auto labels = data::generate_synthetic_dataset(synth_out, synth_classes, synth_per_class, synth_res, synth_seed);
      std::printf("wrote %zu classes x %zu images to %s\n", labels.size(), synth_per_class, synth_out.c_str());
    } else if (*trn) {
      print_repro(*trn, train_seed);
      require_writable(model_out, train_force);
      require_writable(metrics_out, train_force);
      tcfg.shuffle_seed = train_seed;
      tcfg.validate();
      const auto manifest = train_split.resolve(train_seed);
      print_split_table(manifest);
      ModelBundle bundle = make_bundle(build_arch(alpha, rho, base_res), manifest.classes, train_seed);
      const auto costs = nn::count_costs(bundle.arch);
      std::printf("backbone: %zu layers, %llu params, %llu MACs, input %zu\n", bundle.arch.layers.size(),
                  static_cast<unsigned long long>(costs.total_params), static_cast<unsigned long long>(costs.total_macs),
                  bundle.arch.effective_resolution());
      std::fflush(stdout);
      auto tr = train::extract_embeddings(bundle, manifest, data::Split::Train);
      auto te = train::extract_embeddings(bundle, manifest, data::Split::Test);
      report_failures(tr.failures);
      report_failures(te.failures);
      const auto result = train::train_head(tr.set, manifest.classes.size(), tcfg, &te.set);
      bundle.head = result.head;
      save_bundle(bundle, model_out);
      write_text(metrics_out, train::metrics_csv(result.metrics));
      const auto& last = result.metrics.back();
      std::printf("epoch %zu loss %.6g train_acc %.4f test_acc %s\n", last.epoch, last.loss, last.train_accuracy,
                  last.test_accuracy ? std::to_string(*last.test_accuracy).c_str() : "n/a");
      if (te.set.size() > 0) {
        std::vector<std::size_t> pred;
        for (std::size_t i = 0; i < te.set.size(); ++i) pred.push_back(train::predict(bundle.head, te.set.row(i)));
        std::printf("%s", train::format_report(train::evaluate_predictions(pred, te.set.labels, bundle.labels)).c_str());
      }
      std::printf("wrote %s and %s\n", model_out.c_str(), metrics_out.c_str());
    } else if (*ev) {
      print_repro(*ev, eval_seed);
      require_writable(eval_json, eval_force);
      const auto bundle = load_bundle(eval_model);
      auto manifest = eval_split.resolve(eval_seed);
      auto which = data::Split::Test;
      if (eval_which == "train") which = data::Split::Train;
      if (eval_which == "all")
        for (auto& e : manifest.entries) e.split = data::Split::Test;
      const auto result = train::evaluate(bundle, manifest, which);
      report_failures(result.failures);
      std::printf("%s", train::format_report(result.report).c_str());
      if (!eval_json.empty()) write_text(eval_json, train::to_json(result.report).dump(2) + "\n");
    } else if (*cls) {
      print_repro(*cls, std::nullopt);
      const auto bundle = load_bundle(cls_model);
      const std::size_t k = cls_top_k.value_or(bundle.labels.size());
      for (const auto& path : cls_images) {
        const auto rec = load_and_preprocess(path, bundle.arch.effective_resolution());
        const auto r = forward(bundle, rec.pixels);
        std::printf("%s\n", path.c_str());
        for (const auto& p : serve::rank_predictions(bundle.labels, r.probs, k))
          std::printf("  %-12s %.6f\n", p.label.c_str(), static_cast<double>(p.probability));
      }
    } else if (*info) {
      print_repro(*info, std::nullopt);
      ArchSpec arch;
      if (!info_model.empty()) {
        const auto bundle = load_bundle(info_model);
        arch = bundle.arch;
        std::printf("bundle format %u, labels:", bundle.format_version);
        for (const auto& l : bundle.labels) std::printf(" %s", l.c_str());
        std::printf("\n");
      } else {
        arch = build_arch(info_alpha, info_rho, info_res);
      }
      print_cost_table(arch);
      if (cmp_alpha || cmp_rho)
        print_comparison(arch, build_arch(cmp_alpha.value_or(arch.width_multiplier),
                                          cmp_rho.value_or(arch.resolution_multiplier), arch.input_resolution));
    } else if (*srv) {
      print_repro(*srv, std::nullopt);
      serve::ServiceConfig cfg;
      serve::parse_address(srv_addr, cfg);
      cfg.model_path = srv_model;
      cfg.top_k = srv_top_k;
      cfg.max_body_bytes = srv_max_body;
      cfg.allowed_origins = srv_origins;
      try {
        cfg.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      serve::ClassificationService service(cfg);
      if (!cfg.model_path.empty()) service.load_model_file(cfg.model_path);
      httplib::Server server;
      service.mount(server);
      std::printf("listening on %s:%d (model %s)\n", cfg.host.c_str(), cfg.port,
                  service.ready() ? cfg.model_path.c_str() : "not loaded");
      std::fflush(stdout);
      if (!server.listen(cfg.host, cfg.port)) throw std::runtime_error("cannot bind " + srv_addr);
    } else if (*bn) {
      print_repro(*bn, bn_seed);
      const auto bundle = load_bundle(bn_model);
      const std::size_t res = bundle.arch.effective_resolution();
      Tensor image;
      if (!bn_image.empty()) {
        image = load_and_preprocess(bn_image, res).pixels;
      } else {
        image = Tensor(Shape{1, res, res, kImageChannels});
        Rng rng(bn_seed);
        for (float& v : image.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
      }
      const auto stats = summarize_latencies(time_forward(bundle, image, bn_iters));
      std::printf("warmup %zu samples %zu p50_ms %.3f p95_ms %.3f mean_ms %.3f\n", kWarmupIterations, stats.samples,
                  stats.p50_ms, stats.p95_ms, stats.mean_ms);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
