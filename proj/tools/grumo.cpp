// Command-line surface: data generation, fixture training, uncertainty
// estimation, evaluation, and consolidated method comparison tables.
//
// Exit codes: 0 success, 1 usage error, 2 data/contract violation.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "grumo/gt01.hpp"
#include "grumo/methods.hpp"
#include "grumo/metrics.hpp"
#include "grumo/model_io.hpp"
#include "grumo/pgm.hpp"
#include "grumo/report.hpp"
#include "grumo/synthdata.hpp"
#include "grumo/train.hpp"

namespace fs = std::filesystem;
using namespace grumo;

namespace {

int worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("GRUMO_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) hw = std::min<unsigned>(hw, unsigned(v));
  }
  return int(hw);
}

template <class F>
void parallel_for(std::size_t count, F&& fn) {
  int workers = std::min<std::size_t>(worker_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Tensor mask_tensor(const Mask& mask) {
  Tensor t({1, 1, mask.h, mask.w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = mask.on[i] ? 1.0f : 0.0f;
  return t;
}

Mask tensor_mask(const Tensor& t) {
  Mask m = Mask::all(t.shape().h, t.shape().w, true);
  for (std::size_t i = 0; i < t.size(); ++i) m.on[i] = t[i] != 0.0f;
  return m;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) ||
                           c == '-' || c == '_' || c == '.')
                              ? c
                              : '_';
  return out;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::uint64_t seed = 1;
  int count = 0;
  std::string out;
  int size = 64;
  float dmin = 1.0f, dmax = 10.0f;
  std::string split = "train";
  bool force = false;
};

int cmd_gen_data(const GenArgs& a) {
  fs::path out(a.out);
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!a.force)
      throw std::runtime_error("output directory " + a.out +
                               " is not empty (use --force to overwrite)");
    fs::remove_all(out);
  }
  SceneSet set =
      gen_sceneset(a.seed, a.count, a.size, a.size, a.dmin, a.dmax, a.split);
  write_sceneset(set, out);
  std::cout << "wrote " << set.scenes.size() << " scenes to " << a.out
            << "\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out;
  bool predictive = false;
  int epochs = 40;
  std::uint64_t seed = 1;
};

int cmd_train(const TrainArgs& a) {
  SceneSet data = read_sceneset(a.data);
  ModelConfig cfg;
  cfg.predictive = a.predictive;
  cfg.d_min = data.d_min;
  cfg.d_max = data.d_max;
  Model m = train_fixture(cfg, data, a.epochs, a.seed);
  save_model(m, a.out);
  std::cout << "trained " << (a.predictive ? "predictive" : "regular")
            << " model; held-out abs rel " << fmt_g6(m.fixture_abs_rel)
            << "; saved to " << a.out << "\n";
  return 0;
}

struct EstimateArgs {
  std::string model;
  std::string data;
  std::string method = "ours";
  std::optional<float> lambda;
  std::optional<int> layer;
  std::string layers;  // comma list
  std::string fusion;
  std::string out;
};

MethodSpec build_method(const EstimateArgs& a, const Model& model) {
  MethodSpec spec = parse_method(a.method);
  if (a.lambda) spec.grad.lambda = *a.lambda;
  if (a.layer) spec.grad.layer = *a.layer;
  if (!a.layers.empty()) {
    spec.grad.layers.clear();
    std::size_t pos = 0;
    while (pos <= a.layers.size()) {
      std::size_t next = a.layers.find(',', pos);
      std::string one = next == std::string::npos
                            ? a.layers.substr(pos)
                            : a.layers.substr(pos, next - pos);
      try {
        spec.grad.layers.push_back(std::stoi(one));
      } catch (const std::exception&) {
        throw std::runtime_error("--layers: malformed index '" + one + "'");
      }
      if (next == std::string::npos) break;
      pos = next + 1;
    }
  }
  if (!a.fusion.empty()) {
    if (a.fusion == "max")
      spec.grad.fusion = Fusion::Max;
    else if (a.fusion == "mean")
      spec.grad.fusion = Fusion::Mean;
    else if (a.fusion == "var")
      spec.grad.fusion = Fusion::Var;
    else
      throw std::runtime_error("--fusion must be max, mean or var");
  }
  if (is_ours(spec)) {
    // Validate indices up front so a bad flag fails before any work.
    resolve_layers(resolved_grad_config(spec, model.decoder_layer_count()),
                   model.decoder_layer_count());
  }
  return spec;
}

void run_estimate(const Model& model, const SceneSet& data,
                  const MethodSpec& spec, const fs::path& out) {
  fs::create_directories(out);
  write_text(out / "method.txt", spec.spec_string + "\n");
  parallel_for(data.scenes.size(), [&](std::size_t i) {
    const Scene& scene = data.scenes[i];
    MethodOutput result = run_method(spec, model, scene.image);
    fs::path sdir = out / std::to_string(scene.seed);
    fs::create_directories(sdir);
    write_gt01(sdir / "depth.gt01", result.depth);
    write_gt01(sdir / "uncert.gt01", result.uncert.values);
    write_gt01(sdir / "mask.gt01", mask_tensor(result.uncert.valid));
    write_pgm16(sdir / "uncert.pgm", result.uncert.values);
  });
}

int cmd_estimate(const EstimateArgs& a) {
  Model model = load_model(a.model);
  SceneSet data = read_sceneset(a.data);
  MethodSpec spec = build_method(a, model);
  run_estimate(model, data, spec, fs::path(a.out));
  std::cout << "estimated " << data.scenes.size() << " scenes with "
            << spec.spec_string << " into " << a.out << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string pred_dir;
  std::string data;
  int bins = 100;
  int steps = 50;
  std::string out;
};

MethodReport evaluate_pred_dir(const SceneSet& data, const fs::path& pred_dir,
                               int bins, int steps,
                               const fs::path& out_dir) {
  std::string method = "unknown";
  {
    std::ifstream f(pred_dir / "method.txt");
    if (f) std::getline(f, method);
  }
  std::vector<std::string> missing;
  for (const auto& scene : data.scenes) {
    fs::path sdir = pred_dir / std::to_string(scene.seed);
    for (const char* name : {"depth.gt01", "uncert.gt01", "mask.gt01"})
      if (!fs::exists(sdir / name)) {
        missing.push_back(std::to_string(scene.seed));
        break;
      }
  }
  if (!missing.empty()) {
    std::string ids;
    for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
    throw std::runtime_error("missing prediction files for scenes: " + ids);
  }

  std::vector<PixelRecord> pooled;
  std::vector<SparsificationResult> per_image[3];
  std::vector<SparsificationRow> rows;
  std::vector<std::string> image_ids;
  for (const auto& scene : data.scenes) {
    fs::path sdir = pred_dir / std::to_string(scene.seed);
    Tensor depth = read_gt01(sdir / "depth.gt01");
    Tensor uncert = read_gt01(sdir / "uncert.gt01");
    Mask mask = tensor_mask(read_gt01(sdir / "mask.gt01"));
    auto records = make_records(scene.depth_gt, depth, uncert, mask);
    if (records.empty())
      throw std::runtime_error("scene " + std::to_string(scene.seed) +
                               " has no valid pixels");
    pooled.insert(pooled.end(), records.begin(), records.end());
    for (int k = 0; k < 3; ++k)
      per_image[k].push_back(sparsification(records, kAllMetrics[k], steps));
    image_ids.push_back(std::to_string(scene.seed));
  }

  MethodReport report;
  report.method = method;
  SparsificationResult aggregated[3];
  for (int k = 0; k < 3; ++k) {
    aggregated[k] = aggregate_sparsification(per_image[k]);
    report.ause[k] = aggregated[k].ause;
    report.aurg[k] = aggregated[k].aurg;
    report.base_metric[k] = subset_metric(pixel_errors(pooled, kAllMetrics[k]),
                                          kAllMetrics[k]);
  }
  report.nuce = nuce(pooled, bins);
  report.image_count = data.scenes.size();
  report.pixel_count = pooled.size();
  std::size_t total =
      data.scenes.size() * std::size_t(data.h) * std::size_t(data.w);
  report.mask_coverage = total ? double(pooled.size()) / double(total) : 0.0;

  for (std::size_t i = 0; i < image_ids.size(); ++i)
    for (int k = 0; k < 3; ++k)
      rows.push_back({method, image_ids[i], &per_image[k][i]});
  for (int k = 0; k < 3; ++k)
    rows.push_back({method, "aggregate", &aggregated[k]});

  fs::create_directories(out_dir);
  write_text(out_dir / "sparsification.csv", render_sparsification_csv(rows));
  write_text(out_dir / "report.csv", render_report_csv(report));
  return report;
}

int cmd_evaluate(const EvaluateArgs& a) {
  SceneSet data = read_sceneset(a.data);
  MethodReport report = evaluate_pred_dir(data, fs::path(a.pred_dir), a.bins,
                                          a.steps, fs::path(a.out));
  std::cout << "method " << report.method << ": nuce " << fmt_g6(report.nuce);
  for (int k = 0; k < 3; ++k)
    std::cout << "; " << metric_name(kAllMetrics[k]) << " ause "
              << fmt_g6(report.ause[k]) << " aurg " << fmt_g6(report.aurg[k]);
  std::cout << "\n";
  std::cout << "depth quality:";
  for (int k = 0; k < 3; ++k)
    std::cout << " " << metric_name(kAllMetrics[k]) << " "
              << fmt_g6(report.base_metric[k]);
  std::cout << " (" << report.image_count << " images, "
            << report.pixel_count << " valid pixels, coverage "
            << fmt_g6(report.mask_coverage) << ")\n";
  return 0;
}

struct CompareArgs {
  std::string model;
  std::string data;
  std::vector<std::string> methods;
  std::string out;
  int bins = 100;
  int steps = 50;
};

int cmd_compare(const CompareArgs& a) {
  Model model = load_model(a.model);
  SceneSet data = read_sceneset(a.data);
  std::vector<std::string> methods = a.methods;
  if (methods.empty()) {
    methods = {"ours", "ours-feat", "ours-multi", "post", "var", "dropstar"};
    if (model.config.predictive) methods.push_back("sigma");
  }
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());

  std::vector<MethodReport> reports;
  for (const auto& method : methods) {
    try {
      MethodSpec spec = parse_method(method);
      if (is_ours(spec))
        resolve_layers(resolved_grad_config(spec, model.decoder_layer_count()),
                       model.decoder_layer_count());
      fs::path mdir = fs::path(a.out) / sanitize(method);
      run_estimate(model, data, spec, mdir);
      reports.push_back(
          evaluate_pred_dir(data, mdir, a.bins, a.steps, mdir));
    } catch (const std::exception& e) {
      throw std::runtime_error("method '" + method + "' failed: " + e.what());
    }
  }
  write_text(fs::path(a.out) / "table.csv", render_table_csv(reports));
  std::cout << "wrote " << (fs::path(a.out) / "table.csv").string() << " ("
            << reports.size() << " methods)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"post-hoc pixel-wise uncertainty for depth regression"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* cgen = app.add_subcommand("gen-data",
                                  "generate a synthetic scene dataset");
  cgen->add_option("--seed", gen.seed, "master seed");
  cgen->add_option("--count", gen.count, "number of scenes")->required();
  cgen->add_option("--out", gen.out, "output directory")->required();
  cgen->add_option("--size", gen.size, "square image size (default 64)");
  cgen->add_option("--dmin", gen.dmin, "minimum depth in meters");
  cgen->add_option("--dmax", gen.dmax, "maximum depth in meters");
  cgen->add_option("--split", gen.split, "split label (train|test)");
  cgen->add_flag("--force", gen.force, "overwrite a non-empty directory");

  TrainArgs train;
  auto* ctrain = app.add_subcommand("train", "train the fixture model");
  ctrain->add_option("--data", train.data, "dataset directory")->required();
  ctrain->add_option("--out", train.out, "model output directory")->required();
  ctrain->add_flag("--predictive", train.predictive,
                   "also train the variance head");
  ctrain->add_option("--epochs", train.epochs, "training epochs");
  ctrain->add_option("--seed", train.seed, "initialisation seed");

  EstimateArgs est;
  auto* cest = app.add_subcommand("estimate",
                                  "write per-scene depth and uncertainty");
  cest->add_option("--model", est.model, "model directory")->required();
  cest->add_option("--data", est.data, "dataset directory")->required();
  cest->add_option("--method", est.method, "method spec (default ours)");
  float lambda_opt = 0.0f;
  auto* lam = cest->add_option("--lambda", lambda_opt,
                               "variance weight for predictive models");
  int layer_opt = 0;
  auto* lay = cest->add_option("--layer", layer_opt,
                               "single decoder layer index");
  cest->add_option("--layers", est.layers, "comma list of decoder layers");
  cest->add_option("--fusion", est.fusion, "multi-layer fusion: max|mean|var");
  cest->add_option("--out", est.out, "output directory")->required();

  EvaluateArgs ev;
  auto* cev = app.add_subcommand("evaluate",
                                 "score a prediction directory against "
                                 "ground truth");
  cev->add_option("--pred-dir", ev.pred_dir, "estimate output directory")
      ->required();
  cev->add_option("--data", ev.data, "dataset directory")->required();
  cev->add_option("--bins", ev.bins, "calibration bins (default 100)");
  cev->add_option("--steps", ev.steps, "sparsification steps (default 50)");
  cev->add_option("--out", ev.out, "output directory")->required();

  CompareArgs cmp;
  auto* ccmp = app.add_subcommand("compare",
                                  "run several methods and emit table.csv");
  ccmp->add_option("--model", cmp.model, "model directory")->required();
  ccmp->add_option("--data", cmp.data, "dataset directory")->required();
  ccmp->add_option("--methods", cmp.methods, "method specs")
      ->delimiter(',');
  ccmp->add_option("--out", cmp.out, "output directory")->required();
  ccmp->add_option("--bins", cmp.bins, "calibration bins");
  ccmp->add_option("--steps", cmp.steps, "sparsification steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*cgen) return cmd_gen_data(gen);
    if (*ctrain) return cmd_train(train);
    if (*cest) {
      if (*lam) est.lambda = lambda_opt;
      if (*lay) est.layer = layer_opt;
      return cmd_estimate(est);
    }
    if (*cev) return cmd_evaluate(ev);
    if (*ccmp) return cmd_compare(cmp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
