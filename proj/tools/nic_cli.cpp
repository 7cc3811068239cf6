// Experiment driver: data synthesis, encoder training, compression,
// image-level training, evaluation, and the task-ablation sweep.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numeric failure (NaN/inf detected).

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nic/checkpoint.hpp"
#include "nic/compression.hpp"
#include "nic/config.hpp"
#include "nic/image.hpp"
#include "nic/metrics.hpp"
#include "nic/models.hpp"
#include "nic/pipeline.hpp"
#include "nic/survival.hpp"
#include "nic/synthdata.hpp"
#include "nic/training.hpp"

namespace fs = std::filesystem;
using namespace nic;

namespace {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void ensure_finite(const std::vector<double>& v, const std::string& what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError("non-finite value in " + what);
}

void ensure_finite(double x, const std::string& what) {
  if (!std::isfinite(x)) throw NumericError("non-finite value in " + what);
}

// ---------------------------------------------------------------------------
// run directory: named by a digest of the effective config so a rerun with
// identical settings lands in the same place

std::string config_digest8(const Config& cfg) {
  ParamStore scratch;
  const std::string text = cfg.serialize();
  auto t = make_tensor({static_cast<int>(text.size())});
  for (size_t i = 0; i < text.size(); ++i) t->data[i] = static_cast<unsigned char>(text[i]);
  scratch.add("config", t);
  return hex_digest(sha256_params(scratch)).substr(0, 8);
}

fs::path make_run_dir(const std::string& out_dir, const std::string& command,
                      const Config& cfg) {
  fs::path dir = fs::path(out_dir) / (command + "-" + config_digest8(cfg));
  fs::create_directories(dir);
  std::ofstream f(dir / "config.ini");
  f << cfg.serialize();
  return dir;
}

// ---------------------------------------------------------------------------
// shared config plumbing

struct GlobalArgs {
  std::string config_path;
  std::string out_dir = "runs";
  int64_t seed = -1;  // <0: use the config value
  int threads = 1;
};

Config load_config(const GlobalArgs& g) {
  Config cfg = g.config_path.empty() ? Config::parse_string("")
                                     : Config::parse_file(g.config_path);
  if (g.seed >= 0) cfg.set("run.seed", std::to_string(g.seed));
  cfg.set("run.threads", std::to_string(g.threads));
  return cfg;
}

uint64_t run_seed(const Config& cfg) {
  return static_cast<uint64_t>(cfg.get_int("run.seed", 0));
}

const std::set<std::string> kRunKeys = {"run.seed", "run.threads"};

std::set<std::string> with_run_keys(std::set<std::string> keys) {
  keys.insert(kRunKeys.begin(), kRunKeys.end());
  return keys;
}

EncoderSpec encoder_spec_from(const Config& cfg) {
  EncoderSpec spec;
  spec.input_size = static_cast<int>(cfg.get_int("encoder.patch_size", 64));
  spec.conv_layers = static_cast<int>(cfg.get_int("encoder.conv_layers", 4));
  spec.filters = static_cast<int>(cfg.get_int("encoder.filters", 128));
  spec.code_size = static_cast<int>(cfg.get_int("encoder.code_size", 128));
  return spec;
}

const std::set<std::string> kEncoderKeys = {
    "encoder.patch_size", "encoder.conv_layers", "encoder.filters",
    "encoder.code_size",  "encoder.tasks",       "encoder.patches_per_task"};

TrainConfig train_config_from(const Config& cfg, uint64_t seed) {
  TrainConfig tc;
  tc.seed = seed;
  tc.batch_per_task = static_cast<int>(cfg.get_int("train.batch_per_task", 32));
  tc.image_batch = static_cast<int>(cfg.get_int("train.image_batch", 16));
  tc.initial_lr = cfg.get_double("train.lr", 1e-3);
  tc.floor_lr = cfg.get_double("train.floor_lr", 1e-5);
  tc.max_epochs = static_cast<int>(cfg.get_int("train.epochs", 50));
  tc.patience = static_cast<int>(cfg.get_int("train.patience", 4));
  tc.min_delta = cfg.get_double("train.min_delta", 1e-4);
  tc.augment.enabled = cfg.get_bool("train.augment", true);
  return tc;
}

const std::set<std::string> kTrainKeys = {
    "train.batch_per_task", "train.image_batch", "train.lr",       "train.floor_lr",
    "train.epochs",         "train.patience",    "train.min_delta", "train.augment"};

std::array<bool, 4> parse_task_subset(const Config& cfg) {
  const std::string spec = cfg.get_str("encoder.tasks", "all");
  std::array<bool, 4> include{false, false, false, false};
  if (spec == "all") {
    include.fill(true);
    return include;
  }
  const auto tasks = canonical_tasks();
  for (const auto& name : split_csv_list(spec)) {
    bool found = false;
    for (size_t t = 0; t < tasks.size(); ++t)
      if (tasks[t].name == name) {
        include[t] = true;
        found = true;
      }
    if (!found) throw ConfigError("unknown task name: " + name);
  }
  return include;
}

// ---------------------------------------------------------------------------
// label CSV shared by gen-data / train-wsi

struct LabelRow {
  std::string id;
  double target = 0.0;
  int binary_class = 0;
  double latent_risk = 0.0;
};

void write_labels_csv(const std::vector<LabelRow>& rows, const fs::path& path) {
  std::ofstream f(path);
  f << "sample_id,regression_target,binary_class,latent_risk\n";
  f.precision(17);
  for (const auto& r : rows)
    f << r.id << "," << r.target << "," << r.binary_class << "," << r.latent_risk << "\n";
}

std::vector<LabelRow> read_labels_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open labels file: " + path.string());
  std::vector<LabelRow> out;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    LabelRow r;
    std::string field;
    std::getline(ss, r.id, ',');
    std::getline(ss, field, ',');
    r.target = std::stod(field);
    std::getline(ss, field, ',');
    r.binary_class = std::stoi(field);
    std::getline(ss, field, ',');
    r.latent_risk = std::stod(field);
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DataError("labels file has no rows: " + path.string());
  return out;
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(const GlobalArgs& g) {
  Config cfg = load_config(g);
  cfg.require_known(with_run_keys({"data.count", "data.grid", "data.patch_size",
                                   "data.censor_rate"}));
  const int count = static_cast<int>(cfg.get_int("data.count", 50));
  const int grid = static_cast<int>(cfg.get_int("data.grid", 16));
  const int patch = static_cast<int>(cfg.get_int("data.patch_size", 64));
  const double censor = cfg.get_double("data.censor_rate", 0.3);
  const uint64_t seed = run_seed(cfg);
  const fs::path dir = make_run_dir(g.out_dir, "gen-data", cfg);

  const auto wsis = gen_mini_wsi_set(seed, count, grid, patch);
  std::vector<LabelRow> labels;
  std::vector<double> risks;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "wsi_%04d", i);
    write_ppm(wsis[static_cast<size_t>(i)].image, (dir / (std::string(name) + ".ppm")).string());
    labels.push_back({name, wsis[static_cast<size_t>(i)].regression_target,
                      wsis[static_cast<size_t>(i)].binary_class,
                      wsis[static_cast<size_t>(i)].latent_risk});
    risks.push_back(wsis[static_cast<size_t>(i)].latent_risk);
  }
  write_labels_csv(labels, dir / "labels.csv");

  const auto records = gen_survival(mix_stream(seed, 0x5u), risks, censor);
  std::vector<CohortRow> cohort;
  for (int i = 0; i < count; ++i)
    cohort.push_back({labels[static_cast<size_t>(i)].id, records[static_cast<size_t>(i)],
                      0.0, false});
  write_cohort_csv(cohort, (dir / "cohort.csv").string());

  std::cout << "gen-data: wrote " << count << " images to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-encoder

int cmd_train_encoder(const GlobalArgs& g) {
  Config cfg = load_config(g);
  auto keys = with_run_keys(kTrainKeys);
  keys.insert(kEncoderKeys.begin(), kEncoderKeys.end());
  cfg.require_known(keys);

  const EncoderSpec spec = encoder_spec_from(cfg);
  const auto include = parse_task_subset(cfg);
  const int per_task = static_cast<int>(cfg.get_int("encoder.patches_per_task", 360));
  const uint64_t seed = run_seed(cfg);
  const fs::path dir = make_run_dir(g.out_dir, "train-encoder", cfg);

  const auto tasks = gen_patch_tasks(mix_stream(seed, 0xda7aULL), per_task, spec.input_size);
  const TrainConfig tc = train_config_from(cfg, seed);
  auto result = train_encoder_subset(spec, tasks, include, tc);

  for (const auto& rec : result.history.epochs)
    for (double m : rec.val_metrics) ensure_finite(m, "encoder validation metrics");

  write_nicp(result.params, (dir / "encoder.nicp").string());
  write_history_csv(result.history, (dir / "history.csv").string());

  std::cout << "train-encoder: tasks";
  for (int t : result.task_ids) std::cout << " " << canonical_tasks()[static_cast<size_t>(t)].name;
  std::cout << ", checkpoint " << (dir / "encoder.nicp").string() << "\n";
  if (!result.history.epochs.empty()) {
    std::cout << "final validation:";
    const auto& last = result.history.epochs.back();
    for (size_t i = 0; i < last.val_metrics.size(); ++i)
      std::cout << " " << result.history.metric_names[i] << "=" << last.val_metrics[i];
    std::cout << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// compress

int cmd_compress(const GlobalArgs& g) {
  Config cfg = load_config(g);
  auto keys = with_run_keys({"compress.images_dir", "compress.checkpoint",
                             "compress.tissue_threshold", "compress.expected_digest"});
  keys.insert(kEncoderKeys.begin(), kEncoderKeys.end());
  cfg.require_known(keys);

  const EncoderSpec spec = encoder_spec_from(cfg);
  const fs::path images_dir = cfg.get_str("compress.images_dir");
  const std::string ckpt = cfg.get_str("compress.checkpoint");
  if (!fs::exists(ckpt)) throw DataError("checkpoint not found: " + ckpt);
  if (!fs::is_directory(images_dir))
    throw DataError("images_dir is not a directory: " + images_dir.string());

  std::optional<double> tissue;
  const double tt = cfg.get_double("compress.tissue_threshold", -1.0);
  if (tt >= 0.0) tissue = tt;
  const int threads = static_cast<int>(cfg.get_int("run.threads", 1));
  const fs::path dir = make_run_dir(g.out_dir, "compress", cfg);

  const ParamStore params = read_nicp(ckpt);
  const auto digest = sha256_params(params);
  std::string warning;
  const std::string expected = cfg.get_str("compress.expected_digest", "");
  if (!expected.empty() && expected != hex_digest(digest))
    warning = "encoder_digest_mismatch";

  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(images_dir))
    if (entry.path().extension() == ".ppm") inputs.push_back(entry.path());
  std::sort(inputs.begin(), inputs.end());
  if (inputs.empty()) throw DataError("no .ppm images in " + images_dir.string());

  std::ofstream manifest(dir / "manifest.csv");
  manifest << "sample_id,rows,cols,code_size,encoder_digest,warning\n";
  for (const auto& path : inputs) {
    PpmRowSource source(path.string());
    const PatchGrid grid = plan_grid(source.width(), source.height(), spec.input_size,
                                     spec.input_size);
    CompressedImage ci = compress(source, make_encoder_embed(spec, params), spec.code_size,
                                  grid, tissue, threads);
    ensure_finite(ci.embeddings, "embeddings of " + path.stem().string());
    ci.encoder_digest = digest;
    write_nicw(ci, (dir / (path.stem().string() + ".nicw")).string());
    manifest << path.stem().string() << "," << ci.rows << "," << ci.cols << ","
             << ci.code_size << "," << hex_digest(digest) << "," << warning << "\n";
  }
  std::cout << "compress: " << inputs.size() << " images -> " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-wsi

Objective parse_objective(const std::string& s) {
  if (s == "mse") return Objective::mse;
  if (s == "ce") return Objective::ce;
  if (s == "cox") return Objective::cox;
  throw ConfigError("unknown objective: " + s + " (expected mse, ce or cox)");
}

WsiCnnSpec wsi_spec_from(const Config& cfg) {
  WsiCnnSpec spec;
  spec.code_size = static_cast<int>(cfg.get_int("wsi.code_size", 128));
  spec.filters = static_cast<int>(cfg.get_int("wsi.filters", 128));
  spec.grid_size = static_cast<int>(cfg.get_int("wsi.grid_size", 64));
  spec.dense_units = static_cast<int>(cfg.get_int("wsi.dense_units", 128));
  spec.dropout_rate = cfg.get_double("wsi.dropout", 0.2);
  spec.l2_coeff = cfg.get_double("wsi.l2", 1e-5);
  return spec;
}

const std::set<std::string> kWsiKeys = {
    "wsi.objective", "wsi.compressed_dir", "wsi.labels",      "wsi.cohort",
    "wsi.code_size", "wsi.filters",        "wsi.grid_size",   "wsi.dense_units",
    "wsi.dropout",   "wsi.l2",             "wsi.folds"};

// loads grids + labels (+ cohort for cox) into one aligned structure
ImageLevelData load_image_level_data(const Config& cfg, const WsiCnnSpec& spec,
                                     Objective objective,
                                     std::vector<std::string>* ids_out) {
  const fs::path cdir = cfg.get_str("wsi.compressed_dir");
  const auto labels = read_labels_csv(cfg.get_str("wsi.labels"));

  std::map<std::string, SurvivalRecord> cohort;
  if (objective == Objective::cox) {
    const std::string cohort_path = cfg.get_str("wsi.cohort", "");
    if (cohort_path.empty())
      throw ConfigError("wsi.cohort is required for the cox objective");
    for (const auto& row : read_cohort_csv(cohort_path)) cohort[row.id] = row.record;
  }

  ImageLevelData data;
  for (const auto& lab : labels) {
    const fs::path nicw = cdir / (lab.id + ".nicw");
    if (!fs::exists(nicw))
      throw DataError("missing compressed image: " + nicw.string());
    const CompressedImage ci = read_nicw(nicw.string());
    auto grid = grid_tensor(ci, spec.grid_size);
    if (grid->shape[0] != spec.grid_size || grid->shape[1] != spec.grid_size)
      throw DataError("compressed grid for " + lab.id + " exceeds wsi.grid_size");
    data.grids.push_back(grid);
    data.targets.push_back(lab.target);
    data.labels.push_back(lab.binary_class);
    if (objective == Objective::cox) {
      auto it = cohort.find(lab.id);
      if (it == cohort.end()) throw DataError("sample " + lab.id + " missing from cohort");
      data.records.push_back(it->second);
    }
    if (ids_out) ids_out->push_back(lab.id);
  }
  return data;
}

int cmd_train_wsi(const GlobalArgs& g) {
  Config cfg = load_config(g);
  auto keys = with_run_keys(kTrainKeys);
  keys.insert(kWsiKeys.begin(), kWsiKeys.end());
  cfg.require_known(keys);

  WsiCnnSpec spec = wsi_spec_from(cfg);
  const Objective objective = parse_objective(cfg.get_str("wsi.objective", "mse"));
  spec.output = objective == Objective::mse ? WsiOutput::regression
               : objective == Objective::ce ? WsiOutput::classification
                                            : WsiOutput::risk;
  const int k = static_cast<int>(cfg.get_int("wsi.folds", 4));
  const uint64_t seed = run_seed(cfg);
  const fs::path dir = make_run_dir(g.out_dir, "train-wsi", cfg);

  std::vector<std::string> ids;
  const ImageLevelData data = load_image_level_data(cfg, spec, objective, &ids);
  const int n = static_cast<int>(data.grids.size());
  if (n < 2 * k) throw DataError("too few samples for " + std::to_string(k) + " folds");

  // same fold plan and per-fold seed streams as the library cross-validation
  // helper, with the parameters of each fold additionally checkpointed
  const FoldPlan plan = kfold(n, k, FoldPattern::train_val, mix_stream(seed, 0xf01d));
  std::vector<double> oof(static_cast<size_t>(n), 0.0);
  std::vector<int> fold_of(static_cast<size_t>(n), -1);
  TrainConfig tc = train_config_from(cfg, seed);
  for (int r = 0; r < k; ++r) {
    const auto train_idx = plan.train_indices(r);
    const auto val_idx = plan.val_indices(r);
    ParamStore params;
    Rng init_rng(mix_stream(seed, 0x1000 + static_cast<uint64_t>(r)));
    init_wsi_params(params, spec, init_rng);
    TrainConfig fold_cfg = tc;
    fold_cfg.seed = mix_stream(seed, 0x2000 + static_cast<uint64_t>(r));
    const History hist =
        train_image_level(spec, params, data, objective, train_idx, val_idx, fold_cfg);
    write_history_csv(hist, (dir / ("fold" + std::to_string(r) + "_history.csv")).string());
    write_nicp(params, (dir / ("fold" + std::to_string(r) + ".nicp")).string());
    const auto preds = predict_image_level(spec, params, data.grids, val_idx);
    ensure_finite(preds, "fold " + std::to_string(r) + " predictions");
    for (size_t i = 0; i < val_idx.size(); ++i) {
      oof[static_cast<size_t>(val_idx[i])] = preds[i];
      fold_of[static_cast<size_t>(val_idx[i])] = r;
    }
  }

  std::vector<PredictionRow> rows;
  for (int i = 0; i < n; ++i) {
    const double label = objective == Objective::mse ? data.targets[static_cast<size_t>(i)]
                         : objective == Objective::ce
                             ? static_cast<double>(data.labels[static_cast<size_t>(i)])
                             : data.records[static_cast<size_t>(i)].follow_up;
    rows.push_back({ids[static_cast<size_t>(i)], fold_of[static_cast<size_t>(i)], 0,
                    oof[static_cast<size_t>(i)], label});
  }
  write_predictions_csv(rows, (dir / "predictions.csv").string());
  std::cout << "train-wsi: " << k << " folds over " << n << " samples -> "
            << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const GlobalArgs& g) {
  Config cfg = load_config(g);
  cfg.require_known(with_run_keys(
      {"eval.predictions", "eval.objective", "eval.cohort", "eval.ablation_csv"}));
  const fs::path dir = make_run_dir(g.out_dir, "evaluate", cfg);
  std::ofstream report(dir / "report.csv");
  report.precision(17);
  report << "metric,value\n";

  const std::string ablation_path = cfg.get_str("eval.ablation_csv", "");
  if (!ablation_path.empty()) {
    const auto rows = read_ablation_csv(ablation_path);
    const auto rho = task_inclusion_correlation(rows);
    const auto tasks = canonical_tasks();
    for (size_t t = 0; t < 4; ++t) {
      ensure_finite(rho[t], "task-inclusion correlation");
      report << "inclusion_rho_" << tasks[t].name << "," << rho[t] << "\n";
      std::cout << "inclusion rho " << tasks[t].name << " = " << rho[t] << "\n";
    }
    return 0;
  }

  const auto preds = read_predictions_csv(cfg.get_str("eval.predictions"));
  if (preds.empty()) throw DataError("predictions file has no rows");
  std::vector<double> p, y;
  for (const auto& r : preds) {
    p.push_back(r.prediction);
    y.push_back(r.label);
  }
  ensure_finite(p, "predictions");

  const Objective objective = parse_objective(cfg.get_str("eval.objective", "mse"));
  if (objective == Objective::mse) {
    const double rho = spearman(p, y);
    const auto ci = spearman_ci(p, y, 0.95, CiMethod::fisher_z);
    report << "spearman," << rho << "\nci_lo," << ci.lo << "\nci_hi," << ci.hi << "\n";
    std::cout << "spearman = " << rho << "  [" << ci.lo << ", " << ci.hi << "]\n";
  } else if (objective == Objective::ce) {
    std::vector<int> labels;
    for (double v : y) labels.push_back(v > 0.5 ? 1 : 0);
    const double auc = auc_roc(p, labels);
    report << "auc," << auc << "\n";
    std::cout << "auc = " << auc << "\n";
  } else {
    const std::string cohort_path = cfg.get_str("eval.cohort", "");
    if (cohort_path.empty()) throw ConfigError("eval.cohort is required for cox");
    std::map<std::string, SurvivalRecord> cohort;
    for (const auto& row : read_cohort_csv(cohort_path)) cohort[row.id] = row.record;
    std::vector<SurvivalRecord> records;
    for (const auto& r : preds) {
      auto it = cohort.find(r.sample_id);
      if (it == cohort.end()) throw DataError("sample " + r.sample_id + " not in cohort");
      records.push_back(it->second);
    }
    const auto split = median_risk_split(p);
    if (split.degenerate) throw DataError("all predicted risks identical");
    std::vector<SurvivalRecord> low, high;
    for (int i : split.low) low.push_back(records[static_cast<size_t>(i)]);
    for (int i : split.high) high.push_back(records[static_cast<size_t>(i)]);
    const auto lr = log_rank_test(low, high);
    ensure_finite(lr.chi_square, "log-rank statistic");
    report << "chi_square," << lr.chi_square << "\np_value," << lr.p_value << "\n";
    write_km_csv(kaplan_meier(low), (dir / "km_low.csv").string());
    write_km_csv(kaplan_meier(high), (dir / "km_high.csv").string());
    std::cout << "log-rank chi-square = " << lr.chi_square << ", p = " << lr.p_value
              << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// ablate

int cmd_ablate(const GlobalArgs& g) {
  Config cfg = load_config(g);
  auto keys = with_run_keys(kTrainKeys);
  keys.insert(kEncoderKeys.begin(), kEncoderKeys.end());
  for (const auto& k : {"ablate.repeat_full", "ablate.wsi_count", "ablate.wsi_grid",
                        "ablate.wsi_filters", "ablate.wsi_dense", "ablate.folds",
                        "ablate.image_epochs"})
    keys.insert(k);
  cfg.require_known(keys);

  const EncoderSpec enc_spec = encoder_spec_from(cfg);
  const int repeat_full = static_cast<int>(cfg.get_int("ablate.repeat_full", 3));
  const int wsi_count = static_cast<int>(cfg.get_int("ablate.wsi_count", 60));
  const int wsi_grid = static_cast<int>(cfg.get_int("ablate.wsi_grid", 8));
  const int per_task = static_cast<int>(cfg.get_int("encoder.patches_per_task", 180));
  const uint64_t seed = run_seed(cfg);
  const fs::path dir = make_run_dir(g.out_dir, "ablate", cfg);

  WsiCnnSpec wsi_spec;
  wsi_spec.code_size = enc_spec.code_size;
  wsi_spec.filters = static_cast<int>(cfg.get_int("ablate.wsi_filters", 16));
  wsi_spec.grid_size = wsi_grid;
  wsi_spec.dense_units = static_cast<int>(cfg.get_int("ablate.wsi_dense", 16));
  wsi_spec.dropout_rate = 0.0;
  wsi_spec.output = WsiOutput::regression;
  const int folds = static_cast<int>(cfg.get_int("ablate.folds", 4));

  const auto tasks = gen_patch_tasks(mix_stream(seed, 0xda7aULL), per_task,
                                     enc_spec.input_size);
  const auto wsis = gen_mini_wsi_set(mix_stream(seed, 0x3e7ULL), wsi_count, wsi_grid,
                                     enc_spec.input_size);
  std::vector<double> targets;
  for (const auto& w : wsis) targets.push_back(w.regression_target);

  // all 15 nonempty subsets, then extra full-subset repeats with fresh seeds
  std::vector<std::pair<std::array<bool, 4>, uint64_t>> jobs;
  for (int mask = 1; mask < 16; ++mask)
    jobs.push_back({{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0, (mask & 8) != 0},
                    mix_stream(seed, 0x100 + static_cast<uint64_t>(mask))});
  for (int r = 0; r < repeat_full; ++r)
    jobs.push_back({{true, true, true, true},
                    mix_stream(seed, 0x900 + static_cast<uint64_t>(r))});

  TrainConfig enc_tc = train_config_from(cfg, seed);
  TrainConfig img_tc = enc_tc;
  img_tc.max_epochs = static_cast<int>(cfg.get_int("ablate.image_epochs", 30));
  img_tc.augment.enabled = false;

  std::vector<AblationRow> rows;
  for (size_t j = 0; j < jobs.size(); ++j) {
    const auto& [include, job_seed] = jobs[j];
    TrainConfig tc = enc_tc;
    tc.seed = job_seed;
    const auto enc = train_encoder_subset(enc_spec, tasks, include, tc);

    ImageLevelData data;
    data.targets = targets;
    for (const auto& w : wsis) {
      const CompressedImage ci =
          compress_image(w.image, enc_spec, enc.params, std::nullopt, 1);
      data.grids.push_back(grid_tensor(ci, wsi_grid));
    }
    const auto cv = cross_validate_image_level(wsi_spec, data, Objective::mse, folds,
                                               mix_stream(job_seed, 0xccULL), img_tc);
    ensure_finite(cv.oof, "ablation out-of-fold predictions");
    const double rho = spearman(cv.oof, targets);
    rows.push_back({include, rho});
    std::cout << "subset";
    for (size_t t = 0; t < 4; ++t) std::cout << (include[t] ? '1' : '0');
    std::cout << " (" << (j + 1) << "/" << jobs.size() << "): rho = " << rho << std::endl;
  }

  write_ablation_csv(rows, (dir / "ablation.csv").string());
  const auto rho = task_inclusion_correlation(rows);
  std::ofstream report(dir / "report.csv");
  report.precision(17);
  report << "metric,value\n";
  const auto names = canonical_tasks();
  for (size_t t = 0; t < 4; ++t)
    report << "inclusion_rho_" << names[t].name << "," << rho[t] << "\n";

  // directional summary: mean correlation by subset size
  std::array<double, 4> sum{};
  std::array<int, 4> cnt{};
  for (const auto& r : rows) {
    const int sz = static_cast<int>(std::count(r.included.begin(), r.included.end(), true));
    sum[static_cast<size_t>(sz - 1)] += r.correlation;
    ++cnt[static_cast<size_t>(sz - 1)];
  }
  for (int s = 1; s <= 4; ++s) {
    const double mean = sum[static_cast<size_t>(s - 1)] / cnt[static_cast<size_t>(s - 1)];
    report << "mean_rho_" << s << "_tasks," << mean << "\n";
    std::cout << "mean rho with " << s << " task(s): " << mean << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural image compression experiment driver"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "configuration file");
  app.add_option("--seed", g.seed, "override run.seed");
  app.add_option("--out-dir", g.out_dir, "root directory for run outputs");
  app.add_option("--threads", g.threads, "worker threads for parallel-safe stages");

  int (*handler)(const GlobalArgs&) = nullptr;
  for (auto& [name, desc, fn] :
       std::vector<std::tuple<std::string, std::string, int (*)(const GlobalArgs&)>>{
           {"gen-data", "synthesize mini-WSIs, labels and a survival cohort", cmd_gen_data},
           {"train-encoder", "train the patch encoder on a task subset", cmd_train_encoder},
           {"compress", "compress images into NICW embedding grids", cmd_compress},
           {"train-wsi", "cross-validate the image-level model", cmd_train_wsi},
           {"evaluate", "compute metrics from prediction or ablation files", cmd_evaluate},
           {"ablate", "sweep all task subsets and correlate inclusion with quality",
            cmd_ablate}}) {
    auto* sub = app.add_subcommand(name, desc);
    sub->fallthrough();  // global flags may follow the subcommand
    sub->callback([&handler, fn = fn] { handler = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // bad arguments are configuration errors
  }
  try {
    return handler(g);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NicwError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
