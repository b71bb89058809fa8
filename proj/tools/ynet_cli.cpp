#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ynet/datapipe.hpp"
#include "ynet/gradcheck.hpp"
#include "ynet/network.hpp"
#include "ynet/srm.hpp"
#include "ynet/trainer.hpp"

namespace fs = std::filesystem;
using namespace ynet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void banner(const std::string& cmd, const std::string& config_text) {
  std::cerr << "ynet " << cmd << "\n";
  std::istringstream in(config_text);
  std::string line;
  while (std::getline(in, line)) std::cerr << "  " << line << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::vector<fs::path> list_pgm(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .pgm files in " + dir.string());
  return files;
}

struct SynthArgs {
  std::string out_dir;
  std::size_t count = 0;
  std::size_t size = 256;
  std::uint64_t seed = 1;
};

int run_synth(const SynthArgs& a) {
  banner("synth", "out_dir = " + a.out_dir + "\ncount = " + std::to_string(a.count) +
                      "\nsize = " + std::to_string(a.size) + "\nseed = " + std::to_string(a.seed) + "\n");
  fs::create_directories(a.out_dir);
  for (std::size_t i = 0; i < a.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%06zu.pgm", i);
    save_pgm(synth_texture(a.size, a.size, mix64(a.seed) ^ mix64(i)), fs::path(a.out_dir) / name);
  }
  std::cerr << "wrote " << a.count << " covers\n";
  return kExitOk;
}

struct EmbedArgs {
  std::string cover_dir;
  std::string out_dir;
  double bpp = 0.0;
  std::uint64_t seed = 1;
  std::string source = "synthetic";
};

int run_embed(const EmbedArgs& a) {
  const EmbedParams base = EmbedParams::for_payload(a.bpp, a.seed);
  banner("embed", "cover_dir = " + a.cover_dir + "\nout_dir = " + a.out_dir + "\nbpp = " + format_double(a.bpp) +
                      "\nchange_rate = " + format_double(base.change_rate) + "\nseed = " + std::to_string(a.seed) +
                      "\nsource = " + a.source + "\n");
  const auto covers = list_pgm(a.cover_dir);
  fs::create_directories(a.out_dir);
  const fs::path out_abs = fs::absolute(a.out_dir);
  DatasetManifest m;
  m.base_dir = out_abs;
  for (std::size_t i = 0; i < covers.size(); ++i) {
    EmbedParams p = base;
    p.seed = mix64(a.seed) ^ mix64(i + 1);  // one key per image
    const fs::path stego = out_abs / covers[i].filename();
    save_pgm(lsbm_embed(load_pgm(covers[i]), p), stego);
    m.pairs.push_back(PairRecord{covers[i].stem().string(),
                                 fs::proximate(fs::absolute(covers[i]), out_abs).generic_string(),
                                 covers[i].filename().generic_string(), Split::unassigned, a.source});
  }
  m.save(out_abs / "manifest.csv");
  std::cerr << "wrote " << covers.size() << " stegos and " << (out_abs / "manifest.csv").string() << "\n";
  return kExitOk;
}

struct SplitArgs {
  std::string manifest;
  std::string out;
  std::uint64_t seed = 1;
  std::size_t train_pairs = 4000;
  std::size_t val_pairs = 1000;
  std::vector<std::string> train_only;
};

int run_split(const SplitArgs& a) {
  banner("split", "manifest = " + a.manifest + "\nseed = " + std::to_string(a.seed) +
                      "\ntrain_pairs = " + std::to_string(a.train_pairs) +
                      "\nval_pairs = " + std::to_string(a.val_pairs) + "\n");
  const DatasetManifest m = DatasetManifest::load(a.manifest);
  const std::set<std::string> train_only(a.train_only.begin(), a.train_only.end());
  const DatasetManifest s = make_splits(m, a.seed, SplitCounts{a.train_pairs, a.val_pairs}, train_only);
  s.save(a.out.empty() ? a.manifest : a.out);
  std::cerr << "train " << s.count(Split::train) << ", val " << s.count(Split::val) << ", test "
            << s.count(Split::test) << " pairs\n";
  return kExitOk;
}

struct AugmentArgs {
  std::string manifest;
  std::string out_dir;
};

int run_augment(const AugmentArgs& a) {
  banner("augment", "manifest = " + a.manifest + "\nout_dir = " + a.out_dir + "\n");
  const DatasetManifest m = DatasetManifest::load(a.manifest);
  const DatasetManifest out = augment_manifest(m, a.out_dir);
  out.save(fs::path(a.out_dir) / "manifest.csv");
  std::cerr << "train pairs " << m.count(Split::train) << " -> " << out.count(Split::train) << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string manifest;
  std::string net_config;
  std::string train_config;
  std::string out_dir;
  std::optional<double> lr0, gamma, step_fraction, momentum, weight_decay;
  std::optional<std::size_t> batch, max_epochs, snapshot_window, patience, workers;
  std::optional<std::uint64_t> seed;
  std::optional<bool> early_stop;
};

TrainConfig resolve_train_config(const TrainArgs& a) {
  KeyValueConfig kv = a.train_config.empty() ? KeyValueConfig() : KeyValueConfig::load(a.train_config);
  auto put_d = [&](const char* k, const std::optional<double>& v) {
    if (v) kv.set(k, format_double(*v));
  };
  auto put_u = [&](const char* k, const auto& v) {
    if (v) kv.set(k, std::to_string(*v));
  };
  put_d("lr0", a.lr0);
  put_d("gamma", a.gamma);
  put_d("step_fraction", a.step_fraction);
  put_d("momentum", a.momentum);
  put_d("weight_decay", a.weight_decay);
  put_u("batch", a.batch);
  put_u("max_epochs", a.max_epochs);
  put_u("snapshot_window", a.snapshot_window);
  put_u("patience", a.patience);
  put_u("workers", a.workers);
  put_u("seed", a.seed);
  if (a.early_stop) kv.set("early_stop", *a.early_stop ? "true" : "false");
  return TrainConfig::from_kv(kv);
}

int run_train(const TrainArgs& a) {
  const TrainConfig cfg = resolve_train_config(a);
  const YedroudjConfig net_cfg =
      a.net_config.empty() ? YedroudjConfig{} : YedroudjConfig::from_kv(KeyValueConfig::load(a.net_config));
  net_cfg.validate();
  banner("train", "manifest = " + a.manifest + "\nout_dir = " + a.out_dir + "\n[train]\n" + cfg.to_text() +
                      "[network]\n" + net_cfg.to_text());

  const DatasetManifest m = DatasetManifest::load(a.manifest);
  const PairSet train_set = load_split(m, Split::train);
  const PairSet val_set = load_split(m, Split::val);
  std::cerr << "train pairs " << train_set.size() << ", val pairs " << val_set.size() << "\n";

  fs::create_directories(a.out_dir);
  const fs::path out(a.out_dir);
  write_text(out / "train_config.txt", cfg.to_text());
  write_text(out / "net_config.txt", net_cfg.to_text());

  NetworkGraph net = build_yedroudj(net_cfg);
  net.init_xavier(cfg.seed);

  std::ofstream metrics(out / "metrics.jsonl", std::ios::binary);
  std::ofstream timing(out / "timing.jsonl", std::ios::binary);
  if (!metrics || !timing) throw DataError("cannot write logs under " + out.string());
  const TrainResult r = train(net, train_set, val_set, cfg, [&](const MetricsRecord& rec) {
    metrics << rec.to_json() << '\n' << std::flush;
    timing << rec.timing_json() << '\n' << std::flush;
    std::cerr << "epoch " << rec.epoch << " lr " << rec.lr << " train_loss " << rec.train_loss << " val_loss "
              << rec.val_loss << " val_acc " << rec.val_accuracy << "\n";
  });

  write_checkpoint_file(r.final_net, (out / "final.ynet").string());
  write_checkpoint_file(r.snapshot_min, (out / "snapshot_min.ynet").string());
  write_checkpoint_file(r.snapshot_max, (out / "snapshot_max.ynet").string());
  std::cerr << "snapshots: min val loss at epoch " << r.snapshot_min_epoch << ", max at epoch "
            << r.snapshot_max_epoch << (r.early_stopped ? " (early stop)" : "") << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string manifest;
  std::vector<std::string> checkpoints;
  std::string split = "test";
  std::size_t workers = 1;
};

int run_eval(const EvalArgs& a) {
  std::string text = "manifest = " + a.manifest + "\nsplit = " + a.split + "\nworkers = " +
                     std::to_string(a.workers) + "\n";
  for (const auto& c : a.checkpoints) text += "checkpoint = " + c + "\n";
  banner("eval", text);
  set_num_threads(static_cast<int>(a.workers));
  const Split split = parse_split(a.split);
  const PairSet test = load_split(DatasetManifest::load(a.manifest), split);
  std::vector<NetworkGraph> nets;
  for (const auto& c : a.checkpoints) nets.push_back(read_checkpoint_file(c));
  std::cout << evaluate(nets, test).to_json() << "\n";
  return kExitOk;
}

struct GradcheckArgs {
  double tol = 1e-4;
  std::uint64_t seed = 7;
};

int run_gradcheck(const GradcheckArgs& a) {
  GradCheckOptions opt;
  opt.tol = a.tol;
  banner("gradcheck", "tol = " + format_double(opt.tol) + "\nstep = " + format_double(opt.step) +
                          "\nrel_floor = " + format_double(opt.rel_floor) + "\nseed = " + std::to_string(a.seed) +
                          "\n");
  bool ok = true;
  for (const auto& r : run_gradcheck_suite(opt, a.seed)) {
    std::cout << format_report(r) << "\n";
    ok = ok && r.pass();
  }
  std::cout << (ok ? "gradcheck: all layers pass" : "gradcheck: FAILED") << "\n";
  return ok ? kExitOk : kExitNumeric;
}

struct ExportArgs {
  std::string out;
};

int run_export(const ExportArgs& a) {
  banner("export-filters", "out = " + a.out + "\n");
  write_text(a.out, export_filter_text(build_filter_bank()));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Yedroudj-Net steganalysis toolkit"};
  app.require_subcommand(1);
  app.fallthrough(false);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write synthetic textured cover images");
  c_synth->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  c_synth->add_option("--count", synth.count, "Number of images")->required()->check(CLI::PositiveNumber);
  c_synth->add_option("--size", synth.size, "Image side in pixels")->check(CLI::Range(32, 1 << 14));
  c_synth->add_option("--seed", synth.seed, "Seed");

  EmbedArgs embed;
  auto* c_embed = app.add_subcommand("embed", "LSB-matching simulator over a cover directory; writes a manifest");
  c_embed->add_option("--cover-dir", embed.cover_dir, "Directory of cover .pgm files")->required();
  c_embed->add_option("--out-dir", embed.out_dir, "Stego output directory")->required();
  c_embed->add_option("--bpp", embed.bpp, "Payload in bits per pixel")->required();
  c_embed->add_option("--seed", embed.seed, "Seed");
  c_embed->add_option("--source", embed.source, "Source tag written to the manifest");

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Assign train/val/test splits");
  c_split->add_option("--manifest", split.manifest, "Manifest CSV")->required();
  c_split->add_option("--out", split.out, "Output manifest (default: rewrite in place)");
  c_split->add_option("--seed", split.seed, "Seed");
  c_split->add_option("--train-pairs", split.train_pairs, "Training pairs");
  c_split->add_option("--val-pairs", split.val_pairs, "Validation pairs");
  c_split->add_option("--train-only-source", split.train_only, "Source tag whose pairs all go to train");

  AugmentArgs augment;
  auto* c_aug = app.add_subcommand("augment", "Materialize the 8 dihedral transforms of the train split");
  c_aug->add_option("--manifest", augment.manifest, "Manifest CSV")->required();
  c_aug->add_option("--out-dir", augment.out_dir, "Output directory")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the network");
  c_train->add_option("--manifest", tr.manifest, "Manifest CSV with train and val splits")->required();
  c_train->add_option("--net-config", tr.net_config, "Network config file");
  c_train->add_option("--train-config", tr.train_config, "Train config file");
  c_train->add_option("--out-dir", tr.out_dir, "Output directory")->required();
  c_train->add_option("--lr0", tr.lr0, "Initial learning rate");
  c_train->add_option("--gamma", tr.gamma, "Step decay factor");
  c_train->add_option("--step-fraction", tr.step_fraction, "Fraction of max epochs per lr step");
  c_train->add_option("--momentum", tr.momentum, "SGD momentum");
  c_train->add_option("--weight-decay", tr.weight_decay, "Weight decay");
  c_train->add_option("--batch", tr.batch, "Batch size (even)");
  c_train->add_option("--max-epochs", tr.max_epochs, "Number of epochs");
  c_train->add_option("--seed", tr.seed, "Seed");
  c_train->add_option("--snapshot-window", tr.snapshot_window, "Trailing epochs considered for snapshots");
  c_train->add_option("--early-stop", tr.early_stop, "Stop when val loss stalls (true/false)");
  c_train->add_option("--patience", tr.patience, "Early-stop patience in epochs");
  c_train->add_option("--workers", tr.workers, "Worker threads");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate checkpoints; prints JSON");
  c_eval->add_option("--manifest", ev.manifest, "Manifest CSV")->required();
  c_eval->add_option("--checkpoint", ev.checkpoints, "Checkpoint file (repeatable)")->required();
  c_eval->add_option("--split", ev.split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  c_eval->add_option("--workers", ev.workers, "Worker threads")->check(CLI::PositiveNumber);

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  c_gc->add_option("--tol", gc.tol, "Relative tolerance");
  c_gc->add_option("--seed", gc.seed, "Seed");

  ExportArgs ex;
  auto* c_ex = app.add_subcommand("export-filters", "Dump the fixed filter bank");
  c_ex->add_option("--out", ex.out, "Output text file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands({})) {
      if (sub->parsed()) target = sub;
    }
    std::cerr << target->help();
    return kExitUsage;
  }

  try {
    if (c_synth->parsed()) return run_synth(synth);
    if (c_embed->parsed()) return run_embed(embed);
    if (c_split->parsed()) return run_split(split);
    if (c_aug->parsed()) return run_augment(augment);
    if (c_train->parsed()) return run_train(tr);
    if (c_eval->parsed()) return run_eval(ev);
    if (c_gc->parsed()) return run_gradcheck(gc);
    if (c_ex->parsed()) return run_export(ex);
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
