#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>

#include "hicross/agent/scoring.hpp"
#include "hicross/cost/cost_model.hpp"
#include "hicross/gui/dataset.hpp"
#include "hicross/harness/checkpoint.hpp"
#include "hicross/harness/eval.hpp"
#include "hicross/harness/train.hpp"

namespace fs = std::filesystem;
using namespace hicross;

namespace {

constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();

std::vector<std::uint64_t> parse_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoull(item));
  if (out.empty()) throw std::invalid_argument("empty resolution list");
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

struct TrainArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t steps = 2000;
  std::size_t phase1 = kUnset;
  std::size_t warmup = kUnset;
  std::size_t batch = 16;
  double lr = 3e-3;
  std::string freeze = "staged";
  std::string stages;
  bool no_cross = false;
  std::string out = "run";
};

/// Flags first, then the config file on top. Stage starts, phase 1 and
/// warmup scale with the step count unless set explicitly.
harness::TrainConfig build_train_config(const TrainArgs& a) {
  harness::TrainConfig c;
  c.seed = a.seed;
  c.steps = a.steps;
  c.phase1 = a.phase1;
  c.warmup = a.warmup;
  c.batch = a.batch;
  c.lr = a.lr;
  c.freeze = harness::freeze_from_name(a.freeze);
  c.model.use_cross = !a.no_cross;
  c.stages.clear();
  if (!a.config.empty()) harness::apply_config_file(c, a.config);
  if (c.stages.empty()) c.stages = a.stages.empty() ? harness::default_curriculum(c.steps) : harness::parse_stages(a.stages);
  if (c.phase1 == kUnset) c.phase1 = 2 * c.steps / 5;
  if (c.warmup == kUnset) c.warmup = std::min<std::size_t>(100, c.steps / 20);
  c.model.seed = c.seed;
  c.validate();
  return c;
}

int run_train(const TrainArgs& a) {
  const auto c = build_train_config(a);
  decoder::Model<float> model(c.model);
  std::cerr << "training " << (c.model.use_cross ? "with" : "without") << " cross module: " << c.steps
            << " steps, phase 1 until " << c.phase1 << ", freeze " << harness::freeze_name(c.freeze) << "\n";
  const auto rec = harness::train(model, c);
  for (const auto& s : rec.log)
    if (s.step % c.log_every == 0 || s.step + 1 == c.steps)
      std::cerr << "step " << s.step << " [" << s.stage << "] loss " << s.loss << " lr " << s.lr << "\n";
  const fs::path out(a.out);
  fs::create_directories(out);
  harness::write_checkpoint(model, (out / "checkpoint.bin").string());
  write_text(out / "log.csv", rec.csv());
  std::cout << "trainable_phase1 " << rec.trainable_phase1 << "\ntrainable_phase2 " << rec.trainable_phase2
            << "\nfinal_loss " << std::setprecision(6) << rec.log.back().loss << "\nwall_seconds " << rec.wall_seconds
            << "\ncheckpoint " << (out / "checkpoint.bin").string() << "\nhash "
            << harness::file_hash((out / "checkpoint.bin").string()) << "\n";
  return 0;
}

int run_flops(const std::string& resolutions, std::uint64_t lt, const std::string& out) {
  const auto spec = cost::ModelSpec::full_scale();
  const auto rows = cost::sweep(spec, parse_list(resolutions), lt);
  const std::string csv = cost::sweep_csv(rows);
  std::cout << csv;
  if (!out.empty()) {
    fs::path p(out);
    write_text(p, csv);
    write_text(fs::path(p).replace_extension(".svg"), cost::sweep_svg(rows));
  }
  const auto pr = cost::param_count(spec);
  std::cout << "params_total " << pr.total() << "\nparams_phase1 " << pr.phase1_trainable() << "\nphase1_fraction "
            << pr.phase1_fraction() << "\n";
  return 0;
}

int run_score(const std::string& protocol, const std::string& file, bool verbose) {
  agent::ScoreReport r;
  if (protocol == "mind2web") r = agent::step_sr(agent::load_web_steps(file));
  else if (protocol == "aitw") r = agent::matching_score(agent::load_aitw_steps(file));
  else throw std::invalid_argument("unknown protocol '" + protocol + "', expected mind2web or aitw");
  if (verbose) std::cerr << r.csv();
  std::cout << r.rate() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hicross: desk-scale high-resolution cross-module toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Render a synthetic dataset to disk");
  gui::GenDataOptions gd;
  gen->add_option("--task", gd.task, "ocr, rec or reg")->capture_default_str();
  gen->add_option("--count", gd.count, "number of screens")->capture_default_str();
  gen->add_option("--seed", gd.seed)->capture_default_str();
  gen->add_option("--resolution", gd.resolution, "square side, 0 for the task default")->capture_default_str();
  gen->add_option("--out", gd.out)->capture_default_str();

  auto* tr = app.add_subcommand("train", "Train the desk model");
  TrainArgs ta;
  tr->add_option("--config", ta.config, "key=value file applied over the flags");
  tr->add_option("--seed", ta.seed)->capture_default_str();
  tr->add_option("--steps", ta.steps)->capture_default_str();
  tr->add_option("--phase1", ta.phase1, "phase-1 steps (default 40% of steps)");
  tr->add_option("--warmup", ta.warmup, "warmup steps (default min(100, 5% of steps))");
  tr->add_option("--batch", ta.batch)->capture_default_str();
  tr->add_option("--lr", ta.lr)->capture_default_str();
  tr->add_option("--freeze", ta.freeze, "staged or none")->capture_default_str();
  tr->add_option("--stages", ta.stages, "name@start:w0,w1,w2,w3;...");
  tr->add_flag("--no-cross", ta.no_cross, "drop the high-resolution branch");
  tr->add_option("--out", ta.out, "output directory")->capture_default_str();

  auto* et = app.add_subcommand("eval-text", "Character accuracy on held-out OCR screens");
  std::string et_ckpt, et_set = "hard";
  std::size_t et_n = 200;
  std::uint64_t et_seed = 0;
  et->add_option("--checkpoint", et_ckpt)->required();
  et->add_option("--set", et_set, "hard or easy")->capture_default_str();
  et->add_option("--n", et_n)->capture_default_str();
  et->add_option("--seed", et_seed)->capture_default_str();

  auto* er = app.add_subcommand("eval-rec", "Box accuracy on REC questions");
  std::string er_ckpt;
  bool er_oracle = false, er_random = false;
  std::size_t er_n = 200;
  std::uint64_t er_seed = 0;
  er->add_option("--checkpoint", er_ckpt);
  er->add_flag("--oracle", er_oracle, "echo the gold answer");
  er->add_flag("--random", er_random, "uniform random boxes");
  er->add_option("--n", er_n)->capture_default_str();
  er->add_option("--seed", er_seed)->capture_default_str();

  auto* fl = app.add_subcommand("flops", "FLOPs sweep at full scale");
  std::string fl_res = "224,490,756,1120", fl_out;
  std::uint64_t fl_lt = 512;
  fl->add_option("--resolutions", fl_res)->capture_default_str();
  fl->add_option("--lt", fl_lt, "text tokens")->capture_default_str();
  fl->add_option("--out", fl_out, "CSV path; an .svg plot is written next to it");

  auto* sc = app.add_subcommand("score", "Score agent predictions");
  std::string sc_protocol, sc_file;
  bool sc_verbose = false;
  sc->add_option("--protocol", sc_protocol, "mind2web or aitw")->required();
  sc->add_option("file", sc_file, "JSONL episode file")->required();
  sc->add_flag("-v,--verbose", sc_verbose, "per-subset table on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen) {
      const auto samples = gui::generate_dataset(gd);
      std::cout << samples.size() << " samples written to " << (fs::path(gd.out) / "data.jsonl").string() << "\n";
    } else if (*tr) {
      return run_train(ta);
    } else if (*et) {
      const auto model = harness::read_checkpoint<float>(et_ckpt);
      const auto spec = et_set == "hard"   ? harness::hard_ocr_spec()
                        : et_set == "easy" ? harness::easy_ocr_spec()
                                           : throw std::invalid_argument("unknown eval set '" + et_set + "'");
      const auto r = harness::eval_text(model, harness::ocr_testset(spec, et_n, et_seed));
      std::cout << "char_accuracy " << r.char_accuracy << "\nexact_match " << r.exact_match << "\nsamples " << r.samples
                << "\n";
    } else if (*er) {
      if (er_oracle + er_random + !er_ckpt.empty() != 1)
        throw std::invalid_argument("eval-rec needs exactly one of --checkpoint, --oracle, --random");
      const auto items = harness::rec_testset(er_n, er_seed);
      harness::RecEvalResult r;
      if (er_oracle) r = harness::eval_rec(harness::oracle_predictor(), items);
      else if (er_random) r = harness::eval_rec(harness::random_box_predictor(er_seed), items);
      else {
        const auto model = harness::read_checkpoint<float>(er_ckpt);
        r = harness::eval_rec(harness::model_predictor(model), items);
      }
      std::cout << "accuracy " << r.accuracy << "\nunparsable " << r.unparsable << "\nsamples " << r.samples << "\n";
    } else if (*fl) {
      return run_flops(fl_res, fl_lt, fl_out);
    } else if (*sc) {
      return run_score(sc_protocol, sc_file, sc_verbose);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
