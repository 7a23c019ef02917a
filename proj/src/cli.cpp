#include "pllm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pllm/config.hpp"
#include "pllm/curriculum.hpp"
#include "pllm/instruct.hpp"
#include "pllm/io_util.hpp"
#include "pllm/rng.hpp"
#include "pllm/signal.hpp"

namespace pllm {

namespace {

constexpr u64 kModalItemStream = 0x6974656dULL;

void require_writable(const std::string& marker_path, bool force) {
  if (file_exists(marker_path) && !force)
    throw std::runtime_error("refusing to overwrite existing output " + marker_path +
                             " (pass --force to replace it)");
}

std::string zero_pad(i64 v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

u64 split_stream_tag(Split s) {
  switch (s) {
    case Split::train: return 0x747261696eULL;
    case Split::val: return 0x76616cULL;
    case Split::test: return 0x74657374ULL;
  }
  return 0;
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string task = "text_repeat";
  i64 size = 0;
  u64 seed = 0;
  std::string split = "train";
  std::string out;
  bool force = false;
  // text_repeat
  int n_min = 2, n_max = 20;
  bool holdout = false;
  int pool_limit = 0;
  // modal tasks
  int frames = 20;
  int channels = 4;
  i64 count_min = 2, count_max = 20;
  i64 rate_min = 40, rate_max = 180;
  double noise = 0.05;
};

int cmd_gen_data(const GenDataArgs& a) {
  const auto task = task_from_string(a.task);
  if (!task) throw std::runtime_error("unknown task: " + a.task);
  const auto split = split_from_string(a.split);
  if (!split) throw std::runtime_error("unknown split: " + a.split);
  if (a.size < 1) throw std::runtime_error("--size must be >= 1");

  ensure_dir(a.out);
  const std::string corpus_path = join_path(a.out, "corpus.jsonl");
  require_writable(corpus_path, a.force);

  std::vector<QAPair> pairs;
  if (*task == Task::text_repeat) {
    TextRepeatOptions opts;
    opts.n_min = a.n_min;
    opts.n_max = a.n_max;
    opts.split = *split;
    opts.holdout = a.holdout;
    opts.pool_limit = a.pool_limit;
    pairs = gen_text_repeat_qa(a.seed, a.size, opts);
  } else {
    if (a.count_min < 0 || a.count_min > a.count_max)
      throw std::runtime_error("--count-min/--count-max range is invalid");
    if (a.rate_min < 1 || a.rate_min > a.rate_max)
      throw std::runtime_error("--rate-min/--rate-max range is invalid");
    ensure_dir(join_path(a.out, "seq"));
    for (i64 i = 0; i < a.size; ++i) {
      Rng rng(Rng::mix(a.seed, split_stream_tag(*split), Rng::mix(kModalItemStream, static_cast<u64>(i))));
      SequenceConfig sc;
      sc.length = a.frames;
      sc.channels = a.channels;
      sc.noise_sigma = a.noise;
      sc.seed = rng.next_u64();
      if (*task == Task::macro_count) {
        const i64 n = rng.next_int(a.count_min, a.count_max);
        const double duration = static_cast<double>(a.frames) * 0.5;
        sc.dt_s = 0.5;
        sc.period_s = n == 0 ? duration * 2.0 : duration / static_cast<double>(n);
        sc.amplitude = 0.8 + 0.4 * rng.next_unit();
        sc.semantic_amp = 0.3;
        sc.semantic = SemanticKind::random_walk;
        sc.waveform = rng.next_bool() ? Waveform::square : Waveform::triangle;
      } else {
        const i64 bpm = rng.next_int(a.rate_min, a.rate_max);
        sc.dt_s = 0.2;
        sc.period_s = 60.0 / static_cast<double>(bpm);
        sc.amplitude = 0.1;
        sc.semantic_amp = 1.0;
        sc.semantic = rng.next_bool() ? SemanticKind::linear_drift : SemanticKind::random_walk;
        sc.drift_slope = 0.25 * (rng.next_unit() - 0.5);
        sc.waveform = Waveform::cosine;
      }
      const PeriodicSequence seq = generate_sequence(sc);
      const std::string rel = std::string("seq/") + to_string(*split) + "_" + zero_pad(i, 8) + ".pseq";
      save_sequence(seq, join_path(a.out, rel));
      const GroundTruth truth = derive_ground_truth(seq);
      QAPair p = gen_modal_qa(join_path(a.out, rel), truth, *task,
                              Rng::mix(a.seed, split_stream_tag(*split), static_cast<u64>(i)));
      p.modality_ref = rel;  // keep the corpus relocatable
      p.id = std::string(to_string(*task)) + ":" + to_string(*split) + ":" + zero_pad(i, 8);
      pairs.push_back(std::move(p));
    }
  }

  write_jsonl(pairs, corpus_path);
  CorpusManifest manifest;
  manifest.task = *task;
  manifest.size = a.size;
  manifest.seed = a.seed;
  manifest.split = *split;
  manifest.word_pool_version = word_pool_version();
  write_text_file(join_path(a.out, "manifest.json"), manifest.to_json() + "\n");
  std::cout << "wrote " << pairs.size() << " pairs to " << corpus_path << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(const std::string& config_path, const std::optional<std::string>& out_override,
              const std::optional<u64>& seed_override, bool force, bool resume) {
  TrainRunConfig cfg = parse_train_config_file(config_path);
  if (out_override) cfg.out_dir = *out_override;
  if (seed_override) cfg.seed = *seed_override;
  if (cfg.out_dir.empty()) throw std::runtime_error("no output directory (config 'out' or --out)");
  if (cfg.stages.empty()) throw std::runtime_error("config declares no stages");

  ensure_dir(cfg.out_dir);
  const std::string loss_path = join_path(cfg.out_dir, "loss.csv");
  if (!resume) require_writable(loss_path, force);

  // Echo first so a run is reproducible from its own artifacts.
  write_text_file(join_path(cfg.out_dir, "config_echo.cfg"), cfg.echo());

  std::vector<std::string> corpus_texts;
  for (const auto& stage : cfg.stages) {
    for (const auto& pair : read_jsonl(stage.corpus)) {
      corpus_texts.push_back(pair.question);
      corpus_texts.push_back(pair.answer);
    }
  }
  Model model;
  model.vocab = Vocab::build(corpus_texts);
  cfg.model.vocab = model.vocab.size();
  model.params = init_params(cfg.model, cfg.seed);

  TrainOptions opts;
  opts.seed = cfg.seed;
  opts.optim = cfg.optim;
  opts.grad_accum = cfg.grad_accum;
  opts.replay = cfg.replay;
  opts.run_dir = cfg.out_dir;
  opts.max_new = cfg.max_new;
  opts.checkpoint_every = cfg.checkpoint_every;
  opts.dump_rlo_weights = cfg.dump_rlo_weights;
  opts.resume = resume;

  auto [trained, log] = run_curriculum(cfg.stages, std::move(model), opts);
  log.config_echo = cfg.echo();

  log.write_loss_csv(loss_path);
  write_text_file(join_path(cfg.out_dir, "summary.json"), log.summary_json() + "\n");
  std::cout << "trained " << log.losses.size() << " iterations; artifacts under " << cfg.out_dir
            << "\n";
  return 0;
}

// -------------------------------------------------------------------- eval

int cmd_eval(const std::string& checkpoint, const std::string& corpus, const std::string& task_name,
             const std::string& out, int max_new, bool force, bool dump_extractions) {
  const auto task = task_from_string(task_name);
  if (!task) throw std::runtime_error("unknown task: " + task_name);
  ensure_dir(out);
  const std::string report_path = join_path(out, "report.json");
  require_writable(report_path, force);

  const Model model = load_model(checkpoint);
  const EvalDetail detail = evaluate_detail(model, corpus, *task, max_new);

  write_text_file(report_path, detail.report.to_json() + "\n");
  write_text_file(join_path(out, "report.csv"),
                  EvalReport::csv_header() + ",exact_match_rate\n" + detail.report.to_csv_row() +
                      "," + format_double(detail.exact_match_rate) + "\n");
  if (dump_extractions) {
    std::string csv = "id,text,span_begin,span_end,value\n";
    for (const auto& item : detail.items) {
      const Extraction e = extract_number(item.generated);
      std::string quoted = item.generated;
      std::replace(quoted.begin(), quoted.end(), '"', '\'');
      csv += item.id + ",\"" + quoted + "\"," + std::to_string(e.span_begin) + "," +
             std::to_string(e.span_end) + "," + (e.value ? std::to_string(*e.value) : "") + "\n";
    }
    write_text_file(join_path(out, "extractions.csv"), csv);
  }
  std::cout << "evaluated " << detail.items.size() << " items; report at " << report_path << "\n";
  return 0;
}

// ------------------------------------------------------------------ ablate

struct AblateCell {
  std::string setting;
  std::string value;
  RloConfig rlo;
};

int cmd_ablate(const std::string& config_path, const std::string& beta_grid,
               const std::string& threshold_grid, const std::string& seed_list,
               const std::string& out, bool force) {
  TrainRunConfig base = parse_train_config_file(config_path);
  if (base.stages.size() < 2)
    throw std::runtime_error("ablate needs a config with at least two stages (A then B)");

  std::vector<AblateCell> cells;
  auto split_csv = [](const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
    return out;
  };
  for (const auto& b : split_csv(beta_grid)) {
    AblateCell cell{"beta", b, base.rlo};
    cell.rlo.enabled = true;
    cell.rlo.beta = std::stod(b);
    cells.push_back(cell);
  }
  for (const auto& t : split_csv(threshold_grid)) {
    const auto mode = threshold_mode_from_string(t);
    if (!mode) throw std::runtime_error("unknown threshold mode in grid: " + t);
    AblateCell cell{"threshold", t, base.rlo};
    cell.rlo.enabled = true;
    cell.rlo.threshold_mode = *mode;
    cells.push_back(cell);
  }
  if (cells.empty()) throw std::runtime_error("empty ablation grid");

  std::vector<u64> seeds;
  for (const auto& s : split_csv(seed_list)) seeds.push_back(std::stoull(s));
  if (seeds.empty()) seeds.push_back(base.seed);

  ensure_dir(out);
  const std::string table_path = join_path(out, "table.csv");
  require_writable(table_path, force);

  // Shared vocabulary across cells so every run sees the same model shape.
  std::vector<std::string> corpus_texts;
  for (const auto& stage : base.stages)
    for (const auto& pair : read_jsonl(stage.corpus)) {
      corpus_texts.push_back(pair.question);
      corpus_texts.push_back(pair.answer);
    }
  const Vocab vocab = Vocab::build(corpus_texts);

  std::string detail_csv = "setting,value,seed,mae_after_b,retention_delta,error\n";
  std::string table_csv = "setting,value,mae\n";
  const std::string stage_a = base.stages.front().name;
  const std::string stage_b = base.stages[1].name;

  for (const auto& cell : cells) {
    double mae_sum = 0.0;
    i64 mae_count = 0;
    for (const u64 seed : seeds) {
      std::string error;
      std::optional<double> mae_after_b, delta;
      try {
        auto stages = base.stages;
        for (auto& s : stages) s.rlo = cell.rlo;
        ModelConfig mc = base.model;
        mc.vocab = vocab.size();
        Model model{vocab, init_params(mc, seed)};
        TrainOptions opts;
        opts.seed = seed;
        opts.optim = base.optim;
        opts.grad_accum = base.grad_accum;
        opts.max_new = base.max_new;
        auto [trained, log] = run_curriculum(stages, std::move(model), opts);
        delta = retention_delta(log, stage_a, stage_b);
        for (const auto& e : log.evals)
          if (e.stage == stage_b && e.report.mae &&
              std::any_of(log.evals.begin(), log.evals.end(), [&](const StageEval& x) {
                return x.stage == stage_a && x.corpus_name == e.corpus_name;
              })) {
            mae_after_b = e.report.mae;
            break;
          }
      } catch (const std::exception& e) {
        error = e.what();
      }
      detail_csv += cell.setting + "," + cell.value + "," + std::to_string(seed) + "," +
                    (mae_after_b ? format_double(*mae_after_b) : "") + "," +
                    (delta ? format_double(*delta) : "") + ",\"" + error + "\"\n";
      if (mae_after_b) {
        mae_sum += *mae_after_b;
        ++mae_count;
      }
    }
    table_csv += cell.setting + "," + cell.value + "," +
                 (mae_count > 0 ? format_double(mae_sum / static_cast<double>(mae_count)) : "") +
                 "\n";
  }

  write_text_file(table_path, table_csv);
  write_text_file(join_path(out, "detail.csv"), detail_csv);
  std::cout << "ablation table at " << table_path << "\n";
  return 0;
}

// -------------------------------------------------------------------- plot

struct RunCurve {
  std::string label;
  std::vector<double> losses;
};

RunCurve load_loss_csv(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw std::runtime_error("--run expects label:loss.csv, got '" + spec + "'");
  RunCurve curve;
  curve.label = spec.substr(0, colon);
  const std::string path = spec.substr(colon + 1);
  std::istringstream in(read_text_file(path));
  std::string line;
  bool header = true;
  i64 line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (header) { header = false; continue; }
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed loss row");
    curve.losses.push_back(std::strtod(line.c_str() + c2 + 1, nullptr));
  }
  if (curve.losses.empty()) throw std::runtime_error(path + ": no loss rows");
  return curve;
}

std::string render_svg(const std::vector<RunCurve>& curves, i64 window) {
  constexpr int kW = 860, kH = 520, kMargin = 60;
  static const char* kColors[] = {"#1b6ca8", "#d1495b", "#2e933c", "#8a4fff", "#e07a1f", "#444"};

  double y_max = 0.0;
  size_t x_max = 0;
  std::vector<std::vector<double>> smoothed;
  for (const auto& c : curves) {
    smoothed.push_back(smooth_losses(c.losses, window));
    x_max = std::max(x_max, c.losses.size());
    for (double v : smoothed.back()) y_max = std::max(y_max, v);
  }
  if (y_max <= 0.0) y_max = 1.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kW - kMargin / 2
      << "\" y2=\"" << kH - kMargin << "\" stroke=\"#333\"/>\n";
  svg << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kMargin
      << "\" y2=\"" << kMargin / 2 << "\" stroke=\"#333\"/>\n";
  svg << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 15
      << "\" font-size=\"14\" text-anchor=\"middle\">iteration</text>\n";
  svg << "<text x=\"18\" y=\"" << kH / 2
      << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << kH / 2
      << ")\">smoothed loss</text>\n";

  const double plot_w = kW - 1.5 * kMargin;
  const double plot_h = kH - 1.5 * kMargin;
  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& s = smoothed[ci];
    std::ostringstream pts;
    for (size_t i = 0; i < s.size(); ++i) {
      const double x = kMargin + plot_w * static_cast<double>(i) /
                                      std::max<double>(1.0, static_cast<double>(x_max - 1));
      const double y = (kH - kMargin) - plot_h * (s[i] / y_max);
      pts << (i ? " " : "") << x << "," << y;
    }
    const char* color = kColors[ci % (sizeof(kColors) / sizeof(kColors[0]))];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
        << pts.str() << "\"/>\n";
    svg << "<text x=\"" << kW - kMargin / 2 - 150 << "\" y=\"" << kMargin / 2 + 18 * ci
        << "\" font-size=\"13\" fill=\"" << color << "\">" << curves[ci].label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

int cmd_plot(const std::vector<std::string>& run_specs, i64 window, const std::string& out,
             bool force) {
  if (run_specs.empty()) throw std::runtime_error("plot needs at least one --run label:loss.csv");
  if (window < 1) throw std::runtime_error("--window must be >= 1");
  ensure_dir(out);
  const std::string merged_path = join_path(out, "merged.csv");
  require_writable(merged_path, force);

  std::vector<RunCurve> curves;
  for (const auto& spec : run_specs) curves.push_back(load_loss_csv(spec));

  size_t common = curves.front().losses.size();
  for (const auto& c : curves) common = std::min(common, c.losses.size());
  for (auto& c : curves) {
    if (c.losses.size() != common) {
      std::cerr << "warning: truncating run '" << c.label << "' from " << c.losses.size() << " to "
                << common << " iterations to match the shortest run\n";
      c.losses.resize(common);
    }
  }

  std::string csv = "iter";
  for (const auto& c : curves) csv += "," + c.label;
  csv += "\n";
  std::vector<std::vector<double>> smoothed;
  for (const auto& c : curves) smoothed.push_back(smooth_losses(c.losses, window));
  for (size_t i = 0; i < common; ++i) {
    csv += std::to_string(i);
    for (const auto& s : smoothed) csv += "," + format_double(s[i]);
    csv += "\n";
  }
  write_text_file(merged_path, csv);
  write_text_file(join_path(out, "overlay.svg"), render_svg(curves, window));
  std::cout << "plot artifacts at " << out << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Desk-scale periodic-task training and evaluation pipeline"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a QA corpus (JSONL + manifest)");
  gen->add_option("--task", gd.task, "text_repeat|macro_count|micro_rate")->required();
  gen->add_option("--size", gd.size, "number of QA pairs")->required();
  gen->add_option("--seed", gd.seed, "corpus seed");
  gen->add_option("--split", gd.split, "train|val|test");
  gen->add_option("--out", gd.out, "output directory")->required();
  gen->add_flag("--force", gd.force, "overwrite existing outputs");
  gen->add_option("--n-min", gd.n_min, "minimum repetition count (text_repeat)");
  gen->add_option("--n-max", gd.n_max, "maximum repetition count (text_repeat)");
  gen->add_flag("--holdout", gd.holdout, "hold ~10% of the word pool out of train/val");
  gen->add_option("--pool-limit", gd.pool_limit, "restrict to the first N pool words");
  gen->add_option("--frames", gd.frames, "time steps per sequence (modal tasks)");
  gen->add_option("--channels", gd.channels, "signal channels (modal tasks)");
  gen->add_option("--count-min", gd.count_min, "minimum repetition count (macro_count)");
  gen->add_option("--count-max", gd.count_max, "maximum repetition count (macro_count)");
  gen->add_option("--rate-min", gd.rate_min, "minimum bpm (micro_rate)");
  gen->add_option("--rate-max", gd.rate_max, "maximum bpm (micro_rate)");
  gen->add_option("--noise", gd.noise, "gaussian noise sigma (modal tasks)");

  std::string train_config;
  std::string train_out;
  i64 train_seed = -1;
  bool train_force = false, train_resume = false;
  auto* train = app.add_subcommand("train", "Run the curriculum described by a config file");
  train->add_option("--config", train_config, "key=value run config")->required();
  train->add_option("--out", train_out, "override the config's output directory");
  train->add_option("--seed", train_seed, "override the config's seed");
  train->add_flag("--force", train_force, "overwrite existing outputs");
  train->add_flag("--resume", train_resume, "continue from out/latest.{pllm,ptrn}");

  std::string eval_ckpt, eval_corpus, eval_task, eval_out;
  int eval_max_new = 32;
  bool eval_force = false, eval_dump = false;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  ev->add_option("--checkpoint", eval_ckpt, "PLLM1 checkpoint path")->required();
  ev->add_option("--corpus", eval_corpus, "JSONL corpus path")->required();
  ev->add_option("--task", eval_task, "text_repeat|macro_count|micro_rate")->required();
  ev->add_option("--out", eval_out, "output directory")->required();
  ev->add_option("--max-new", eval_max_new, "decoding budget per answer");
  ev->add_flag("--force", eval_force, "overwrite existing outputs");
  ev->add_flag("--dump-extractions", eval_dump, "write (text, span, value) triples");

  std::string ab_config, ab_beta, ab_threshold, ab_seeds, ab_out;
  bool ab_force = false;
  auto* ab = app.add_subcommand("ablate", "Grid of paired-stage retention runs");
  ab->add_option("--config", ab_config, "two-stage run config")->required();
  ab->add_option("--beta-grid", ab_beta, "comma list of beta values");
  ab->add_option("--threshold-grid", ab_threshold, "comma list of threshold modes");
  ab->add_option("--seeds", ab_seeds, "comma list of seeds");
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_flag("--force", ab_force, "overwrite existing outputs");

  std::vector<std::string> plot_runs;
  i64 plot_window = 100;
  std::string plot_out;
  bool plot_force = false;
  auto* pl = app.add_subcommand("plot", "Merge and render loss curves");
  pl->add_option("--run", plot_runs, "label:loss.csv (repeatable)")->required();
  pl->add_option("--window", plot_window, "moving-average window");
  pl->add_option("--out", plot_out, "output directory")->required();
  pl->add_flag("--force", plot_force, "overwrite existing outputs");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gd);
    if (train->parsed())
      return cmd_train(train_config,
                       train_out.empty() ? std::nullopt : std::optional<std::string>(train_out),
                       train_seed < 0 ? std::nullopt : std::optional<u64>(static_cast<u64>(train_seed)),
                       train_force, train_resume);
    if (ev->parsed())
      return cmd_eval(eval_ckpt, eval_corpus, eval_task, eval_out, eval_max_new, eval_force,
                      eval_dump);
    if (ab->parsed()) return cmd_ablate(ab_config, ab_beta, ab_threshold, ab_seeds, ab_out, ab_force);
    if (pl->parsed()) return cmd_plot(plot_runs, plot_window, plot_out, plot_force);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace pllm
