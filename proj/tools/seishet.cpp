#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "seishet/checkpoint.hpp"
#include "seishet/dataset.hpp"
#include "seishet/metrics.hpp"
#include "seishet/segy.hpp"
#include "seishet/tiling.hpp"
#include "seishet/train.hpp"

namespace fs = std::filesystem;
using namespace seishet;

namespace {

inline constexpr const char* kPublishedParameterCount = "92,827";

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  const char* env = std::getenv("SEISHET_SEED");
  if (!env || !*env) return 0;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || *end != '\0' || env[0] == '-') {
    throw ConfigError("SEISHET_SEED must be a non-negative integer, got '" + std::string(env) + "'");
  }
  return v;
}

struct SegySource {
  fs::path path;
  std::string axis = "inline";
  std::size_t inline_byte = 189, crossline_byte = 193;

  void add(CLI::App* cmd) {
    cmd->add_option("--axis", axis, "Line axis")->check(CLI::IsMember({"inline", "crossline"}))->capture_default_str();
    cmd->add_option("--inline-byte", inline_byte, "Trace-header byte of the inline number")->capture_default_str();
    cmd->add_option("--crossline-byte", crossline_byte, "Trace-header byte of the crossline number")
        ->capture_default_str();
  }
  SegyVolume open() const { return open_volume(path, {inline_byte, crossline_byte}); }
};

struct TrainFlags {
  TrainConfig config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> count_limit;
  fs::path data, out, log;

  void add(CLI::App* cmd) {
    cmd->add_option("--out", out, "Checkpoint to write")->required();
    cmd->add_option("--log", log, "Training log (default: <out>.log)");
    cmd->add_option("--epochs", config.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--batch", config.batch_size, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--lr", config.learning_rate, "Adam learning rate")->capture_default_str();
    cmd->add_option("--split", config.split, "Training fraction of the dataset")->capture_default_str();
    cmd->add_option("--positive-weight", config.positive_weight, "Cross-entropy weight of heterogeneity pixels")
        ->capture_default_str();
    cmd->add_option("--count-limit", count_limit, "Use only the first N samples of the dataset")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Master seed (falls back to SEISHET_SEED, then 0)");
  }
};

// Runs the loop, echoing each epoch to stdout and the log file.
TrainResult run_training(Network<float> net, const std::vector<Sample>& samples, TrainFlags& f) {
  f.config.seed = resolve_seed(f.seed);
  const fs::path log_path = f.log.empty() ? fs::path(f.out.string() + ".log") : f.log;
  std::ofstream log(log_path);
  if (!log) throw IoError("cannot open '" + log_path.string() + "' for writing");
  const auto result = train(std::move(net), samples, f.config, [&](const EpochLog& e) {
    const auto line = format_epoch(e);
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    log << line << '\n' << std::flush;
    return true;
  });
  if (!log) throw IoError("failed writing '" + log_path.string() + "'");
  save_checkpoint(result.model, f.out);
  const auto& last = result.log.back().metrics;
  std::printf("held-out iou %.6f precision %.6f recall %.6f f1 %.6f\n", last.iou, last.precision, last.recall,
              last.f1);
  std::printf("checkpoint %s\nlog %s\n", f.out.string().c_str(), log_path.string().c_str());
  return result;
}

std::vector<Sample> load_samples(const fs::path& dir, const std::optional<std::size_t>& limit) {
  auto ds = read_dataset(dir, limit);
  std::printf("loaded %zu samples from %s\n", ds.samples.size(), dir.string().c_str());
  return std::move(ds.samples);
}

struct GenFlags {
  SyntheticConfig config;
  std::optional<std::uint64_t> seed;
  fs::path out;
  bool export_sections = false;
};

void cmd_gen(GenFlags& f) {
  f.config.seed = resolve_seed(f.seed);
  f.config.validate();
  const auto samples = generate_dataset(f.config);
  write_dataset(samples, f.out,
                Json{{"seed", f.config.seed}, {"sections", f.config.count}, {"config", config_to_json(f.config)}});
  if (f.export_sections) {
    const fs::path dir = f.out / "sections";
    fs::create_directories(dir);
    for (std::size_t i = 0; i < f.config.count; ++i) {
      const auto s = generate_section(f.config, i);
      write_f32(dir / sample_file("section", i, "f32"), s.image.cast<float>());
      write_pgm(dir / sample_file("mask", i, "pgm"), mask_to_gray(s.mask));
    }
    std::printf("sections %zu x %zu written to %s\n", f.config.height, f.config.width, dir.string().c_str());
  }
  std::printf("samples %zu from %zu sections, seed %llu, written to %s\n", samples.size(), f.config.count,
              static_cast<unsigned long long>(f.config.seed), f.out.string().c_str());
}

struct TrainCmd {
  TrainFlags flags;
  std::string attention = "self";
};

void cmd_train(TrainCmd& c) {
  c.flags.config.validate();
  const auto samples = load_samples(c.flags.data, c.flags.count_limit);
  const auto variant = parse_variant(c.attention);
  std::printf("variant %s\n", std::string(variant_name(variant)).c_str());
  run_training(initial_network(variant, resolve_seed(c.flags.seed)), samples, c.flags);
}

struct FinetuneCmd {
  TrainFlags flags;
  fs::path model, masks;
  std::optional<std::string> attention;
  SegySource segy;
  std::vector<std::int64_t> lines;
  std::size_t window = 20, stride = 10;
};

void cmd_finetune(FinetuneCmd& c) {
  c.flags.config.validate();
  auto net = load_checkpoint(c.model);
  if (c.attention && parse_variant(*c.attention) != net.variant) {
    throw IntegrityError("'" + c.model.string() + "' holds the " + std::string(variant_name(net.variant)) +
                         " variant but --attention " + *c.attention + " was requested");
  }
  std::vector<Sample> samples;
  if (!c.flags.data.empty()) {
    samples = load_samples(c.flags.data, c.flags.count_limit);
  } else if (!c.segy.path.empty()) {
    const auto volume = c.segy.open();
    const auto axis = parse_axis(c.segy.axis);
    for (auto line : c.lines) {
      auto p = line_patches(volume, axis, line, c.masks, c.window, c.stride);
      std::printf("%s %lld: %zu patches\n", std::string(axis_name(axis)).c_str(), static_cast<long long>(line),
                  p.size());
      std::move(p.begin(), p.end(), std::back_inserter(samples));
    }
    if (c.flags.count_limit && samples.size() > *c.flags.count_limit) samples.resize(*c.flags.count_limit);
  } else {
    throw ConfigError("finetune needs --data or --segy");
  }
  freeze_prefix(net, c.flags.config.freeze_prefix);
  const auto infos = parameter_infos(net);
  std::size_t frozen = 0;
  for (std::size_t i = 0; i < infos.size(); ++i) {
    if (net.frozen[i]) {
      std::printf("frozen %s\n", infos[i].name.c_str());
      ++frozen;
    }
  }
  std::printf("%zu of %zu tensors frozen\n", frozen, infos.size());
  run_training(std::move(net), samples, c.flags);
}

struct PredictCmd {
  fs::path model, out, raw;
  std::string format = "pgm";
  std::size_t height = 0, width = 0;
  SegySource segy;
  std::optional<std::int64_t> line;
  std::size_t window = 20, stride = 10, batch = 32;
};

void cmd_predict(PredictCmd& c) {
  const auto net = load_checkpoint(c.model);
  const auto format = parse_map_format(c.format);
  Tensor<float> map;
  if (!c.raw.empty()) {
    if (c.height == 0 || c.width == 0) throw ConfigError("--raw needs --height and --width");
    map = tile_predict(net, read_f32(c.raw, {c.height, c.width}), c.window, c.stride, c.batch);
  } else if (!c.segy.path.empty()) {
    if (!c.line) throw ConfigError("--segy needs --line");
    const auto section = read_section(c.segy.open(), parse_axis(c.segy.axis), *c.line);
    map = tile_predict(net, section.amplitudes, c.window, c.stride, c.batch);
  } else {
    throw ConfigError("predict needs --raw or --segy");
  }
  export_map(map, c.out, format);
  std::printf("map %zu x %zu written to %s\n", map.dim(0), map.dim(1), c.out.string().c_str());
}

struct EvalCmd {
  std::vector<fs::path> pred, truth;
  fs::path model, data, json;
  std::optional<std::size_t> count_limit;
  double threshold = 0.5;
};

// Ground truth must be strictly 0/255 (PGM) or 0/1 (CSV).
Tensor<float> read_truth(const fs::path& path) {
  if (path.extension() == ".csv") return import_map(path);
  const auto g = read_pgm(path);
  Tensor<float> m({g.height, g.width});
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (g.pixels[i] != 0 && g.pixels[i] != 255) {
      throw LabelError("'" + path.string() + "': pixel " + std::to_string(i) + " is " +
                       std::to_string(g.pixels[i]) + ", masks hold only 0 and 255");
    }
    m[i] = g.pixels[i] ? 1.0f : 0.0f;
  }
  return m;
}

void cmd_eval(EvalCmd& c) {
  MetricsReport report;
  if (!c.model.empty()) {
    if (c.data.empty()) throw ConfigError("--model needs --data");
    const auto net = load_checkpoint(c.model);
    report = evaluate_samples(net, load_samples(c.data, c.count_limit), 32, c.threshold);
  } else {
    if (c.pred.empty()) throw ConfigError("eval needs --pred/--truth or --model/--data");
    if (c.pred.size() != c.truth.size()) {
      throw ConfigError(std::to_string(c.pred.size()) + " --pred maps but " + std::to_string(c.truth.size()) +
                        " --truth masks");
    }
    std::vector<Tensor<float>> preds, truths;
    for (std::size_t i = 0; i < c.pred.size(); ++i) {
      preds.push_back(threshold_probability(import_map(c.pred[i]), c.threshold));
      truths.push_back(read_truth(c.truth[i]));
    }
    report = evaluate_all(preds, truths);
  }
  const auto json = report_to_json(report).dump();
  std::printf("%s%s\n", format_report(report).c_str(), json.c_str());
  if (!c.json.empty()) write_text(c.json, json + "\n");
}

struct InfoCmd {
  fs::path model, diff;
};

void cmd_info(InfoCmd& c) {
  const auto net = load_checkpoint(c.model);
  if (!c.diff.empty()) {
    const auto other = load_checkpoint(c.diff);
    const auto a_info = parameter_infos(net), b_info = parameter_infos(other);
    const auto a = parameter_tensors(net), b = parameter_tensors(other);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      std::size_t j = 0;
      while (j < b_info.size() && b_info[j].name != a_info[i].name) ++j;
      const bool equal = j < b.size() && bit_equal(*a[i], *b[j]);
      if (!equal) ++changed;
      std::printf("%-8s %s\n", equal ? "equal" : "changed", a_info[i].name.c_str());
    }
    for (const auto& info : b_info) {
      bool present = false;
      for (const auto& x : a_info) present = present || x.name == info.name;
      if (!present) {
        ++changed;
        std::printf("%-8s %s\n", "added", info.name.c_str());
      }
    }
    if (changed == 0) {
      std::printf("all tensors equal\n");
    } else {
      std::printf("%zu tensors changed\n", changed);
    }
    return;
  }

  const auto cost = count_params_flops(net);
  const auto infos = parameter_infos(net);
  std::vector<std::size_t> frozen(kLayerCount, 0), tensors(kLayerCount, 0);
  for (std::size_t i = 0; i < infos.size(); ++i) {
    ++tensors[infos[i].layer];
    frozen[infos[i].layer] += net.frozen[i];
  }
  std::printf("variant %s\n\n", std::string(variant_name(net.variant)).c_str());
  std::printf("%-12s %9s %12s %-6s %s\n", "layer", "params", "MACs", "frozen", "shapes");
  for (std::size_t l = 0; l < cost.layers.size(); ++l) {
    const auto& s = cost.layers[l];
    const char* fz = frozen[l] == 0 ? "no" : frozen[l] == tensors[l] ? "yes" : "part";
    std::printf("%-12s %9zu %12zu %-6s %s\n", s.name.c_str(), s.params, s.macs, fz, s.shapes.c_str());
  }
  std::printf("\ntotal parameters %zu\n", cost.params);
  std::printf("FLOPs per patch %zu\n", cost.flops());
  std::printf("FLOP convention: %s\n", std::string(kFlopConvention).c_str());
  const std::size_t without_attention = cost.params - cost.layers[6].params;
  std::printf(
      "\nreference: the published network reports %s trainable parameters.\n"
      "The described layer widths (3x3 convolutions of 20/20/50/50/50/50 channels,\n"
      "transposed convolutions of 20 and 10 channels, 1x1 head) already need %zu\n"
      "parameters without the attention block, so the published total cannot be\n"
      "reproduced from the described layout. This table counts every tensor of\n"
      "the network as built.\n",
      kPublishedParameterCount, without_attention);
}

void report_error(const char* kind, const std::string& message) {
  std::fprintf(stderr, "seishet: error [%s]: %s\n", kind, message.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seismic structural-heterogeneity detection toolkit"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic patch dataset");
  g->add_option("--out", gen.out, "Dataset directory")->required();
  g->add_option("--count", gen.config.count, "Synthetic sections to generate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  g->add_option("--height", gen.config.height, "Section height in samples")->capture_default_str();
  g->add_option("--width", gen.config.width, "Section width in traces")->capture_default_str();
  g->add_option("--patch", gen.config.patch, "Patch size")->capture_default_str();
  g->add_option("--stride", gen.config.stride, "Patch stride")->capture_default_str();
  g->add_option("--dilation", gen.config.dilation, "Fault mask half-width in pixels")->capture_default_str();
  g->add_option("--seed", gen.seed, "Master seed (falls back to SEISHET_SEED, then 0)");
  g->add_flag("--export-sections", gen.export_sections,
              "Also write each full section (float32) and its mask (PGM) under sections/");

  TrainCmd tr;
  auto* t = app.add_subcommand("train", "Train a network on a dataset directory");
  t->add_option("--data", tr.flags.data, "Dataset directory")->required();
  t->add_option("--attention", tr.attention, "Attention block")
      ->check(CLI::IsMember({"self", "se"}))
      ->capture_default_str();
  tr.flags.add(t);

  FinetuneCmd ft;
  ft.flags.config = finetune_defaults();
  auto* f = app.add_subcommand("finetune", "Fine-tune a checkpoint with its first layers frozen");
  f->add_option("--model", ft.model, "Pretrained checkpoint")->required();
  auto* fdata = f->add_option("--data", ft.flags.data, "Dataset directory of real patches");
  auto* fsegy = f->add_option("--segy", ft.segy.path, "SEG-Y volume with annotated lines");
  fdata->excludes(fsegy);
  auto* flines = f->add_option("--lines", ft.lines, "Annotated line ids")->delimiter(',');
  auto* fmasks = f->add_option("--masks", ft.masks, "Directory of mask_<axis><id>.pgm annotations");
  fsegy->needs(flines)->needs(fmasks);
  f->add_option("--window", ft.window, "Real patch size before rescaling")->capture_default_str();
  f->add_option("--stride", ft.stride, "Real patch stride")->capture_default_str();
  f->add_option("--attention", ft.attention, "Expected attention block")->check(CLI::IsMember({"self", "se"}));
  f->add_option("--freeze-prefix", ft.flags.config.freeze_prefix, "Leading layers kept frozen")
      ->capture_default_str();
  ft.segy.add(f);
  ft.flags.add(f);

  PredictCmd pr;
  auto* p = app.add_subcommand("predict", "Confidence map of a section");
  p->add_option("--model", pr.model, "Checkpoint")->required();
  p->add_option("--out", pr.out, "Map file to write")->required();
  p->add_option("--format", pr.format, "Map format")->check(CLI::IsMember({"pgm", "csv"}))->capture_default_str();
  auto* praw = p->add_option("--raw", pr.raw, "Raw float32 section (row-major, samples x traces)");
  auto* psegy = p->add_option("--segy", pr.segy.path, "SEG-Y volume");
  praw->excludes(psegy);
  p->add_option("--height", pr.height, "Rows of the raw section");
  p->add_option("--width", pr.width, "Columns of the raw section");
  p->add_option("--line", pr.line, "Line id to read from the SEG-Y volume");
  p->add_option("--window", pr.window, "Window size before rescaling")->check(CLI::PositiveNumber)->capture_default_str();
  p->add_option("--stride", pr.stride, "Window stride")->check(CLI::PositiveNumber)->capture_default_str();
  p->add_option("--batch", pr.batch, "Windows per forward pass")->check(CLI::PositiveNumber)->capture_default_str();
  pr.segy.add(p);

  EvalCmd ev;
  auto* e = app.add_subcommand("eval", "Segmentation metrics");
  e->add_option("--pred", ev.pred, "Prediction maps (PGM or CSV)");
  e->add_option("--truth", ev.truth, "Ground-truth masks (PGM or CSV)");
  e->add_option("--model", ev.model, "Checkpoint to evaluate on --data");
  e->add_option("--data", ev.data, "Dataset directory");
  e->add_option("--count-limit", ev.count_limit, "Use only the first N samples")->check(CLI::PositiveNumber);
  e->add_option("--threshold", ev.threshold, "Probability threshold")->capture_default_str();
  e->add_option("--json", ev.json, "Also write the JSON report here");

  InfoCmd in;
  auto* i = app.add_subcommand("info", "Model summary or checkpoint diff");
  i->add_option("--model", in.model, "Checkpoint")->required();
  i->add_option("--diff", in.diff, "Second checkpoint to compare tensor by tensor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    if (err.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return app.exit(err);
    report_error("usage", err.what());
    return 2;
  }

  try {
    if (*g) cmd_gen(gen);
    if (*t) cmd_train(tr);
    if (*f) cmd_finetune(ft);
    if (*p) cmd_predict(pr);
    if (*e) cmd_eval(ev);
    if (*i) cmd_info(in);
  } catch (const ConfigError& err) {
    report_error(err.kind(), err.what());
    return 2;
  } catch (const Error& err) {
    report_error(err.kind(), err.what());
    return 1;
  } catch (const std::exception& err) {
    report_error("internal", err.what());
    return 1;
  }
  return 0;
}
