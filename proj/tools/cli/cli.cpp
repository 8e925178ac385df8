#include "cli/cli.h"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cli/run_config.h"
#include "ldn/background_restorer.h"
#include "ldn/compositor.h"
#include "ldn/dataset_forge.h"
#include "ldn/error.h"
#include "ldn/eval.h"
#include "ldn/font.h"
#include "ldn/glyph_transfer.h"
#include "ldn/image.h"

namespace ldn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int worker_count() {
  int n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LDN_NUM_WORKERS"); env && *env) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (*end != '\0' || cap < 1) {
      throw UsageError(std::string("LDN_NUM_WORKERS must be a positive integer, got '") +
                       env + "'");
    }
    n = std::min<long>(n, cap);
  }
  return n;
}

namespace {

std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

// Flags generated from one config section.
struct SectionFlags {
  std::string section;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    for (const auto& [key, def] : default_config().at(section).items()) {
      if (def.is_boolean()) {
        options[key] = app->add_flag(flag_name(key), switches[key]);
      } else {
        options[key] = app->add_option(flag_name(key), values[key]);
      }
    }
  }

  void apply(json& config) const {
    json& sec = config[section];
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      const json& def = default_config().at(section).at(key);
      if (def.is_boolean()) {
        sec[key] = switches.at(key);
        continue;
      }
      const std::string& text = values.at(key);
      try {
        std::size_t used = 0;
        if (def.is_number_float()) {
          sec[key] = std::stod(text, &used);
        } else if (def.is_number_integer()) {
          sec[key] = std::stoi(text, &used);
        } else {
          sec[key] = text;
          used = text.size();
        }
        if (used != text.size()) throw std::invalid_argument(text);
      } catch (const std::logic_error&) {
        throw UsageError(flag_name(key) + " expects a " +
                         std::string(def.type_name()) + ", got '" + text + "'");
      }
    }
  }
};

std::uint64_t parse_seed(const std::string& text) {
  try {
    std::size_t used = 0;
    if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
    const std::uint64_t v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    throw UsageError("--seed expects a non-negative integer, got '" + text + "'");
  }
}

const std::string& require(const json& sec, const std::string& key) {
  const std::string& v = sec.at(key).get_ref<const std::string&>();
  if (v.empty()) throw UsageError(flag_name(key) + " is required");
  return v;
}

fs::path require_path(const json& sec, const std::string& key) {
  const fs::path p = require(sec, key);
  if (!fs::exists(p)) {
    throw UsageError(flag_name(key) + ": no such file or directory: " + p.string());
  }
  return p;
}

// Reports every missing required flag at once.
void require_all(const json& config, const std::string& section,
                 std::initializer_list<const char*> keys) {
  std::string missing;
  auto check = [&](const json& sec, const std::string& key) {
    if (sec.at(key).get_ref<const std::string&>().empty()) {
      missing += (missing.empty() ? "" : ", ") + flag_name(key);
    }
  };
  for (const char* key : keys) check(config.at(section), key);
  check(config, "out");
  if (missing.empty()) return;
  throw UsageError("missing required " +
                   std::string(missing.find(',') == std::string::npos ? "flag " : "flags ") +
                   missing);
}

fs::path require_out(const json& config) {
  const std::string& out = config.at("out").get_ref<const std::string&>();
  if (out.empty()) throw UsageError("--out is required");
  return out;
}

// Artifacts are bound to the config hash that produced them; a different
// config may only replace them with --force.
void check_record(const fs::path& record, const std::string& hash, bool force) {
  if (force || !fs::exists(record)) return;
  std::ifstream in(record);
  json old;
  try {
    old = json::parse(in);
  } catch (const json::exception&) {
    throw Error("cannot read run record " + record.string() +
                "; pass --force to overwrite");
  }
  const std::string previous = old.value("config_hash", "");
  if (previous != hash) {
    throw Error("refusing to overwrite artifacts in " +
                record.parent_path().string() + " produced by config " +
                previous + " (current config " + hash + "); pass --force");
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("cannot write " + path.string());
}

json run_record(const json& config, const std::string& hash) {
  return {{"config", config}, {"config_hash", hash}};
}

std::vector<double> parse_list(const std::string& text, std::size_t n,
                               const std::string& flag) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  try {
    while (std::getline(ss, item, ',')) {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    }
  } catch (const std::logic_error&) {
    throw UsageError(flag + ": cannot parse '" + text + "'");
  }
  if (v.size() != n) {
    throw UsageError(flag + " expects " + std::to_string(n) +
                     " comma-separated numbers, got '" + text + "'");
  }
  return v;
}

Rect parse_rect(const std::string& text, const std::string& flag) {
  const std::vector<double> v = parse_list(text, 4, flag);
  for (double x : v) {
    if (x != std::floor(x)) throw UsageError(flag + " expects integers");
  }
  return {int(v[0]), int(v[1]), int(v[2]), int(v[3])};
}

std::vector<Rect> read_char_boxes(const fs::path& path) {
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("--char-boxes: " + std::string(e.what()));
  }
  if (j.is_object() && j.contains("char_boxes")) j = j["char_boxes"];
  if (!j.is_array()) throw UsageError("--char-boxes: expected a JSON array of boxes");
  std::vector<Rect> boxes;
  for (const json& b : j) {
    if (b.is_array() && b.size() == 4) {
      boxes.push_back({b[0].get<int>(), b[1].get<int>(), b[2].get<int>(),
                       b[3].get<int>()});
    } else if (b.is_object()) {
      boxes.push_back({b.at("x").get<int>(), b.at("y").get<int>(),
                       b.at("w").get<int>(), b.at("h").get<int>()});
    } else {
      throw UsageError("--char-boxes: each box is [x,y,w,h] or {x,y,w,h}");
    }
  }
  return boxes;
}

// Runs `f`, turning library failures into StageError(stage).
template <typename F>
void in_stage(const char* stage, F&& f) {
  try {
    f();
  } catch (const UsageError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

int report_every(int steps) { return std::max(1, steps / 20); }

// --- commands -----------------------------------------------------------------

void dataset_build(const json& config, const std::string& hash, bool force,
                   std::ostream& out) {
  const json& d = config.at("dataset");
  const fs::path out_dir = require_out(config);
  const std::string& fonts_dir = d.at("fonts").get_ref<const std::string&>();
  const int backgrounds = d.at("backgrounds").get<int>();
  if (fonts_dir.empty() && backgrounds <= 0) throw UsageError("--fonts is required");
  if (!fonts_dir.empty()) require_path(d, "fonts");
  std::optional<forge::ColorGradientSpec> fixed;
  if (const std::string& fc = d.at("fixed_color"); !fc.empty()) {
    if (!d.at("color").get<bool>()) throw UsageError("--fixed-color needs --color");
    const std::vector<double> c = parse_list(fc, 3, "--fixed-color");
    fixed = forge::ColorGradientSpec{{c[0], c[1], c[2]}, {c[0], c[1], c[2]}};
  }
  const int workers = worker_count();
  const fs::path record = out_dir / "run.dataset-build.json";
  check_record(record, hash, force);

  in_stage("dataset_forge", [&] {
    const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
    if (!fonts_dir.empty()) {
      const auto files = list_font_files(fonts_dir);
      if (files.empty()) throw IoError("no font files in " + fonts_dir);
      const int n = d.at("n_fonts").get<int>() > 0 ? d.at("n_fonts").get<int>()
                                                   : static_cast<int>(files.size());
      forge::ForgeOptions opt;
      opt.glyph_size = d.at("size").get<int>();
      opt.margin = d.at("margin").get<double>();
      opt.supersample = d.at("supersample").get<int>();
      opt.threshold = d.at("threshold").get<double>();
      const forge::BuildResult result =
          forge::build_font_dataset(enumerate_fonts(files, n), out_dir,
                                    d.at("color").get<bool>(), seed, opt,
                                    workers, fixed);
      out << result.manifest.records.size() << " records from "
          << result.manifest.font_ids().size() << " fonts\n";
      for (const auto& r : result.rejects) {
        out << "rejected " << r.font_id << ": " << r.reason << "\n";
      }
    }
    if (backgrounds > 0) {
      const int size = d.at("background_size").get<int>();
      if (size < 1) throw DomainError("--background-size must be positive");
      Rng rng(derive_seed(seed, "backgrounds"));
      const forge::BackgroundKind kinds[] = {
          forge::BackgroundKind::kFlat, forge::BackgroundKind::kLinear,
          forge::BackgroundKind::kRadial, forge::BackgroundKind::kWaves};
      fs::create_directories(out_dir / "backgrounds");
      for (int i = 0; i < backgrounds; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%04d.png", i);
        write_png(forge::make_background(kinds[i % 4], rng, size, size),
                  out_dir / "backgrounds" / name);
      }
      out << backgrounds << " backgrounds\n";
    }
  });
  write_json(record, run_record(config, hash));
}

void write_history(const fs::path& path, const std::vector<json>& lines) {
  std::ofstream f(path, std::ios::binary);
  for (const json& j : lines) f << j.dump() << "\n";
  if (!f) throw IoError("cannot write " + path.string());
}

void train_inpaint(const json& config, const std::string& hash, bool force,
                   std::ostream& err) {
  const json& c = config.at("inpaint");
  require_all(config, "inpaint", {"data"});
  fs::path data = require_path(c, "data");
  const fs::path out_dir = require_out(config);
  const fs::path record = out_dir / "run.train-inpaint.json";
  check_record(record, hash, force);

  in_stage(inpaint::kStage, [&] {
    if (fs::is_directory(data / "backgrounds")) data /= "backgrounds";
    inpaint::ArchConfig arch;
    arch.input_size = c.at("input_size");
    arch.hole_size = c.at("hole_size");
    arch.latent_dim = c.at("latent_dim");
    arch.base_channels = c.at("base_channels");
    arch.max_channels = c.at("max_channels");
    arch.disc_channels = c.at("disc_channels");
    inpaint::TrainConfig train;
    train.steps = c.at("steps");
    train.batch_size = c.at("batch_size");
    train.lr = c.at("lr");
    train.disc_lr = c.at("disc_lr");
    train.lr_floor = c.at("lr_floor");
    train.lambda_rec = c.at("lambda_rec");
    train.lambda_adv = c.at("lambda_adv");
    train.fill = c.at("fill");
    train.checkpoint_every = c.at("checkpoint_every");
    const int every = report_every(train.steps);
    const auto result = inpaint::train_inpainter(
        inpaint::load_image_dir(data), arch, train,
        config.at("seed").get<std::uint64_t>(), out_dir / "inpaint",
        [&](const inpaint::LossReport& r) {
          if (r.step % every == 0 || r.step == train.steps) {
            err << r.to_json().dump() << "\n";
          }
        });
    std::vector<json> lines;
    for (const auto& r : result.history) lines.push_back(r.to_json());
    write_history(out_dir / "inpaint" / "losses.jsonl", lines);
  });
  write_json(record, run_record(config, hash));
}

void train_glyph(const json& config, const std::string& hash, bool force,
                 std::ostream& err) {
  const json& c = config.at("glyph");
  require_all(config, "glyph", {"data"});
  const fs::path data = require_path(c, "data");
  const fs::path out_dir = require_out(config);
  const std::string& stage = c.at("stage").get_ref<const std::string&>();
  if (stage != "pretrain" && stage != "finetune") {
    throw UsageError("--stage must be pretrain or finetune, got '" + stage + "'");
  }
  fs::path init = c.at("init").get<std::string>();
  if (!init.empty() && !fs::exists(init)) {
    throw UsageError("--init: no such file or directory: " + init.string());
  }
  if (stage == "finetune" && init.empty()) {
    init = out_dir / glyph::kGlyphNetKind;
    if (!fs::exists(init)) {
      throw UsageError("--init is required for finetuning (no " + init.string() + ")");
    }
  }
  const fs::path record = out_dir / ("run.train-glyph-" + stage + ".json");
  check_record(record, hash, force);

  in_stage(glyph::kStage, [&] {
    const forge::DatasetManifest manifest = forge::read_manifest(data);
    std::vector<forge::FontGlyphs> fonts = forge::load_fonts(data, "train");
    if (fonts.empty()) throw IoError("no training fonts in " + data.string());
    glyph::TrainConfig train;
    train.steps = c.at("steps");
    train.batch_size = c.at("batch_size");
    train.lr = c.at("lr");
    train.orna_lr = c.at("orna_lr");
    train.disc_lr = c.at("disc_lr");
    train.observed_min = c.at("observed_min");
    train.observed_max = c.at("observed_max");
    train.lambda_shape = c.at("lambda_shape");
    train.lambda_color = c.at("lambda_color");
    train.lambda_adv = c.at("lambda_adv");
    train.color_slots = c.at("color_slots");
    train.disc_channels = c.at("disc_channels");
    const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
    const int every = report_every(train.steps);
    auto progress = [&](const glyph::LossReport& r) {
      if (r.step % every == 0 || r.step == train.steps) {
        err << r.to_json().dump() << "\n";
      }
    };
    std::vector<json> lines;
    if (stage == "pretrain") {
      if (manifest.color) {
        for (auto& f : fonts) f.glyphs = f.shapes;
      }
      glyph::GlyphNetConfig arch;
      arch.glyph_size = manifest.glyph_size;
      arch.base_channels = c.at("base_channels");
      arch.depth = c.at("depth");
      arch.latent_dim = c.at("latent_dim");
      arch.threshold = c.at("threshold");
      std::optional<glyph::GlyphNet> start;
      if (!init.empty()) start.emplace(glyph::load_glyphnet(init));
      const auto result = glyph::pretrain_glyphnet(
          fonts, arch, train, seed, out_dir / glyph::kGlyphNetKind,
          start ? &*start : nullptr, progress);
      for (const auto& r : result.history) lines.push_back(r.to_json());
    } else {
      if (!manifest.color) {
        throw DomainError("finetuning needs a color dataset (built with --color)");
      }
      const glyph::GlyphNet start = glyph::load_glyphnet(init);
      glyph::OrnaNetConfig orna;
      orna.glyph_size = manifest.glyph_size;
      orna.hidden = c.at("orna_hidden");
      orna.threshold = c.at("threshold");
      const auto result = glyph::finetune_pipeline(start, fonts, orna, train,
                                                   seed, out_dir, progress);
      for (const auto& r : result.history) lines.push_back(r.to_json());
    }
    write_history(out_dir / (stage + "_losses.jsonl"), lines);
  });
  write_json(record, run_record(config, hash));
}

void edit(const json& config, const std::string& hash, bool force,
          std::ostream& out) {
  const json& c = config.at("edit");
  require_all(config, "edit",
              {"image", "box", "char_boxes", "source", "target", "ckpt_dir", "audit"});
  const fs::path image_path = require_path(c, "image");
  const Rect box = parse_rect(require(c, "box"), "--box");
  const fs::path boxes_path = require_path(c, "char_boxes");
  const std::string& source = require(c, "source");
  const std::string& target = require(c, "target");
  const fs::path ckpt_dir = require_path(c, "ckpt_dir");
  const fs::path out_path = require_out(config);
  const fs::path audit_path = require(c, "audit");
  const std::vector<Rect> char_boxes = read_char_boxes(boxes_path);
  check_record(audit_path, hash, force);

  compose::EditRequest request;
  compose::EditOptions opt;
  in_stage(compose::kStage, [&] {
    Image img = read_png(image_path);
    request.image = img.channels() == 3 ? std::move(img) : gray_to_rgb(to_grayscale(img));
    request.word_box = box;
    request.char_boxes = char_boxes;
    request.source_text = source;
    request.target_text = target;
    opt.adapt_steps = c.at("adapt_steps");
    opt.adapt_lr = c.at("adapt_lr");
    opt.layout.overflow_slack = c.at("overflow_slack");
    opt.seed = config.at("seed");
    request.validate();
  });
  const compose::EditModels models = compose::load_edit_models(ckpt_dir);
  const compose::EditedImage edited = compose::edit_text(request, models, opt);
  in_stage(compose::kStage, [&] {
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_png(edited.image, out_path);
    json audit = edited.audit;
    audit["config"] = config;
    audit["config_hash"] = hash;
    audit["output"] = out_path.string();
    write_json(audit_path, audit);
  });
  out << "wrote " << out_path.string() << "\n";
}

void evaluate(const json& config, const std::string& hash, bool force,
              std::ostream& out) {
  const json& c = config.at("eval");
  require_all(config, "eval", {"pred", "ref"});
  const fs::path pred = require_path(c, "pred");
  const fs::path ref = require_path(c, "ref");
  const std::string& mask_dir = c.at("mask").get_ref<const std::string&>();
  if (!mask_dir.empty()) require_path(c, "mask");
  const fs::path out_dir = require_out(config);
  const fs::path record = out_dir / "run.eval.json";
  check_record(record, hash, force);

  in_stage("eval_harness", [&] {
    const double threshold = c.at("threshold");
    std::vector<fs::path> names;
    for (const auto& e : fs::directory_iterator(ref)) {
      if (e.path().extension() == ".png") names.push_back(e.path().filename());
    }
    std::sort(names.begin(), names.end());
    if (names.empty()) throw IoError("no PNG files in " + ref.string());

    std::map<std::string, std::vector<double>> values;
    std::vector<json> lines;
    auto emit = [&](const std::string& sample, const eval::MetricReport& m) {
      json j = m.to_json();
      j["sample"] = sample;
      lines.push_back(std::move(j));
      values[m.name].push_back(m.value);
    };
    for (const fs::path& name : names) {
      if (!fs::exists(pred / name)) {
        throw IoError("missing prediction " + (pred / name).string());
      }
      const Image a = read_png(pred / name);
      const Image b = read_png(ref / name);
      if (!a.same_shape(b)) {
        throw DimensionError("shape mismatch for " + name.string());
      }
      const std::string sample = name.string();
      if (!mask_dir.empty()) {
        const Image mask = to_grayscale(read_png(fs::path(mask_dir) / name));
        int count = 0;
        for (double v : mask.data()) count += v > 0.5;
        if (count > 0) {
          emit(sample, {"l1", eval::l1_metric(a, b, &mask), eval::Region::kMasked,
                        count});
        }
      } else {
        emit(sample, {"l1", eval::l1_metric(a, b), eval::Region::kFull,
                      a.height() * a.width()});
      }
      const Image ga = to_grayscale(a), gb = to_grayscale(b);
      emit(sample, {"ssim", eval::ssim(ga, gb), eval::Region::kFull,
                    a.height() * a.width()});
      emit(sample, {"ink_iou", eval::ink_iou(ga, gb, threshold),
                    eval::Region::kInk, a.height() * a.width()});
    }
    fs::create_directories(out_dir);
    write_history(out_dir / "metrics.jsonl", lines);

    std::ostringstream table;
    char row[128];
    std::snprintf(row, sizeof(row), "%-10s %8s %10s %10s %10s\n", "metric",
                  "samples", "mean", "min", "max");
    table << row;
    for (const auto& [name, v] : values) {
      double sum = 0;
      for (double x : v) sum += x;
      std::snprintf(row, sizeof(row), "%-10s %8zu %10.6f %10.6f %10.6f\n",
                    name.c_str(), v.size(), sum / v.size(),
                    *std::min_element(v.begin(), v.end()),
                    *std::max_element(v.begin(), v.end()));
      table << row;
    }
    std::ofstream f(out_dir / "summary.txt", std::ios::binary);
    f << table.str();
    out << table.str();
  });
  write_json(record, run_record(config, hash));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Scene text editing: datasets, training, editing and evaluation",
               "ldn"};
  app.require_subcommand(1);
  std::string config_path, seed_text, out_path;
  bool print_config = false, force = false;
  CLI::Option* seed_opt = app.add_option("--seed", seed_text, "Random seed");
  CLI::Option* out_opt = app.add_option("--out", out_path, "Output location");
  app.add_option("--config", config_path, "TOML or JSON config file");
  app.add_flag("--print-config", print_config,
               "Print the effective config and exit");
  app.add_flag("--force", force, "Overwrite artifacts of a different config");

  auto* dataset = app.add_subcommand("dataset", "Glyph datasets");
  dataset->require_subcommand(1)->fallthrough();
  struct Leaf {
    std::string command;
    CLI::App* app;
    SectionFlags flags;
  };
  std::vector<Leaf> leaves;
  leaves.push_back({"dataset build",
                    dataset->add_subcommand("build", "Render glyph datasets"), {}});
  leaves.push_back({"train-inpaint",
                    app.add_subcommand("train-inpaint", "Train the background restorer"),
                    {}});
  leaves.push_back({"train-glyph",
                    app.add_subcommand("train-glyph", "Train GlyphNet / OrnaNet"), {}});
  leaves.push_back({"edit", app.add_subcommand("edit", "Replace a word in an image"),
                    {}});
  leaves.push_back({"eval", app.add_subcommand("eval", "Score predictions"), {}});
  for (Leaf& leaf : leaves) {
    leaf.app->fallthrough();
    leaf.flags.section = section_of(leaf.command);
    leaf.flags.attach(leaf.app);
  }

  std::vector<const char*> argv{"ldn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const Leaf* active = nullptr;
  for (const Leaf& leaf : leaves) {
    if (leaf.app->parsed()) active = &leaf;
  }

  json effective;
  std::string hash;
  try {
    json full = default_config();
    if (!config_path.empty()) merge_config(full, read_config_file(config_path));
    if (seed_opt->count()) full["seed"] = parse_seed(seed_text);
    if (out_opt->count()) full["out"] = out_path;
    active->flags.apply(full);
    effective = effective_config(full, active->command);
    hash = config_hash(effective);
    if (print_config) {
      out << dump_config(effective);
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    const std::string& cmd = active->command;
    if (cmd == "dataset build") {
      dataset_build(effective, hash, force, out);
    } else if (cmd == "train-inpaint") {
      train_inpaint(effective, hash, force, err);
    } else if (cmd == "train-glyph") {
      train_glyph(effective, hash, force, err);
    } else if (cmd == "edit") {
      edit(effective, hash, force, out);
    } else {
      evaluate(effective, hash, force, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}

}  // namespace ldn::cli
