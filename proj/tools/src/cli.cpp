#include "d3pr_cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "d3pr/checkpoint.hpp"
#include "d3pr/data.hpp"
#include "d3pr/diffusion.hpp"
#include "d3pr/errors.hpp"
#include "d3pr/gaussian.hpp"
#include "d3pr/metrics.hpp"
#include "d3pr/parallel.hpp"
#include "d3pr/schedule.hpp"
#include "d3pr/train.hpp"
#include "d3pr_cli/run_config.hpp"

namespace d3pr::cli {

namespace {

namespace fs = std::filesystem;

struct Context {
  const RunConfig& cfg;
  std::ostream& out;
  std::ostream& err;

  void log(const std::string& msg) const { err << "d3pr " << cfg.subcommand << ": " << msg << "\n"; }
};

const std::string& require_path(const std::string& value, const char* field) {
  if (value.empty()) throw ConfigError(field, "required");
  return value;
}

const std::string& require_input(const std::string& value, const char* field) {
  require_path(value, field);
  if (!fs::exists(value)) throw IoError("file not found: '" + value + "'");
  return value;
}

std::string read_text(const std::string& path) {
  if (!fs::exists(path)) throw IoError("file not found: '" + path + "'");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("write failed: '" + path + "'");
}

std::size_t thread_count(const RunConfig& cfg) {
  if (cfg.threads < 0) throw ConfigError("threads", "must be >= 0");
  return cfg.threads == 0 ? default_thread_count() : static_cast<std::size_t>(cfg.threads);
}

std::size_t non_negative(int v, const char* field) {
  if (v < 0) throw ConfigError(field, "must be >= 0");
  return static_cast<std::size_t>(v);
}

std::vector<SequenceRecord> load_records(const std::string& path, const char* field) {
  auto records = load_dataset(require_input(path, field));
  if (records.empty()) throw DataError("dataset '" + path + "' is empty");
  return records;
}

NoiseSchedule schedule_of(const ScheduleSpec& spec) { return NoiseSchedule::cosine(spec.t_max, spec.offset_s); }

int cmd_synth(const Context& c) {
  const RunConfig& cfg = c.cfg;
  require_path(cfg.out, "out");
  SynthConfig sc;
  const std::size_t train_count = non_negative(cfg.sequences, "sequences");
  const std::size_t test_count = non_negative(cfg.test_sequences, "test_sequences");
  if (test_count > 0) require_path(cfg.test_out, "test_out");
  if (train_count == 0) throw ConfigError("sequences", "must be >= 1");
  sc.sequences = train_count + test_count;
  sc.frames = non_negative(cfg.frames, "frames");
  sc.joints = non_negative(cfg.joints, "joints");
  sc.noise_sigma = cfg.noise_sigma;
  sc.depth_coupling = cfg.depth_coupling;
  sc.jitter_2d = cfg.jitter_2d;

  Rng rng = make_rng(cfg.seed);
  auto records = synthesize_dataset(sc, rng);
  std::vector<SequenceRecord> test(std::make_move_iterator(records.begin() + static_cast<std::ptrdiff_t>(train_count)),
                                   std::make_move_iterator(records.end()));
  records.resize(train_count);
  save_dataset(records, cfg.out);
  c.log("wrote " + std::to_string(records.size()) + " sequences to " + cfg.out);
  if (test_count > 0) {
    save_dataset(test, cfg.test_out);
    c.log("wrote " + std::to_string(test.size()) + " sequences to " + cfg.test_out);
  }
  return kOk;
}

CondGaussianModel fit_from(const std::vector<SequenceRecord>& records, const Context& c) {
  const auto views = triplet_views(records);
  auto model = fit_noise_model(views);
  c.log("fitted conditional noise model on " + std::to_string(model.joints.front().sample_count) +
        " frames per joint");
  return model;
}

int cmd_fit_noise(const Context& c) {
  const RunConfig& cfg = c.cfg;
  require_path(cfg.out, "out");
  Checkpoint ckpt;
  ckpt.schedule = {cfg.T, cfg.s};
  schedule_of(ckpt.schedule);
  const auto records = load_records(cfg.data, "data");
  ckpt.noise_model = fit_from(records, c);
  save_checkpoint(ckpt, cfg.out);
  c.log("wrote " + cfg.out);
  return kOk;
}

int cmd_train(const Context& c) {
  const RunConfig& cfg = c.cfg;
  require_path(cfg.out, "out");
  Checkpoint ckpt;
  if (!cfg.checkpoint.empty()) ckpt = load_checkpoint(require_input(cfg.checkpoint, "checkpoint"));
  ckpt.schedule = {cfg.T, cfg.s};
  const NoiseSchedule schedule = schedule_of(ckpt.schedule);

  const auto records = load_records(cfg.data, "data");
  if (!ckpt.noise_model) {
    c.log("no noise model in checkpoint, fitting one");
    ckpt.noise_model = fit_from(records, c);
  }

  DenoiserConfig dc;
  dc.latent_dim = cfg.latent_dim;
  dc.depth = cfg.depth;
  dc.heads = cfg.heads;
  dc.frames = cfg.frames;
  dc.joints = cfg.joints;
  dc.t_embed_dim = cfg.t_embed_dim;
  dc.mlp_ratio = cfg.mlp_ratio;
  dc.temporal_encoding = cfg.temporal_encoding;
  dc.validate();

  TrainHyper hyper;
  hyper.epochs = cfg.epochs;
  hyper.batch_size = cfg.batch_size;
  hyper.adam = {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.lr_decay};
  hyper.threads = thread_count(cfg);

  Rng rng = make_rng(cfg.seed);
  const auto views = triplet_views(records);
  auto result = train(views, *ckpt.noise_model, schedule, dc, hyper, rng, [&](const EpochRecord& r) {
    std::ostringstream msg;
    msg << "epoch " << r.epoch << "/" << hyper.epochs << " loss " << std::setprecision(6) << r.mean_loss << " lr "
        << r.lr;
    c.log(msg.str());
  });
  ckpt.denoiser = std::move(result.params);
  ckpt.train_log = std::move(result.log);
  save_checkpoint(ckpt, cfg.out);
  c.log("wrote " + cfg.out);
  return kOk;
}

int cmd_refine(const Context& c) {
  const RunConfig& cfg = c.cfg;
  require_path(cfg.out, "out");
  const Checkpoint ckpt = load_checkpoint(require_input(cfg.checkpoint, "checkpoint"));
  if (!ckpt.denoiser) throw ConfigError("checkpoint", "'" + cfg.checkpoint + "' holds no trained denoiser");
  const NoiseSchedule schedule = schedule_of(ckpt.schedule);
  auto records = load_records(cfg.data, "data");

  const Denoiser denoiser(*ckpt.denoiser);
  std::vector<RefineInput> inputs;
  inputs.reserve(records.size());
  for (const auto& r : records) inputs.push_back({r.pose2d, r.noisy3d});
  auto refined = refine_many(inputs, denoiser, schedule, cfg.K, thread_count(cfg));
  for (std::size_t i = 0; i < records.size(); ++i) records[i].noisy3d = std::move(refined[i]);
  save_dataset(records, cfg.out);
  c.log("refined " + std::to_string(records.size()) + " sequences with K=" + std::to_string(cfg.K) + ", wrote " +
        cfg.out);
  return kOk;
}

EvalReport evaluate_records(const std::vector<SequenceRecord>& records, double bin_width) {
  std::vector<EvalItem> items;
  items.reserve(records.size());
  for (const auto& r : records) {
    if (!r.gt3d) throw DataError("sequence '" + r.id + "' has no gt3d to evaluate against");
    items.push_back({r.id, r.noisy3d, *r.gt3d});
  }
  return evaluate(items, bin_width);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double fraction_below(const EvalReport& r, double threshold) {
  const auto below = std::count_if(r.per_sequence.begin(), r.per_sequence.end(),
                                   [&](const SequenceScore& s) { return s.mpjpe_mm < threshold; });
  return static_cast<double>(below) / static_cast<double>(r.per_sequence.size());
}

int cmd_eval(const Context& c) {
  const RunConfig& cfg = c.cfg;
  const auto records = load_records(cfg.data, "data");
  const EvalReport report = evaluate_records(records, cfg.bin_width_mm);
  auto doc = nlohmann::ordered_json::parse(report_to_json(report));
  c.out << report_to_text(report);

  if (!cfg.baseline.empty()) {
    const auto base_records = load_records(cfg.baseline, "baseline");
    if (base_records.size() != records.size()) throw DataError("baseline and data differ in sequence count");
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (base_records[i].id != records[i].id) {
        throw DataError("baseline sequence " + std::to_string(i) + " is '" + base_records[i].id + "', expected '" +
                        records[i].id + "'");
      }
    }
    const EvalReport base = evaluate_records(base_records, cfg.bin_width_mm);
    std::vector<double> base_seq;
    for (const auto& s : base.per_sequence) base_seq.push_back(s.mpjpe_mm);
    const double med = median(base_seq);
    const double rel = 1.0 - report.mpjpe_mm / base.mpjpe_mm;
    const double rel_p = 1.0 - report.p_mpjpe_mm / base.p_mpjpe_mm;
    doc["baseline"] = nlohmann::ordered_json::parse(report_to_json(base));
    doc["relative_reduction"] = {{"mpjpe", rel}, {"p_mpjpe", rel_p}};
    doc["below_baseline_median"] = {
        {"threshold_mm", med}, {"baseline", fraction_below(base, med)}, {"data", fraction_below(report, med)}};
    std::ostringstream text;
    text << std::fixed << std::setprecision(3) << "baseline MPJPE " << base.mpjpe_mm << " mm, P-MPJPE "
         << base.p_mpjpe_mm << " mm\n"
         << "relative reduction MPJPE " << 100.0 * rel << " %, P-MPJPE " << 100.0 * rel_p << " %\n"
         << "sequences below baseline median (" << med << " mm): baseline " << fraction_below(base, med)
         << ", data " << fraction_below(report, med) << "\n";
    c.out << text.str();
  }

  if (!cfg.out.empty()) {
    write_text(cfg.out, doc.dump(2) + "\n");
    c.log("wrote " + cfg.out);
  }
  if (!cfg.histogram_out.empty()) {
    std::ostringstream tsv;
    tsv << std::setprecision(17);
    const auto edges = report.histogram.edges();
    for (std::size_t i = 0; i < report.histogram.counts.size(); ++i) {
      tsv << edges[i] << "\t" << edges[i + 1] << "\t" << report.histogram.counts[i] << "\n";
    }
    write_text(cfg.histogram_out, tsv.str());
    c.log("wrote " + cfg.histogram_out);
  }
  return kOk;
}

int cmd_inspect_schedule(const Context& c) {
  const NoiseSchedule schedule = NoiseSchedule::cosine(c.cfg.T, c.cfg.s);
  std::ostringstream tsv;
  tsv << std::setprecision(17);
  for (int t = 0; t <= schedule.t_max(); ++t) {
    tsv << t << "\t" << (t == 0 ? 0.0 : schedule.beta(t)) << "\t" << schedule.alpha_bar(t) << "\n";
  }
  if (c.cfg.out.empty()) {
    c.out << tsv.str();
  } else {
    write_text(c.cfg.out, tsv.str());
    c.log("wrote " + c.cfg.out);
  }
  return kOk;
}

int dispatch(const Context& c) {
  const std::string& sub = c.cfg.subcommand;
  if (sub == "synth") return cmd_synth(c);
  if (sub == "fit-noise") return cmd_fit_noise(c);
  if (sub == "train") return cmd_train(c);
  if (sub == "refine") return cmd_refine(c);
  if (sub == "eval") return cmd_eval(c);
  if (sub == "inspect-schedule") return cmd_inspect_schedule(c);
  throw ConfigError("subcommand", "unknown subcommand '" + sub + "'");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion-based refinement of noisy 3D human pose sequences", "d3pr"};
  app.require_subcommand(1);

  struct SubOptions {
    CLI::App* app = nullptr;
    std::string config_path;
    std::map<std::string, std::string> raw;
    std::map<std::string, CLI::Option*> options;
  };
  std::map<std::string, std::unique_ptr<SubOptions>> subs;
  const std::map<std::string, std::string> blurbs = {
      {"synth", "generate a synthetic dataset"},
      {"fit-noise", "fit the conditional noise model"},
      {"train", "train the denoiser (fits the noise model if the checkpoint lacks one)"},
      {"refine", "refine the noisy3d poses of a dataset"},
      {"eval", "report MPJPE and P-MPJPE of noisy3d against gt3d"},
      {"inspect-schedule", "print t, beta_t, alpha_bar_t as TSV"},
  };
  for (const auto& name : subcommand_names()) {
    auto so = std::make_unique<SubOptions>();
    so->app = app.add_subcommand(name, blurbs.at(name));
    so->app->add_option("--config", so->config_path, "JSON file of settings; flags override it");
    for (const auto& field : subcommand_fields(name)) {
      const FieldInfo& info = field_info(field);
      auto* opt = so->app->add_option("--" + kebab_case(field), so->raw[field], info.help);
      opt->type_name(std::visit(
          [](auto member) {
            using T = std::remove_reference_t<decltype(RunConfig{}.*member)>;
            if constexpr (std::is_same_v<T, std::string>) return "PATH";
            else if constexpr (std::is_same_v<T, bool>) return "BOOL";
            else if constexpr (std::is_integral_v<T>) return "INT";
            else return "FLOAT";
          },
          info.ref));
      so->options[field] = opt;
    }
    subs[name] = std::move(so);
  }

  std::string sub_name = "d3pr";
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    const SubOptions* chosen = nullptr;
    for (const auto& [name, so] : subs) {
      if (so->app->parsed()) {
        chosen = so.get();
        sub_name = name;
      }
    }
    std::map<std::string, std::string> flags;
    for (const auto& [field, opt] : chosen->options) {
      if (opt->count() > 0) flags[field] = chosen->raw.at(field);
    }
    const std::string config_text = chosen->config_path.empty() ? std::string() : read_text(chosen->config_path);
    const RunConfig cfg = resolve(sub_name, config_text, flags);
    const Context ctx{cfg, out, err};
    ctx.log("config " + describe(cfg));
    return dispatch(ctx);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "d3pr: error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "d3pr " << sub_name << ": io error: " << e.what() << "\n";
    return kIo;
  } catch (const ParseError& e) {
    err << "d3pr " << sub_name << ": parse error: " << e.what() << "\n";
    return kFormat;
  } catch (const SchemaError& e) {
    err << "d3pr " << sub_name << ": schema error: " << e.what() << "\n";
    return kFormat;
  } catch (const ConfigError& e) {
    err << "d3pr " << sub_name << ": config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    err << "d3pr " << sub_name << ": error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace d3pr::cli
