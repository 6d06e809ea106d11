#include "commands.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "config.hpp"
#include "rqrf/corpus.hpp"
#include "rqrf/error.hpp"
#include "rqrf/evaluator.hpp"
#include "rqrf/io.hpp"
#include "rqrf/model.hpp"
#include "rqrf/sampler.hpp"
#include "rqrf/simulator.hpp"
#include "rqrf/trainer.hpp"

namespace rqrf::cli {

namespace {

enum class Format { kText, kJson };

struct Options {
  std::string config;
  Format format = Format::kText;
  std::string checkpoint;  // empty: paths.checkpoint
  std::string against;
  std::uint64_t draws = 0;  // 0: verify.draws
};

using Json = nlohmann::ordered_json;

std::string line(const Json& j) { return j.dump() + "\n"; }

Universe load_universe(const RunConfig& c) { return Universe::deserialize(io::read_file(c.paths.universe)); }

ClickLog load_log(const std::filesystem::path& p) { return ClickLog::deserialize(io::read_file(p)); }

Checkpoint load_checkpoint(const std::filesystem::path& p, const Universe& universe) {
  Checkpoint ck = deserialize_checkpoint(io::read_file(p));
  if (ck.universe_fingerprint != universe_fingerprint(universe)) {
    throw ArtifactError("checkpoint " + p.string() + " was trained on a different universe");
  }
  return ck;
}

std::filesystem::path checkpoint_path(const RunConfig& c, const Options& o) {
  return o.checkpoint.empty() ? c.paths.checkpoint : std::filesystem::path(o.checkpoint);
}

std::filesystem::path epoch_path(const std::filesystem::path& base, int epoch) {
  return std::filesystem::path(base.string() + ".epoch" + std::to_string(epoch));
}

std::vector<EvalCase> load_eval_cases(const RunConfig& c, const Universe& u) {
  auto cases = build_eval_cases(load_log(c.paths.eval_log), u);
  if (cases.empty()) throw ArtifactError("eval log " + c.paths.eval_log.string() + " has no clicked queries");
  return cases;
}

// --- commands ----------------------------------------------------------------------------------

int cmd_gen(const RunConfig& c, const Options& o, std::ostream& out) {
  const Universe u = generate_universe(c.generation, c.universe_seed());
  io::write_file(c.paths.universe, u.serialize());
  std::size_t held_out = 0;
  for (const Query& q : u.queries) held_out += q.held_out;
  if (o.format == Format::kJson) {
    out << line({{"record", "universe"},
                 {"path", c.paths.universe.string()},
                 {"words", u.words.size()},
                 {"keywords", u.keywords.size()},
                 {"ads", u.ads.size()},
                 {"queries", u.queries.size()},
                 {"held_out", held_out}});
  } else {
    out << "universe: " << c.paths.universe.string() << '\n'
        << "words: " << u.words.size() << '\n'
        << "keywords: " << u.keywords.size() << '\n'
        << "ads: " << u.ads.size() << '\n'
        << "queries: " << u.queries.size() << " (" << held_out << " held out)\n";
  }
  return kOk;
}

int cmd_log(const RunConfig& c, const Options& o, std::ostream& out) {
  const Universe u = load_universe(c);
  // Training traffic never contains held-out queries; the evaluation slice draws from all of them.
  const ClickLog train_log = simulate_click_log(u, c.log.train_requests, c.train_log_seed(), false);
  const ClickLog eval_log = simulate_click_log(u, c.log.eval_requests, c.eval_log_seed(), true);
  io::write_file(c.paths.train_log, train_log.serialize());
  io::write_file(c.paths.eval_log, eval_log.serialize());
  auto clicks = [](const ClickLog& l) {
    std::size_t n = 0;
    for (const auto& r : l.records) n += r.clicked;
    return n;
  };
  if (o.format == Format::kJson) {
    out << line({{"record", "log"}, {"slice", "train"}, {"path", c.paths.train_log.string()},
                 {"requests", train_log.records.size()}, {"clicks", clicks(train_log)}});
    out << line({{"record", "log"}, {"slice", "eval"}, {"path", c.paths.eval_log.string()},
                 {"requests", eval_log.records.size()}, {"clicks", clicks(eval_log)}});
  } else {
    out << "train log: " << c.paths.train_log.string() << " (" << train_log.records.size() << " requests, "
        << clicks(train_log) << " clicks)\n"
        << "eval log: " << c.paths.eval_log.string() << " (" << eval_log.records.size() << " requests, "
        << clicks(eval_log) << " clicks)\n";
  }
  return kOk;
}

int cmd_sample(const RunConfig& c, const Options& o, std::ostream& out) {
  const Universe u = load_universe(c);
  const ClickLog log = load_log(c.paths.train_log);
  const WordVecTable wv = pretrained_word_vectors(u, c.sampling.word_noise, c.word_vector_seed());
  const auto samples = draw_samples(log, u, wv, c.sampling.neg_ratio, c.sample_seed());
  io::write_file(c.paths.samples, serialize_samples(samples));
  if (o.format == Format::kJson) {
    out << line({{"record", "samples"}, {"path", c.paths.samples.string()}, {"samples", samples.size()},
                 {"neg_ratio", c.sampling.neg_ratio}});
  } else {
    out << "samples: " << c.paths.samples.string() << " (" << samples.size() << " samples, " << c.sampling.neg_ratio
        << " negatives each)\n";
  }
  return kOk;
}

std::string trace_row(const EpochStats& s) {
  return std::to_string(s.epoch) + '\t' + io::format_double(s.train_loss) + '\t' + io::format_double(s.eval_map);
}

int cmd_train(const RunConfig& c, const Options& o, std::ostream& out) {
  const Universe u = load_universe(c);
  const auto samples = deserialize_samples(io::read_file(c.paths.samples));
  const auto cases = load_eval_cases(c, u);
  const std::uint64_t fp = universe_fingerprint(u);
  const std::filesystem::path ckpt = checkpoint_path(c, o);

  std::string trace = "epoch\ttrain_loss\teval_map\n";
  const auto on_epoch = [&](const ModelParams<float>& model, EpochStats& s) {
    s.eval_map = evaluate(model, cases, u).map;
    io::write_file(epoch_path(ckpt, s.epoch), serialize_checkpoint({model, fp}));
    trace += trace_row(s) + '\n';
    if (o.format == Format::kJson) {
      out << line({{"record", "epoch"}, {"epoch", s.epoch}, {"train_loss", s.train_loss}, {"eval_map", s.eval_map}});
    } else {
      out << trace_row(s) << '\n';
    }
  };
  if (o.format == Format::kText) out << "epoch\ttrain_loss\teval_map\n";
  const TrainResult result = train(samples, u, c.model, c.training, on_epoch);
  io::write_file(ckpt, serialize_checkpoint({result.model, fp}));
  io::write_file(c.paths.trace, trace);
  return kOk;
}

void emit_metrics(const MetricsReport& r, const std::string& label, Format f, std::ostream& out) {
  if (f == Format::kJson) {
    Json j = Json::parse(r.to_jsonl());
    j["model"] = label;
    out << line(j);
  } else {
    out << "model: " << label << '\n' << r.to_text();
  }
}

int cmd_eval(const RunConfig& c, const Options& o, std::ostream& out) {
  const Universe u = load_universe(c);
  const auto cases = load_eval_cases(c, u);
  const std::filesystem::path path = checkpoint_path(c, o);
  const Checkpoint ck = load_checkpoint(path, u);
  const auto metrics = evaluate_cases(ck.model, cases, u);
  emit_metrics(summarize(cases, metrics), path.filename().string(), o.format, out);
  if (o.against.empty()) return kOk;

  const std::filesystem::path other_path(o.against);
  const Checkpoint other = load_checkpoint(other_path, u);
  const auto other_metrics = evaluate_cases(other.model, cases, u);
  if (o.format == Format::kText) out << '\n';
  emit_metrics(summarize(cases, other_metrics), other_path.filename().string(), o.format, out);

  std::vector<double> a, b;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    a.push_back(metrics[i].map);
    b.push_back(other_metrics[i].map);
  }
  const PairedTTest t = paired_t_test(a, b);
  if (o.format == Format::kJson) {
    out << line({{"record", "t_test"}, {"metric", "map"}, {"n", t.n}, {"mean_difference", t.mean_difference},
                 {"t", std::isfinite(t.t_statistic) ? Json(t.t_statistic) : Json(t.t_statistic > 0 ? "inf" : "-inf")},
                 {"p_value", t.p_value}});
  } else {
    out << "\npaired t-test (map, " << t.n << " cases)\n"
        << "mean_difference: " << io::format_double(t.mean_difference) << '\n'
        << "t: " << io::format_double(t.t_statistic) << '\n'
        << "p_value: " << io::format_double(t.p_value) << '\n';
  }
  return kOk;
}

int cmd_ablate(const RunConfig& c, const Options& o, std::ostream& out) {
  const Universe u = load_universe(c);
  const auto samples = deserialize_samples(io::read_file(c.paths.samples));
  const auto cases = load_eval_cases(c, u);

  struct Row {
    std::string label;
    MetricsReport report;
    std::vector<CaseMetrics> metrics;
  };
  std::vector<Row> rows;
  const AblationFlags variants[] = {{false, true, true}, {true, false, true}, {true, true, false}, {true, true, true}};
  for (const AblationFlags& flags : variants) {
    ModelConfig mc = c.model;
    mc.flags = flags;
    const TrainResult r = train(samples, u, mc, c.training);
    Row row{flags.label(), {}, evaluate_cases(r.model, cases, u)};
    row.report = summarize(cases, row.metrics);
    rows.push_back(std::move(row));
  }
  const Row& full = rows.back();
  std::vector<double> full_map;
  for (const auto& m : full.metrics) full_map.push_back(m.map);

  if (o.format == Format::kText) out << "model\tnll\tmap\tmrr\tndcg\tp_vs_full\n";
  for (const Row& row : rows) {
    std::optional<double> p;
    if (&row != &full) {
      std::vector<double> m;
      for (const auto& x : row.metrics) m.push_back(x.map);
      p = paired_t_test(m, full_map).p_value;
    }
    if (o.format == Format::kJson) {
      out << line({{"record", "ablation"}, {"model", row.label}, {"nll", row.report.nll}, {"map", row.report.map},
                   {"mrr", row.report.mrr}, {"ndcg", row.report.ndcg}, {"p_vs_full", p ? Json(*p) : Json(nullptr)}});
    } else {
      out << row.label << '\t' << io::format_double(row.report.nll) << '\t' << io::format_double(row.report.map)
          << '\t' << io::format_double(row.report.mrr) << '\t' << io::format_double(row.report.ndcg) << '\t'
          << (p ? io::format_double(*p) : "-") << '\n';
    }
  }
  return kOk;
}

int cmd_simulate(const RunConfig& c, const Options& o, std::ostream& out) {
  const Universe u = load_universe(c);
  const RewriteTable table = build_memory_baseline(load_log(c.paths.train_log), u);
  const Checkpoint ck = load_checkpoint(checkpoint_path(c, o), u);
  const LiftReport rep = run_ab(u, table, ck.model, c.simulation);
  out << (o.format == Format::kJson ? rep.to_jsonl() : rep.to_text());
  return kOk;
}

int cmd_verify(const RunConfig& c, const Options& o, std::ostream& out) {
  const ProportionalityReport rep = verify_proportionality(c.verify.spec, o.draws ? o.draws : c.verify.draws, c.seed);
  out << (o.format == Format::kJson ? rep.to_jsonl() : rep.to_text());
  return rep.passed ? kOk : kFailure;
}

// --- error reporting ---------------------------------------------------------------------------

const char* kind_name(Error::Kind k) {
  switch (k) {
    case Error::Kind::kConfig: return "config";
    case Error::Kind::kArtifact: return "artifact";
    case Error::Kind::kNumeric: return "numeric";
    case Error::Kind::kGeneration: return "generation";
    case Error::Kind::kInvalidArgument: return "invalid_argument";
    case Error::Kind::kInternal: return "internal";
  }
  return "unknown";
}

int exit_code(Error::Kind k) {
  switch (k) {
    case Error::Kind::kConfig: return kBadConfig;
    case Error::Kind::kArtifact: return kBadArtifact;
    case Error::Kind::kNumeric: return kNumericAbort;
    default: return kFailure;
  }
}

int report(std::ostream& err, const char* kind, int code, const std::string& message) {
  err << "error kind=" << kind << " exit=" << code << " message=" << Json(message).dump() << '\n';
  return code;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Query rewriting for sponsored search: synthetic marketplace, training and evaluation", "rqrf"};
  app.require_subcommand(1);
  Options o;
  const std::map<std::string, Format> formats{{"text", Format::kText}, {"json", Format::kJson}};

  using Handler = int (*)(const RunConfig&, const Options&, std::ostream&);
  std::vector<std::pair<CLI::App*, Handler>> commands;
  auto add = [&](const char* name, const char* help, Handler h) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", o.config, "Run config (INI)")->required();
    sub->add_option("--format", o.format, "Report format")->transform(CLI::CheckedTransformer(formats));
    commands.emplace_back(sub, h);
    return sub;
  };
  add("gen", "Generate the synthetic universe", cmd_gen);
  add("log", "Simulate the training and evaluation click logs", cmd_log);
  add("sample", "Draw RPM-oriented training samples", cmd_sample);
  add("train", "Train both towers; writes per-epoch checkpoints and the loss trace", cmd_train)
      ->add_option("--checkpoint", o.checkpoint, "Output checkpoint (default: paths.checkpoint)");
  auto* eval = add("eval", "Offline metrics of a checkpoint", cmd_eval);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate (default: paths.checkpoint)");
  eval->add_option("--against", o.against, "Second checkpoint; adds a paired t-test on per-query MAP");
  add("ablate", "Train and evaluate the full model and its three single-module ablations", cmd_ablate);
  add("simulate", "A/B test of the memory baseline against the model", cmd_simulate)
      ->add_option("--checkpoint", o.checkpoint, "Treatment checkpoint (default: paths.checkpoint)");
  add("verify", "Check that positive sampling is proportional to RPM", cmd_verify)
      ->add_option("--draws", o.draws, "Positive draws (default: verify.draws)");

  std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    return report(err, "usage", kBadConfig, e.what());
  }

  try {
    const RunConfig config = RunConfig::load(o.config);
    for (const auto& [sub, handler] : commands) {
      if (sub->parsed()) return handler(config, o, out);
    }
    return kOk;
  } catch (const Error& e) {
    return report(err, kind_name(e.kind()), exit_code(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report(err, "internal", kFailure, e.what());
  }
}

}  // namespace rqrf::cli
