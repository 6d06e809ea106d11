// End-to-end acceptance run on the pinned reference configuration. Prints one PASS/FAIL line
// per criterion and exits non-zero if any fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "gradcheck.hpp"
#include "metric_reference.hpp"
#include "rqrf/evaluator.hpp"
#include "rqrf/io.hpp"
#include "rqrf/sampler.hpp"
#include "rqrf/simulator.hpp"
#include "rqrf/trainer.hpp"

using namespace rqrf;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct CliResult {
  int code = 0;
  std::string out, err;
};

CliResult cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "rqrf");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<Json> json_lines(const std::string& text) {
  std::vector<Json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(Json::parse(line));
  }
  return out;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

// The reference run: default configuration, seed 7, artifacts in `dir`.
struct Pipeline {
  fs::path dir;
  fs::path config;
  bool ok = true;
  std::string failure;

  explicit Pipeline(fs::path d) : dir(std::move(d)) {
    fs::create_directories(dir);
    config = dir / "reference.ini";
    io::write_file(config, "[global]\nseed = 7\n");
  }

  CliResult step(std::vector<std::string> args) {
    args.insert(args.begin() + 1, {"-c", config.string()});
    CliResult r = cli_run(args);
    if (r.code != 0 && ok) {
      ok = false;
      failure = args[0] + " exited " + std::to_string(r.code) + ": " + r.err;
    }
    return r;
  }

  void run_through_train() {
    for (const char* cmd : {"gen", "log", "sample", "train"}) {
      const auto t0 = std::chrono::steady_clock::now();
      step({cmd});
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cerr << "  [" << dir.filename().string() << "] " << cmd << " " << fmt(s) << " s\n";
      if (!ok) return;
    }
  }
};

Outcome gradient_check() {
  const cli::RunConfig ref;
  GenConfig g = ref.generation;
  g.queries_per_category = 20;
  g.keywords_per_category = 15;
  g.ads_per_category = 5;
  const Universe u = generate_universe(g, 0);
  const ClickLog log = simulate_click_log(u, 2000, 1);
  const auto samples = draw_samples(log, u, pretrained_word_vectors(u, 0.1, 2), 4, 3);

  double worst = 0.0;
  std::string worst_name;
  std::size_t tensors = 0, kinks = 0, unresolved = 0;
  for (int variant = 0; variant < 4; ++variant) {
    ModelConfig mc;
    mc.tower.t_max = 4;
    mc.tower.c_max = 6;
    mc.tower.word_dim = 8;
    mc.tower.char_dim = 4;
    mc.tower.hidden_dim = 8;
    mc.tower.out_dim = 8;
    if (variant == 1) mc.flags.use_cnn = false;
    if (variant == 2) mc.flags.use_attention = false;
    if (variant == 3) mc.flags.use_mlp = false;
    ModelParams<double> model = cast_model<double>(initial_model(u, mc, 0));
    const TokenizedCorpus texts = TokenizedCorpus::build(u, model.vocab, model.config.tower);
    const std::span<const TrainingSample> batch(samples.data(), 3);
    for (const auto& c : test::model_gradient_check(model, batch, texts, 1e-4)) {
      ++tensors;
      kinks += c.kinks;
      unresolved += c.unresolved;
      if (c.rel_error > worst) {
        worst = c.rel_error;
        worst_name = mc.flags.label() + ":" + c.name;
      }
    }
  }
  return {worst < 1e-4 && unresolved == 0,
          std::to_string(tensors) + " tensors over 4 variants, max rel error " + fmt(worst) + " (" + worst_name +
              "), " + std::to_string(kinks) + " elements re-measured across a ReLU kink, " +
              std::to_string(unresolved) + " unresolved"};
}

Outcome metric_oracles() {
  std::size_t checked = 0;
  double worst = 0.0;
  for (std::uint32_t n = 1; n <= 6; ++n) {
    std::vector<KeywordId> ranked;
    for (std::uint32_t i = 0; i < n; ++i) ranked.emplace_back(i);
    do {
      for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
        std::vector<KeywordId> rel;
        for (std::uint32_t i = 0; i < n; ++i) {
          if (mask & (1u << i)) rel.emplace_back(i);
        }
        const auto r = test::reference_metrics(ranked, rel);
        worst = std::max({worst, std::abs(metric_map(ranked, rel) - r.ap), std::abs(metric_mrr(ranked, rel) - r.rr),
                          std::abs(metric_ndcg(ranked, rel) - r.ndcg)});
        ++checked;
      }
    } while (std::next_permutation(ranked.begin(), ranked.end()));
  }
  return {worst < 1e-12, std::to_string(checked) + " (ranking, relevant set) pairs, max abs error " + fmt(worst)};
}

Outcome proportionality(const cli::RunConfig& ref) {
  const auto rep = verify_proportionality(ref.verify.spec, 100000, ref.seed);
  return {rep.passed && rep.equal.l1 <= 0.02,
          "L1 " + fmt(rep.equal.l1) + " over " + std::to_string(rep.equal.draws) +
              " draws (unequal normalizers, not asserted: " + fmt(rep.general.l1) + ")"};
}

Outcome sampler_laws(const Pipeline& p) {
  const Universe u = Universe::deserialize(io::read_file(p.dir / "universe.txt"));
  const ClickLog log = ClickLog::deserialize(io::read_file(p.dir / "train.log"));
  const LogAggregates agg = aggregate(log, u);
  const cli::RunConfig ref;
  const WordVecTable wv = pretrained_word_vectors(u, ref.sampling.word_noise, ref.word_vector_seed());

  double worst_sum = 0.0;
  std::size_t pairs = 0;
  for (const auto& [key, clicks] : agg.clicks) {
    if (clicks == 0) continue;
    double total = 0.0;
    for (const auto& [k, pr] : sample_distribution(key.second, key.first, u, agg, wv)) total += pr;
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    ++pairs;
  }

  bool decreasing = true;
  for (double price : {0.5, 1.0, 3.0}) {
    for (double rel : {0.1, 0.5, 1.0}) {
      for (std::uint64_t n = 1; n < 1000; ++n) decreasing &= rpm_score(price, rel, n + 1) < rpm_score(price, rel, n);
    }
  }

  const auto samples = deserialize_samples(io::read_file(p.dir / "samples.tsv"));
  std::size_t bad_ratio = 0;
  for (const auto& s : samples) {
    const std::set<KeywordId> neg(s.negatives.begin(), s.negatives.end());
    if (s.positives.size() != 1 || s.negatives.size() != 4 || neg.size() != 4 || neg.count(s.positives[0])) ++bad_ratio;
  }
  return {worst_sum <= 1e-12 && decreasing && bad_ratio == 0 && !samples.empty(),
          "max |sum p - 1| " + fmt(worst_sum) + " over " + std::to_string(pairs) + " pairs; score decreasing in n_b: " +
              (decreasing ? "yes" : "no") + "; " + std::to_string(samples.size() - bad_ratio) + "/" +
              std::to_string(samples.size()) + " samples with 1 positive : 4 negatives"};
}

double eval_map_of(Pipeline& p, const fs::path& checkpoint) {
  const CliResult r = p.step({"eval", "--checkpoint", checkpoint.string(), "--format", "json"});
  for (const Json& j : json_lines(r.out)) {
    if (j["record"] == "metrics") return j["map"].get<double>();
  }
  return std::nan("");
}

Outcome learning_signal(Pipeline& p, double train_seconds) {
  std::vector<double> loss;
  std::istringstream in(io::read_file(p.dir / "trace.tsv"));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) loss.push_back(io::parse_double(io::split(line, '\t').at(1), "loss"));
  if (loss.size() < 2) return {false, "trace has fewer than two rows"};
  const double untrained = eval_map_of(p, p.dir / "model.ckpt.epoch0");
  const double trained = eval_map_of(p, p.dir / "model.ckpt");
  const bool pass = loss.back() <= 0.8 * loss.front() && trained > untrained && train_seconds <= 600.0;
  return {pass, "loss " + fmt(loss.front()) + " -> " + fmt(loss.back()) + " (ratio " + fmt(loss.back() / loss.front()) +
                    "); eval MAP untrained " + fmt(untrained) + " -> trained " + fmt(trained) + "; pipeline " +
                    fmt(train_seconds) + " s"};
}

Outcome ablation_direction(Pipeline& p) {
  const CliResult r = p.step({"ablate", "--format", "json"});
  std::map<std::string, double> map;
  for (const Json& j : json_lines(r.out)) {
    if (j["record"] == "ablation") map[j["model"].get<std::string>()] = j["map"].get<double>();
  }
  if (map.size() != 4 || !map.count("RQRF")) return {false, "ablate did not report four models: " + r.err};
  const double full = map["RQRF"];
  bool pass = true;
  std::string detail = "MAP RQRF " + fmt(full);
  for (const char* v : {"RQRF-CNN", "RQRF-Attention", "RQRF-MLP"}) {
    pass &= full >= map[v];
    detail += std::string(", ") + v + " " + fmt(map[v]);
  }
  return {pass, detail};
}

Outcome tail_advantage(Pipeline& p) {
  const CliResult r = p.step({"simulate", "--format", "json"});
  std::map<std::string, Json> slices;
  for (const Json& j : json_lines(r.out)) slices[j["slice"].get<std::string>()] = j;
  if (!slices.count("head") || !slices.count("tail") || !slices.count("held_out")) return {false, "missing slices: " + r.err};
  auto num = [](const Json& j) { return j.is_string() ? HUGE_VAL : j.get<double>(); };
  const double head = num(slices["head"]["lift"]);
  const double tail = num(slices["tail"]["lift"]);
  const double held_c = slices["held_out"]["control_coverage"].get<double>();
  const double held_t = slices["held_out"]["treatment_coverage"].get<double>();
  return {held_c == 0.0 && held_t > 0.0 && tail > head && head > 0.0,
          "held-out coverage control " + fmt(held_c) + " treatment " + fmt(held_t) + "; lift head " + fmt(head) +
              " tail " + fmt(tail) + " all " + fmt(num(slices["head&tail"]["lift"]))};
}

Outcome determinism(Pipeline& a, Pipeline& b) {
  std::vector<std::string> differing;
  std::size_t compared = 0;
  for (const char* f : {"universe.txt", "train.log", "eval.log", "samples.tsv", "model.ckpt", "trace.tsv"}) {
    ++compared;
    if (io::read_file(a.dir / f) != io::read_file(b.dir / f)) differing.push_back(f);
  }
  for (const auto& entry : fs::directory_iterator(a.dir)) {
    const std::string name = entry.path().filename().string();
    if (name.find(".epoch") == std::string::npos) continue;
    ++compared;
    if (!fs::exists(b.dir / name) || io::read_file(entry.path()) != io::read_file(b.dir / name)) differing.push_back(name);
  }
  const std::string ea = a.step({"eval"}).out;
  const std::string eb = b.step({"eval"}).out;
  ++compared;
  if (ea.empty() || ea != eb) differing.push_back("eval report");
  std::string detail = std::to_string(compared) + " artifacts/reports compared";
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty() && a.ok && b.ok, detail};
}

Outcome checkpoint_round_trip(Pipeline& p) {
  const std::string bytes = io::read_file(p.dir / "model.ckpt");
  const Checkpoint loaded = deserialize_checkpoint(bytes);
  const std::string again = serialize_checkpoint(loaded);
  const fs::path copy_dir = p.dir / "resaved";
  fs::create_directories(copy_dir);
  io::write_file(copy_dir / "model.ckpt", again);
  const std::string original = p.step({"eval"}).out;
  const std::string resaved = p.step({"eval", "--checkpoint", (copy_dir / "model.ckpt").string()}).out;
  const bool same_bytes = again == bytes;
  const bool same_report = !original.empty() && original == resaved;
  return {same_bytes && same_report, std::to_string(bytes.size()) + " bytes, save->load->save identical: " +
                                         (same_bytes ? "yes" : "no") + "; eval report identical: " +
                                         (same_report ? "yes" : "no")};
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / ("rqrf_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::map<int, std::pair<std::string, Outcome>> results;
  auto record = [&](int n, const std::string& title, const std::function<Outcome()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.detail += " [" + fmt(s) + " s]";
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << title << "): " << o.detail << std::endl;
    results[n] = {title, o};
  };

  const cli::RunConfig ref;
  record(1, "gradient correctness", gradient_check);
  record(2, "metric oracles", metric_oracles);
  record(3, "sampling proportional to RPM", [&] { return proportionality(ref); });

  Pipeline a(root / "a");
  const auto t0 = std::chrono::steady_clock::now();
  a.run_through_train();
  const double pipeline_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto guarded = [&](Pipeline& p, const std::function<Outcome()>& f) {
    return [&p, f] { return p.ok ? f() : Outcome{false, "pipeline failed: " + p.failure}; };
  };
  record(4, "sampler laws", guarded(a, [&] { return sampler_laws(a); }));
  record(5, "learning signal", guarded(a, [&] { return learning_signal(a, pipeline_seconds); }));
  record(6, "ablation direction", guarded(a, [&] { return ablation_direction(a); }));
  record(7, "tail advantage", guarded(a, [&] { return tail_advantage(a); }));

  Pipeline b(root / "b");
  b.run_through_train();
  record(8, "determinism", guarded(b, [&] { return determinism(a, b); }));
  record(9, "checkpoint round trip", guarded(a, [&] { return checkpoint_round_trip(a); }));

  fs::remove_all(root);
  int failed = 0;
  for (const auto& [n, r] : results) failed += !r.second.pass;
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << results.size() - failed << "/" << results.size() << std::endl;
  return failed ? 1 : 0;
}
