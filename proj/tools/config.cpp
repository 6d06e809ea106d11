#include "config.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "rqrf/error.hpp"
#include "rqrf/io.hpp"
#include "rqrf/random.hpp"

namespace rqrf::cli {

namespace {

struct Field {
  std::string key;
  std::function<void(const std::string&, const std::string&)> set;  // (qualified key, value)
  std::function<std::string()> get;
};

struct Section {
  std::string name;
  std::vector<Field> fields;
};

Field int_field(std::string key, int& v) {
  return {key,
          [&v](const std::string& k, const std::string& s) {
            try {
              v = io::parse_int(s, k);
            } catch (const ArtifactError&) {
              throw ConfigError(k, "expected an integer, got '" + s + "'");
            }
          },
          [&v] { return std::to_string(v); }};
}

Field u64_field(std::string key, std::uint64_t& v) {
  return {key,
          [&v](const std::string& k, const std::string& s) {
            try {
              v = io::parse_u64(s, k);
            } catch (const ArtifactError&) {
              throw ConfigError(k, "expected a non-negative integer, got '" + s + "'");
            }
          },
          [&v] { return std::to_string(v); }};
}

Field double_field(std::string key, double& v) {
  return {key,
          [&v](const std::string& k, const std::string& s) {
            try {
              v = io::parse_double(s, k);
            } catch (const ArtifactError&) {
              throw ConfigError(k, "expected a number, got '" + s + "'");
            }
          },
          [&v] { return io::format_double(v); }};
}

Field bool_field(std::string key, bool& v) {
  return {key,
          [&v](const std::string& k, const std::string& s) {
            if (s == "true" || s == "1") v = true;
            else if (s == "false" || s == "0") v = false;
            else throw ConfigError(k, "expected true or false, got '" + s + "'");
          },
          [&v] { return std::string(v ? "true" : "false"); }};
}

Field path_field(std::string key, std::filesystem::path& v) {
  return {key,
          [&v](const std::string& k, const std::string& s) {
            if (s.empty()) throw ConfigError(k, "path must not be empty");
            v = s;
          },
          [&v] { return v.string(); }};
}

Field mode_field(std::string key, TreatmentMode& v) {
  return {key,
          [&v](const std::string& k, const std::string& s) {
            if (s == "augment") v = TreatmentMode::kAugment;
            else if (s == "model") v = TreatmentMode::kModelOnly;
            else throw ConfigError(k, "expected augment or model, got '" + s + "'");
          },
          [&v] { return std::string(v == TreatmentMode::kAugment ? "augment" : "model"); }};
}

Field schedule_field(std::string key, LrSchedule& v) {
  return {key,
          [&v](const std::string& k, const std::string& s) {
            if (s == "constant") v = LrSchedule::kConstant;
            else if (s == "linear") v = LrSchedule::kLinear;
            else throw ConfigError(k, "expected constant or linear, got '" + s + "'");
          },
          [&v] { return std::string(v == LrSchedule::kLinear ? "linear" : "constant"); }};
}

std::vector<Section> schema(RunConfig& c) {
  GenConfig& g = c.generation;
  TowerConfig& t = c.model.tower;
  return {
      {"global", {u64_field("seed", c.seed)}},
      {"generation",
       {int_field("n_categories", g.n_categories), int_field("words_per_category", g.words_per_category),
        int_field("subtopics_per_category", g.subtopics_per_category),
        int_field("keywords_per_category", g.keywords_per_category), int_field("ads_per_category", g.ads_per_category),
        int_field("queries_per_category", g.queries_per_category), int_field("topic_dim", g.topic_dim),
        double_field("zipf_s", g.zipf_s), double_field("price_mu", g.price_mu),
        double_field("price_sigma", g.price_sigma), double_field("click_kappa", g.click_kappa),
        double_field("legacy_bias", g.legacy_bias), double_field("legacy_noise", g.legacy_noise),
        double_field("tail_fraction", g.tail_fraction), int_field("min_keywords_per_ad", g.min_keywords_per_ad),
        int_field("max_keywords_per_ad", g.max_keywords_per_ad), int_field("min_keyword_words", g.min_keyword_words),
        int_field("max_keyword_words", g.max_keyword_words), int_field("min_query_words", g.min_query_words),
        int_field("max_query_words", g.max_query_words), double_field("subtopic_spread", g.subtopic_spread),
        double_field("word_spread", g.word_spread), double_field("ad_spread", g.ad_spread),
        double_field("paraphrase_rate", g.paraphrase_rate)}},
      {"log", {u64_field("train_requests", c.log.train_requests), u64_field("eval_requests", c.log.eval_requests)}},
      {"sampling", {int_field("neg_ratio", c.sampling.neg_ratio), double_field("word_noise", c.sampling.word_noise)}},
      {"model",
       {int_field("t_max", t.t_max), int_field("c_max", t.c_max), int_field("word_dim", t.word_dim),
        int_field("char_dim", t.char_dim), int_field("hidden_dim", t.hidden_dim), int_field("out_dim", t.out_dim),
        int_field("n_blocks", t.n_blocks), double_field("gamma", c.model.gamma),
        bool_field("use_cnn", c.model.flags.use_cnn), bool_field("use_attention", c.model.flags.use_attention),
        bool_field("use_mlp", c.model.flags.use_mlp)}},
      {"training",
       {int_field("epochs", c.training.epochs), int_field("batch_size", c.training.batch_size),
        double_field("learning_rate", c.training.learning_rate), double_field("beta1", c.training.beta1),
        double_field("beta2", c.training.beta2), double_field("epsilon", c.training.epsilon),
        schedule_field("lr_schedule", c.training.schedule)}},
      {"simulation",
       {u64_field("requests", c.simulation.n_requests), int_field("top_k", c.simulation.top_k),
        double_field("head_fraction", c.simulation.head_fraction), mode_field("treatment", c.simulation.mode)}},
      {"verify",
       {int_field("keywords", c.verify.spec.n_keywords), int_field("ads", c.verify.spec.n_ads),
        int_field("keywords_per_ad", c.verify.spec.keywords_per_ad), int_field("topic_dim", c.verify.spec.topic_dim),
        int_field("max_clicks_per_ad", c.verify.spec.max_clicks_per_ad), u64_field("draws", c.verify.draws),
        double_field("threshold", c.verify.spec.threshold)}},
      {"paths",
       {path_field("universe", c.paths.universe), path_field("train_log", c.paths.train_log),
        path_field("eval_log", c.paths.eval_log), path_field("samples", c.paths.samples),
        path_field("checkpoint", c.paths.checkpoint), path_field("trace", c.paths.trace)}},
  };
}

void resolve(std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.is_relative() && !base.empty()) p = base / p;
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text, const std::filesystem::path& base_dir) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config", "line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig c;
  const auto sections = schema(c);
  for (const auto& [name, body] : tree) {
    auto sec = std::find_if(sections.begin(), sections.end(), [&](const Section& s) { return s.name == name; });
    if (sec == sections.end()) {
      if (body.empty() && !body.data().empty()) throw ConfigError(name, "keys must live in a [section]");
      throw ConfigError(name, "unknown section");
    }
    for (const auto& [key, value] : body) {
      const std::string qualified = name + "." + key;
      auto f = std::find_if(sec->fields.begin(), sec->fields.end(), [&](const Field& x) { return x.key == key; });
      if (f == sec->fields.end()) throw ConfigError(qualified, "unknown key");
      f->set(qualified, value.data());
    }
  }
  for (auto* p : {&c.paths.universe, &c.paths.train_log, &c.paths.eval_log, &c.paths.samples, &c.paths.checkpoint,
                  &c.paths.trace}) {
    resolve(*p, base_dir);
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const ArtifactError& e) {
    throw ConfigError("config", e.what());
  }
  RunConfig c = parse(text, path.parent_path());
  if (const char* env = std::getenv("RQRF_SEED"); env && *env) {
    try {
      c.seed = io::parse_u64(env, "RQRF_SEED");
    } catch (const ArtifactError&) {
      throw ConfigError("RQRF_SEED", "expected a non-negative integer, got '" + std::string(env) + "'");
    }
  }
  c.finalize();
  return c;
}

void RunConfig::finalize() {
  training.seed = seed;
  simulation.seed = seed;
  generation.validate();
  ModelConfig shape = model;  // vocabulary sizes are only known once a universe exists
  shape.tower.word_vocab = std::max(shape.tower.word_vocab, 2);
  shape.tower.char_vocab = std::max(shape.tower.char_vocab, 2);
  shape.validate();
  training.validate();
  simulation.validate();
  verify.spec.validate();
  if (log.train_requests == 0) throw ConfigError("log.train_requests", "must be > 0");
  if (log.eval_requests == 0) throw ConfigError("log.eval_requests", "must be > 0");
  if (sampling.neg_ratio < 1) throw ConfigError("sampling.neg_ratio", "must be >= 1");
  if (!(sampling.word_noise >= 0.0)) throw ConfigError("sampling.word_noise", "must be >= 0");
  if (verify.draws == 0) throw ConfigError("verify.draws", "must be > 0");
}

std::string RunConfig::to_ini() const {
  RunConfig copy = *this;
  std::ostringstream out;
  bool first = true;
  for (const Section& s : schema(copy)) {
    if (!first) out << '\n';
    first = false;
    out << '[' << s.name << "]\n";
    for (const Field& f : s.fields) out << f.key << " = " << f.get() << '\n';
  }
  return std::move(out).str();
}

std::uint64_t RunConfig::train_log_seed() const { return derive_seed(seed, 10); }
std::uint64_t RunConfig::eval_log_seed() const { return derive_seed(seed, 11); }
std::uint64_t RunConfig::word_vector_seed() const { return derive_seed(seed, 12); }
std::uint64_t RunConfig::sample_seed() const { return derive_seed(seed, 13); }

}  // namespace rqrf::cli
