#include "rqrf/model.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "rqrf/corpus.hpp"
#include "rqrf/error.hpp"
#include "rqrf/io.hpp"
#include "rqrf/random.hpp"
#include "wire.hpp"

namespace rqrf {

namespace {

constexpr char kMagic[4] = {'R', 'Q', 'R', 'F'};
constexpr std::uint32_t kVersion = 1;

std::string config_echo(const Checkpoint& c) {
  const ModelConfig& m = c.model.config;
  std::ostringstream out;
  out << "t_max=" << m.tower.t_max << '\n'
      << "c_max=" << m.tower.c_max << '\n'
      << "word_dim=" << m.tower.word_dim << '\n'
      << "char_dim=" << m.tower.char_dim << '\n'
      << "hidden_dim=" << m.tower.hidden_dim << '\n'
      << "out_dim=" << m.tower.out_dim << '\n'
      << "n_blocks=" << m.tower.n_blocks << '\n'
      << "use_cnn=" << m.flags.use_cnn << '\n'
      << "use_attention=" << m.flags.use_attention << '\n'
      << "use_mlp=" << m.flags.use_mlp << '\n'
      << "gamma=" << io::format_double(m.gamma) << '\n'
      << "universe_fingerprint=" << c.universe_fingerprint << '\n';
  return std::move(out).str();
}

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

}  // namespace

void ModelConfig::validate() const {
  tower.validate(flags);
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma", "must be > 0");
}

template <class Real>
ModelParams<Real> ModelParams<Real>::zeros(ModelConfig config, Vocabulary vocab) {
  config.tower.word_vocab = static_cast<int>(vocab.word_count());
  config.tower.char_vocab = static_cast<int>(vocab.char_count());
  config.validate();
  ModelParams m;
  m.config = config;
  m.vocab = std::move(vocab);
  m.query = TowerParams<Real>::zeros(config.tower, config.flags);
  m.keyword = TowerParams<Real>::zeros(config.tower, config.flags);
  return m;
}

template <class Real>
void initialize(ModelParams<Real>& model, std::uint64_t seed) {
  std::uint64_t stream = 0;
  model.visit([&](const std::string& name, Real* data, const std::vector<std::uint32_t>& dims) {
    Rng rng(derive_seed(seed, stream++));
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    if (dims.size() == 1) {
      std::fill(data, data + n, Real(0));
      return;
    }
    const double r = std::sqrt(6.0 / static_cast<double>(dims[0] + dims[1]));
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<Real>(rng.uniform(-r, r));
    if (name.ends_with("word_emb") || name.ends_with("char_emb")) std::fill(data, data + dims[1], Real(0));
  });
}

std::uint64_t universe_fingerprint(const Universe& universe) { return io::fingerprint(universe.serialize()); }

std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out(kMagic, 4);
  wire::put_u32(out, kVersion);
  std::uint32_t count = 0;
  c.model.visit([&](const std::string&, const float*, const std::vector<std::uint32_t>&) { ++count; });
  wire::put_u32(out, count);
  c.model.visit([&](const std::string& name, const float* data, const std::vector<std::uint32_t>& dims) {
    wire::put_string(out, name);
    wire::put_u32(out, static_cast<std::uint32_t>(dims.size()));
    std::size_t n = 1;
    for (auto d : dims) {
      wire::put_u32(out, d);
      n *= d;
    }
    for (std::size_t i = 0; i < n; ++i) wire::put_f32(out, data[i]);
  });
  c.model.vocab.write(out);
  wire::put_string(out, config_echo(c));
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view in) {
  if (in.size() < 4 || in.substr(0, 4) != std::string_view(kMagic, 4)) throw ArtifactError("checkpoint: bad magic");
  in.remove_prefix(4);
  const std::uint32_t version = wire::get_u32(in);
  if (version != kVersion) throw ArtifactError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t count = wire::get_u32(in);
  std::map<std::string, RawTensor> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = wire::get_string(in);
    RawTensor raw;
    const std::uint32_t rank = wire::get_u32(in);
    if (rank == 0 || rank > 2) throw ArtifactError("checkpoint: tensor '" + name + "' has unsupported rank");
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      raw.dims.push_back(wire::get_u32(in));
      n *= raw.dims.back();
    }
    if (in.size() < n * 4) throw ArtifactError("checkpoint: truncated tensor '" + name + "'");
    raw.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) raw.data[i] = wire::get_f32(in);
    if (!tensors.emplace(name, std::move(raw)).second) throw ArtifactError("checkpoint: duplicate tensor '" + name + "'");
  }
  Vocabulary vocab = Vocabulary::read(in);
  const std::string echo = wire::get_string(in);
  if (!in.empty()) throw ArtifactError("checkpoint: trailing bytes");

  std::map<std::string, std::string> kv;
  for (auto line : io::split(echo, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ArtifactError("checkpoint: malformed config echo");
    kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ArtifactError(std::string("checkpoint: config echo lacks ") + key);
    return it->second;
  };
  auto get_int = [&](const char* key) { return static_cast<int>(io::parse_int(get(key), key)); };
  ModelConfig cfg;
  cfg.tower.t_max = get_int("t_max");
  cfg.tower.c_max = get_int("c_max");
  cfg.tower.word_dim = get_int("word_dim");
  cfg.tower.char_dim = get_int("char_dim");
  cfg.tower.hidden_dim = get_int("hidden_dim");
  cfg.tower.out_dim = get_int("out_dim");
  cfg.tower.n_blocks = get_int("n_blocks");
  cfg.flags.use_cnn = get_int("use_cnn") != 0;
  cfg.flags.use_attention = get_int("use_attention") != 0;
  cfg.flags.use_mlp = get_int("use_mlp") != 0;
  cfg.gamma = io::parse_double(get("gamma"), "gamma");

  Checkpoint c;
  c.universe_fingerprint = io::parse_u64(get("universe_fingerprint"), "universe_fingerprint");
  try {
    c.model = ModelParams<float>::zeros(cfg, std::move(vocab));
  } catch (const ConfigError& e) {
    throw ArtifactError(std::string("checkpoint: invalid config echo: ") + e.what());
  }
  std::size_t matched = 0;
  c.model.visit([&](const std::string& name, float* data, const std::vector<std::uint32_t>& dims) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ArtifactError("checkpoint: missing tensor '" + name + "'");
    if (it->second.dims != dims) throw ArtifactError("checkpoint: shape mismatch for '" + name + "'");
    std::copy(it->second.data.begin(), it->second.data.end(), data);
    ++matched;
  });
  if (matched != tensors.size()) throw ArtifactError("checkpoint: unexpected extra tensors");
  return c;
}

TokenizedCorpus TokenizedCorpus::build(const Universe& universe, const Vocabulary& vocab, const TowerConfig& tower) {
  TokenizedCorpus c;
  c.queries.reserve(universe.queries.size());
  for (std::size_t q = 0; q < universe.queries.size(); ++q) {
    c.queries.push_back(tokenize(universe.query_text(QueryId(q)), vocab, tower.t_max, tower.c_max));
  }
  c.keywords.reserve(universe.keywords.size());
  for (std::size_t k = 0; k < universe.keywords.size(); ++k) {
    c.keywords.push_back(tokenize(universe.keyword_text(KeywordId(k)), vocab, tower.t_max, tower.c_max));
  }
  return c;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template void initialize<float>(ModelParams<float>&, std::uint64_t);
template void initialize<double>(ModelParams<double>&, std::uint64_t);

}  // namespace rqrf
