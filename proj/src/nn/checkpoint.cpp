#include "rlcf/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "rlcf/minilang/vocab.hpp"

namespace rlcf::nn {

namespace {

constexpr char kMagic[8] = {'R', 'L', 'C', 'F', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void matrix(const Matrix& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    out_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(Scalar)));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ULL << 32)) throw CheckpointError("checkpoint: implausible string length");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  Matrix matrix() {
    const auto r = pod<std::int64_t>();
    const auto c = pod<std::int64_t>();
    if (r < 0 || c < 0 || r * c > (1LL << 30)) throw CheckpointError("checkpoint: implausible tensor shape");
    Matrix m(r, c);
    in_.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(Scalar)));
    check();
    return m;
  }

 private:
  void check() {
    if (!in_) throw CheckpointError("checkpoint: truncated file");
  }
  std::istream& in_;
};

void write_model(Writer& w, const ModelParams& m) {
  w.str(role_name(m.role));
  const ModelConfig& c = m.config;
  for (int v : {c.vocab_size, c.width, c.layers, c.heads, c.max_len, c.ffn_mult}) w.pod<std::int32_t>(v);
  w.pod<std::int64_t>(m.adam_step);
  w.pod<std::uint64_t>(m.params.size());
  for (const auto& [name, t] : m.params) {
    w.str(name);
    w.matrix(t.value);
    auto it = m.moments.find(name);
    const bool has = it != m.moments.end() && it->second.m.size() == t.value.size();
    w.pod<std::uint8_t>(has ? 1 : 0);
    if (has) {
      w.matrix(it->second.m);
      w.matrix(it->second.v);
    }
  }
}

Role role_from_name(const std::string& s) {
  for (Role r : {Role::Policy, Role::FrozenReference, Role::Critic, Role::Discriminator, Role::CompileCritic}) {
    if (s == role_name(r)) return r;
  }
  throw CheckpointError("checkpoint: unknown role " + s);
}

ModelParams read_model(Reader& r) {
  ModelParams m;
  m.role = role_from_name(r.str());
  ModelConfig& c = m.config;
  for (int* v : {&c.vocab_size, &c.width, &c.layers, &c.heads, &c.max_len, &c.ffn_mult}) *v = r.pod<std::int32_t>();
  m.adam_step = r.pod<std::int64_t>();
  const auto n = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.str();
    m.params[name] = Tensor(r.matrix());
    if (r.pod<std::uint8_t>()) {
      AdamMoments mo;
      mo.m = r.matrix();
      mo.v = r.matrix();
      m.moments[name] = std::move(mo);
    }
  }
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling and rename so a crash never leaves a torn checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    Writer w(out);
    out.write(kMagic, sizeof(kMagic));
    w.pod<std::uint32_t>(kCheckpointVersion);
    w.pod<std::uint64_t>(minilang::vocab_hash());
    w.str(ckpt.metadata);
    w.str(ckpt.rng_state);
    w.pod<std::uint64_t>(ckpt.models.size());
    for (const auto& [key, m] : ckpt.models) {
      w.str(key);
      write_model(w, m);
    }
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not a checkpoint: " + path.string());
  Reader r(in);
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.vocab_hash = r.pod<std::uint64_t>();
  if (ckpt.vocab_hash != minilang::vocab_hash()) throw CheckpointError("checkpoint vocabulary hash mismatch");
  ckpt.metadata = r.str();
  ckpt.rng_state = r.str();
  const auto n = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string key = r.str();
    ckpt.models.emplace(std::move(key), read_model(r));
  }
  return ckpt;
}

void save_model(const std::filesystem::path& path, const ModelParams& model) {
  Checkpoint c;
  c.models.emplace("model", model);
  save_checkpoint(path, c);
}

ModelParams load_model(const std::filesystem::path& path) {
  Checkpoint c = load_checkpoint(path);
  auto it = c.models.find("model");
  if (it == c.models.end()) throw CheckpointError("checkpoint holds no single model: " + path.string());
  return std::move(it->second);
}

}  // namespace rlcf::nn
