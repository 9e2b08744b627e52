#include "rail/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rail/errors.hpp"

namespace rail {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::span<const std::byte> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex({reinterpret_cast<const std::byte*>(text.data()), text.size()});
}

namespace {

constexpr char kTrajMagic[8] = {'R', 'A', 'I', 'L', 'T', 'R', 'J', '1'};
constexpr char kCkptMagic[8] = {'R', 'A', 'I', 'L', 'C', 'K', 'P', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void f64s(const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  std::vector<std::byte>& buffer() { return buf_; }

 private:
  std::vector<std::byte> buf_;
};

class Reader {
 public:
  Reader(std::span<const std::byte> data, std::string what) : data_(data), what_(std::move(what)) {}
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw FormatError(what_ + ": truncated file");
  }
  std::span<const std::byte> bytes(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U uint() {
    auto s = bytes(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(std::to_integer<unsigned>(s[i])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  Vec f64s(std::size_t n) {
    Vec v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = f64();
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::vector<std::byte> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

void write_file(const fs::path& path, std::span<const std::byte> data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

json parse_header(std::span<const std::byte> s, const std::string& what) {
  try {
    return json::parse(std::string(reinterpret_cast<const char*>(s.data()), s.size()));
  } catch (const json::exception& e) {
    throw FormatError(what + ": malformed header: " + e.what());
  }
}

void check_magic(Reader& r, const char (&magic)[8], const std::string& what) {
  auto m = r.bytes(8);
  if (std::memcmp(m.data(), magic, 8) != 0) throw FormatError(what + ": bad magic");
}

}  // namespace

void write_trajectories(const fs::path& path, const TrajectoryFileHeader& header,
                        const std::vector<Trajectory>& trajectories) {
  const json h = {{"format_version", header.format_version},
                  {"env_id", header.env_id},
                  {"obs_dim", header.obs_dim},
                  {"action_dim", header.action_dim},
                  {"gamma", header.gamma},
                  {"generator_seed", header.generator_seed},
                  {"policy_checkpoint_hash", header.policy_checkpoint_hash},
                  {"n_trajectories", trajectories.size()}};
  Writer payload;
  for (const auto& t : trajectories) {
    require_shape(t.length() >= 1, "write_trajectories: empty trajectory");
    payload.uint<std::uint64_t>(t.seed);
    payload.uint<std::uint32_t>(static_cast<std::uint32_t>(t.length()));
    for (const auto& tr : t.transitions) {
      require_shape(tr.state.size() == header.obs_dim && tr.action.size() == header.action_dim,
                    "write_trajectories: transition dims disagree with header");
      payload.f64s(tr.state);
    }
    payload.f64s(t.transitions.back().next_state);
    for (const auto& tr : t.transitions) payload.f64s(tr.action);
    for (const auto& tr : t.transitions) payload.f64(tr.true_cost);
  }
  const std::string header_text = h.dump();
  Writer file;
  file.bytes(kTrajMagic, 8);
  file.uint<std::uint32_t>(static_cast<std::uint32_t>(header_text.size()));
  file.bytes(header_text.data(), header_text.size());
  auto& p = payload.buffer();
  file.bytes(p.data(), p.size());
  const std::string digest = sha256_hex(p);
  file.bytes(digest.data(), digest.size());
  write_file(path, file.buffer());
}

std::vector<Trajectory> read_trajectories(const fs::path& path, TrajectoryFileHeader* header_out) {
  const std::string what = "trajectory file '" + path.string() + "'";
  const auto data = read_file(path);
  Reader r(data, what);
  check_magic(r, kTrajMagic, what);
  const auto header_len = r.uint<std::uint32_t>();
  const json h = parse_header(r.bytes(header_len), what);
  TrajectoryFileHeader header;
  try {
    header.format_version = h.at("format_version").get<int>();
    if (header.format_version != kTrajectoryFormatVersion)
      throw FormatError(what + ": unsupported format_version " + std::to_string(header.format_version));
    header.env_id = h.at("env_id").get<std::string>();
    header.obs_dim = h.at("obs_dim").get<int>();
    header.action_dim = h.at("action_dim").get<int>();
    header.gamma = h.at("gamma").get<double>();
    header.generator_seed = h.at("generator_seed").get<std::uint64_t>();
    header.policy_checkpoint_hash = h.at("policy_checkpoint_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(what + ": header field missing or mistyped: " + e.what());
  }
  if (header.obs_dim < 1 || header.action_dim < 1) throw FormatError(what + ": invalid dims");
  const std::size_t n = h.value("n_trajectories", std::size_t{0});

  constexpr std::size_t kDigestLen = 64;
  if (r.remaining() < kDigestLen) throw FormatError(what + ": truncated file");
  const std::size_t payload_begin = r.pos();
  const std::size_t payload_len = r.remaining() - kDigestLen;
  const auto payload = std::span<const std::byte>(data).subspan(payload_begin, payload_len);
  const auto stored = std::span<const std::byte>(data).subspan(payload_begin + payload_len, kDigestLen);
  if (sha256_hex(payload) != std::string(reinterpret_cast<const char*>(stored.data()), kDigestLen))
    throw FormatError(what + ": payload checksum mismatch");

  Reader pr(payload, what);
  const auto od = static_cast<std::size_t>(header.obs_dim);
  const auto ad = static_cast<std::size_t>(header.action_dim);
  std::vector<Trajectory> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory t;
    t.seed = pr.uint<std::uint64_t>();
    const auto len = pr.uint<std::uint32_t>();
    if (len == 0) throw FormatError(what + ": zero-length trajectory");
    const Vec obs = pr.f64s((len + 1) * od);
    const Vec act = pr.f64s(len * ad);
    const Vec cost = pr.f64s(len);
    t.transitions.resize(len);
    for (std::uint32_t k = 0; k < len; ++k) {
      auto& tr = t.transitions[k];
      tr.state = obs.segment(k * od, od);
      tr.next_state = obs.segment((k + 1) * od, od);
      tr.action = act.segment(k * ad, ad);
      tr.true_cost = cost(k);
    }
    out.push_back(std::move(t));
  }
  if (pr.remaining() != 0) throw FormatError(what + ": trailing bytes; declared dims do not divide payload");
  if (header_out) *header_out = header;
  return out;
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Policy: return "policy";
    case ModelKind::Discriminator: return "discriminator";
    case ModelKind::Baseline: return "baseline";
  }
  return "?";
}

namespace {

ModelKind kind_from_string(const std::string& s, const std::string& what) {
  if (s == "policy") return ModelKind::Policy;
  if (s == "discriminator") return ModelKind::Discriminator;
  if (s == "baseline") return ModelKind::Baseline;
  throw FormatError(what + ": unknown model kind '" + s + "'");
}

}  // namespace

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  Writer payload;
  payload.f64s(ckpt.payload);
  const json manifest = {
      {"format_version", kCheckpointFormatVersion},
      {"kind", to_string(ckpt.kind)},
      {"mlp", {{"input_dim", ckpt.spec.input_dim}, {"hidden_dims", ckpt.spec.hidden_dims}, {"output_dim", ckpt.spec.output_dim}}},
      {"parameter_count", ckpt.payload.size()},
      {"config_digest", ckpt.config_digest},
      {"rng_state", ckpt.rng_state},
      {"payload_digest", sha256_hex(payload.buffer())},
      {"config", ckpt.config},
  };
  const std::string text = manifest.dump();
  Writer file;
  file.bytes(kCkptMagic, 8);
  file.uint<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  file.bytes(text.data(), text.size());
  file.bytes(payload.buffer().data(), payload.buffer().size());
  write_file(path, file.buffer());
}

Checkpoint read_checkpoint(const fs::path& path) {
  const std::string what = "checkpoint '" + path.string() + "'";
  const auto data = read_file(path);
  Reader r(data, what);
  check_magic(r, kCkptMagic, what);
  const auto len = r.uint<std::uint32_t>();
  const json m = parse_header(r.bytes(len), what);
  Checkpoint c;
  std::size_t count = 0;
  std::string payload_digest;
  try {
    const int version = m.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw FormatError(what + ": unsupported format_version " + std::to_string(version));
    c.kind = kind_from_string(m.at("kind").get<std::string>(), what);
    c.spec.input_dim = m.at("mlp").at("input_dim").get<int>();
    c.spec.hidden_dims = m.at("mlp").at("hidden_dims").get<std::vector<int>>();
    c.spec.output_dim = m.at("mlp").at("output_dim").get<int>();
    count = m.at("parameter_count").get<std::size_t>();
    c.config_digest = m.at("config_digest").get<std::string>();
    c.rng_state = m.at("rng_state").get<std::string>();
    payload_digest = m.at("payload_digest").get<std::string>();
    c.config = m.at("config");
  } catch (const json::exception& e) {
    throw FormatError(what + ": manifest field missing or mistyped: " + e.what());
  }
  if (r.remaining() != 8 * count) throw FormatError(what + ": payload length does not match parameter_count");
  if (sha256_hex(std::span<const std::byte>(data).subspan(r.pos())) != payload_digest)
    throw FormatError(what + ": payload digest mismatch");
  if (!c.config.is_null() && sha256_hex(c.config.dump(2)) != c.config_digest)
    throw FormatError(what + ": config digest mismatch");
  c.payload = r.f64s(count);
  return c;
}

std::string file_digest(const fs::path& path) { return sha256_hex(read_file(path)); }

Checkpoint policy_checkpoint(const GaussianPolicy& policy) {
  Checkpoint c;
  c.kind = ModelKind::Policy;
  c.spec = policy.mean_net().spec();
  c.payload = policy.params();
  return c;
}

GaussianPolicy policy_from_checkpoint(const Checkpoint& ckpt, int expected_obs_dim, int expected_action_dim) {
  if (ckpt.kind != ModelKind::Policy) throw FormatError("checkpoint is not a policy");
  require_shape(ckpt.spec.input_dim == expected_obs_dim && ckpt.spec.output_dim == expected_action_dim,
                "policy checkpoint dims (" + std::to_string(ckpt.spec.input_dim) + " -> " +
                    std::to_string(ckpt.spec.output_dim) + ") do not match the environment (" +
                    std::to_string(expected_obs_dim) + " -> " + std::to_string(expected_action_dim) + ")");
  GaussianPolicy p(ckpt.spec, 0.0);
  require_shape(static_cast<std::size_t>(ckpt.payload.size()) == p.param_count(),
                "policy checkpoint parameter count does not match its MlpSpec");
  p.set_params(ckpt.payload);
  return p;
}

Checkpoint disc_checkpoint(const Discriminator& disc) {
  Checkpoint c;
  c.kind = ModelKind::Discriminator;
  c.spec = disc.net().spec();
  const auto n = disc.params().size();
  const auto d = disc.input_mean().size();
  c.payload.resize(n + 2 * d);
  c.payload << disc.params(), disc.input_mean(), disc.input_std();
  return c;
}

Discriminator disc_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::Discriminator) throw FormatError("checkpoint is not a discriminator");
  Discriminator d(ckpt.spec);
  const auto n = static_cast<Eigen::Index>(ckpt.spec.param_count());
  const auto in = ckpt.spec.input_dim;
  require_shape(ckpt.payload.size() == n + 2 * in, "discriminator checkpoint payload length mismatch");
  d.set_params(ckpt.payload.head(n));
  d.set_normalization(ckpt.payload.segment(n, in), ckpt.payload.tail(in));
  return d;
}

Checkpoint baseline_checkpoint(const ValueBaseline& baseline) {
  Checkpoint c;
  c.kind = ModelKind::Baseline;
  c.spec = baseline.net().spec();
  c.payload.resize(baseline.net().params().size() + 2);
  c.payload << baseline.net().params(), baseline.target_mean(), baseline.target_std();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::byte*>(text.data()), text.size()});
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rail
