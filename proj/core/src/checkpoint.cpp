#include "ldn/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "ldn/digest.h"
#include "ldn/error.h"

namespace ldn {

static_assert(std::endian::native == std::endian::little,
              "params.bin is written in host byte order");

namespace {

constexpr char kMagic[4] = {'L', 'D', 'N', 'P'};
constexpr std::uint32_t kBlobVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, s_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  void doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, s_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > s_.size()) throw IntegrityError("params.bin truncated");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& data) {
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, p);
}

std::string blob_digest(const std::string& blob) {
  return sha256_hex(std::string_view(blob));
}

}  // namespace

std::string Checkpoint::id() const {
  return meta.kind + "@" + blob_sha256.substr(0, 12);
}

void Checkpoint::apply_to(const nn::ParameterList& targets) const {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& p : params) by_name[p.name] = &p;
  for (nn::Parameter* p : targets) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw SchemaError("checkpoint " + id() + " lacks parameter " + p->name);
    }
    if (!(it->second->value.shape() == p->value.shape())) {
      throw SchemaError("parameter " + p->name + " has shape " +
                        it->second->value.shape().str() + " in checkpoint, " +
                        p->value.shape().str() + " in model");
    }
    p->value = it->second->value;
  }
  if (by_name.size() != targets.size()) {
    throw SchemaError("checkpoint " + id() + " holds " +
                      std::to_string(by_name.size()) + " parameters, model has " +
                      std::to_string(targets.size()));
  }
}

Checkpoint save_checkpoint(const std::filesystem::path& dir,
                           const nn::ParameterList& params,
                           const CheckpointMeta& meta) {
  std::filesystem::create_directories(dir);
  std::string blob(kMagic, 4);
  put<std::uint32_t>(blob, kBlobVersion);
  put<std::uint32_t>(blob, static_cast<std::uint32_t>(params.size()));
  Checkpoint ck;
  ck.meta = meta;
  for (const nn::Parameter* p : params) {
    put<std::uint32_t>(blob, static_cast<std::uint32_t>(p->name.size()));
    blob += p->name;
    const auto& s = p->value.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put<std::int32_t>(blob, d);
    blob.append(reinterpret_cast<const char*>(p->value.data()),
                p->value.size() * sizeof(double));
    ck.params.push_back({p->name, p->value});
  }
  ck.blob_sha256 = blob_digest(blob);

  nlohmann::json j = meta.extra;
  j["schema_version"] = meta.schema_version;
  j["kind"] = meta.kind;
  j["config_hash"] = meta.config_hash;
  j["seed"] = meta.seed;
  j["step"] = meta.step;
  j["params_bytes"] = blob.size();
  j["params_sha256"] = ck.blob_sha256;
  write_file(dir / "params.bin", blob);
  write_file(dir / "meta.json", j.dump(2) + "\n");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           const std::optional<std::string>& expected_kind,
                           const std::optional<std::string>& expected_config_hash) {
  if (!std::filesystem::exists(dir / "meta.json") ||
      !std::filesystem::exists(dir / "params.bin")) {
    throw IoError("no checkpoint at " + dir.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("meta.json unreadable: " + std::string(e.what()));
  }

  Checkpoint ck;
  auto& m = ck.meta;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kCheckpointSchemaVersion) {
      throw SchemaError("checkpoint schema version " +
                        std::to_string(m.schema_version) + ", expected " +
                        std::to_string(kCheckpointSchemaVersion));
    }
    m.kind = j.at("kind").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.step = j.at("step").get<long>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("meta.json incomplete: " + std::string(e.what()));
  }
  if (expected_kind && m.kind != *expected_kind) {
    throw SchemaError("checkpoint at " + dir.string() + " is a '" + m.kind +
                      "', expected '" + *expected_kind + "'");
  }
  if (expected_config_hash && m.config_hash != *expected_config_hash) {
    throw SchemaError("config hash mismatch: checkpoint " + m.config_hash +
                      ", current config " + *expected_config_hash);
  }

  const std::string blob = read_file(dir / "params.bin");
  const auto want_bytes = j.value("params_bytes", std::size_t{0});
  if (blob.size() != want_bytes) {
    throw IntegrityError("params.bin is " + std::to_string(blob.size()) +
                         " bytes, meta.json records " +
                         std::to_string(want_bytes));
  }
  ck.blob_sha256 = blob_digest(blob);
  if (ck.blob_sha256 != j.value("params_sha256", std::string())) {
    throw IntegrityError("params.bin digest mismatch");
  }

  Reader r(blob);
  if (r.bytes(4) != std::string(kMagic, 4) ||
      r.get<std::uint32_t>() != kBlobVersion) {
    throw IntegrityError("params.bin header invalid");
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.bytes(r.get<std::uint32_t>());
    nn::Shape s;
    s.n = r.get<std::int32_t>();
    s.c = r.get<std::int32_t>();
    s.h = r.get<std::int32_t>();
    s.w = r.get<std::int32_t>();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw IntegrityError("negative extent in " + t.name);
    }
    t.value = nn::Tensor(s);
    r.doubles(t.value.data(), t.value.size());
    ck.params.push_back(std::move(t));
  }
  if (!r.done()) throw IntegrityError("trailing bytes in params.bin");

  m.extra = j;
  for (const char* k : {"schema_version", "kind", "config_hash", "seed", "step",
                        "params_bytes", "params_sha256"}) {
    m.extra.erase(k);
  }
  return ck;
}

}  // namespace ldn
