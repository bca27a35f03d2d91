#include "fit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fit/config.hpp"

namespace fit {

namespace {

constexpr char kMagic[4] = {'F', 'I', 'T', 'C'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw FormatError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(const std::string& b) : bytes_(b) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ModelParams& p) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::string cfg = to_text(p.config) + "iteration=" + std::to_string(p.iteration) + "\n" +
                          "seed=" + std::to_string(p.seed) + "\n";
  put_u32(out, checked_u32(cfg.size(), "config block"));
  out += cfg;
  put_u32(out, checked_u32(p.store.size(), "entry count"));
  for (const auto& [name, t] : p.store) {
    put_u32(out, checked_u32(name.size(), "name length"));
    out += name;
    put_u32(out, checked_u32(t.rank(), "rank"));
    for (std::size_t d : t.dims()) put_u32(out, checked_u32(d, "dimension"));
    for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

ModelParams deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint: bad magic (expected \"FITC\")");
  }
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  ModelParams p;
  std::map<std::string, std::string> rest;
  const std::uint32_t cfg_len = r.u32();
  p.config = model_config_from(parse_key_values(r.str(cfg_len)), &rest);
  for (const auto& [k, v] : rest) {
    if (k == "iteration") p.iteration = parse_size(k, v);
    else if (k == "seed") p.seed = parse_size(k, v);
    else throw FormatError("checkpoint config has unknown key '" + k + "'");
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 4) throw FormatError("entry '" + name + "' has invalid rank " + std::to_string(rank));
    Shape dims(rank);
    for (auto& d : dims) d = r.u32();
    Tensor t(dims);
    for (double& v : t.data()) v = r.f32();
    p.store.set(name, std::move(t));
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  p.check();
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& p) {
  const std::string bytes = serialize_checkpoint(p);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("cannot write checkpoint '" + path.string() + "'");
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

ModelParams to_float32(const ModelParams& p) {
  ModelParams out = p;
  for (auto& [_, t] : out.store)
    for (double& v : t.data()) v = static_cast<float>(v);
  return out;
}

}  // namespace fit
