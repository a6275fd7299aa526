#include "afgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "afgan/error.hpp"

namespace afgan {

namespace {

constexpr char kMagic[4] = {'A', 'F', 'G', 'E'};

class Writer {
 public:
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void str(const std::string& s) {
    uint(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void f32(float f) { uint(std::bit_cast<std::uint32_t>(f)); }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <typename U>
  U uint(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::string str(const char* what) {
    const auto n = uint<std::uint32_t>(what);
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32(const char* what) { return std::bit_cast<float>(uint<std::uint32_t>(what)); }
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor<float>& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw FormatError("checkpoint has no tensor `" + name + "`");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, 4);
  w.uint(kCheckpointVersion);
  w.str(ckpt.config_text);
  w.uint(ckpt.epoch);
  w.uint(ckpt.step);
  w.uint(ckpt.adam_t_generator);
  w.uint(ckpt.adam_t_discriminator);
  w.uint(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.str(t.name);
    const auto& dims = t.value.shape().dims();
    w.uint(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) w.uint(static_cast<std::uint64_t>(d));
    for (float v : t.value.data()) w.f32(v);
  }
  w.str(ckpt.rng_state);
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic bytes)");
  (void)r.uint<std::uint32_t>("magic");
  const auto version = r.uint<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  c.config_text = r.str("config");
  c.epoch = r.uint<std::uint64_t>("epoch");
  c.step = r.uint<std::uint64_t>("step");
  c.adam_t_generator = r.uint<std::uint64_t>("generator step counter");
  c.adam_t_discriminator = r.uint<std::uint64_t>("discriminator step counter");
  const auto count = r.uint<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str("tensor name");
    const auto rank = r.uint<std::uint32_t>("tensor rank");
    if (rank > 8) throw FormatError("tensor `" + t.name + "` has implausible rank " + std::to_string(rank));
    std::vector<std::int64_t> dims;
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto extent = r.uint<std::uint64_t>("tensor dims");
      if (extent == 0 || extent > (std::uint64_t{1} << 40)) throw FormatError("tensor `" + t.name + "` has bad extent");
      dims.push_back(static_cast<std::int64_t>(extent));
      numel *= extent;
    }
    if (numel > r.remaining() / 4) throw FormatError("checkpoint truncated in data of tensor `" + t.name + "`");
    std::vector<float> values(numel);
    for (auto& v : values) v = r.f32("tensor data");
    t.value = Tensor<float>(Shape(dims), std::move(values));
    c.tensors.push_back(std::move(t));
  }
  c.rng_state = r.str("rng state");
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint at byte " + std::to_string(r.pos()));
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return decode_checkpoint(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace afgan
