#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dspo/error.hpp"
#include "dspo/model.hpp"

namespace dspo::model {
namespace {

constexpr char kMagic[8] = {'D', 'S', 'P', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out += s;
}

void put_kv(std::string& out, const std::map<std::string, std::string>& kv) {
  put<std::uint64_t>(out, kv.size());
  for (const auto& [k, v] : kv) {
    put_str(out, k);
    put_str(out, v);
  }
}

class Cursor {
 public:
  Cursor(const std::string& bytes, std::size_t end, std::string path) : bytes_(bytes), end_(end), path_(std::move(path)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
  }
  std::string get_str() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::map<std::string, std::string> get_kv() {
    std::map<std::string, std::string> kv;
    const auto n = get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string k = get_str();
      kv[k] = get_str();
    }
    return kv;
  }
  void need(std::uint64_t n) const {
    if (n > end_ - pos_) fail(ErrorKind::Data, path_ + ": checkpoint truncated at byte " + std::to_string(pos_));
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::map<std::string, std::string>& metadata) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put_kv(out, params.config().to_map());
  put_kv(out, metadata);
  put<std::uint64_t>(out, params.tensors().size());
  for (const auto& t : params.tensors()) {
    put_str(out, t.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) put<std::uint64_t>(out, d);
    for (double v : t.value.values()) put<double>(out, v);
  }
  put<std::uint64_t>(out, fnv1a(out));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::Io, "cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f.flush()) fail(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Io, "cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (bytes.size() < sizeof kMagic + 4 + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    fail(ErrorKind::Data, where + ": not a checkpoint file");
  }
  const std::size_t body = bytes.size() - 8;
  Cursor tail(bytes, bytes.size(), where);
  tail.skip(body);
  if (tail.get<std::uint64_t>() != fnv1a(bytes.substr(0, body))) fail(ErrorKind::Data, where + ": checksum mismatch");

  Cursor in(bytes, body, where);
  in.skip(sizeof kMagic);
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) fail(ErrorKind::Data, where + ": unsupported checkpoint version " + std::to_string(version));
  const ModelConfig config = ModelConfig::from_map(in.get_kv());
  Checkpoint ck{ModelParams{}, in.get_kv()};
  const auto n = in.get<std::uint64_t>();
  std::vector<NamedTensor> tensors;
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = in.get_str();
    const auto rank = in.get<std::uint32_t>();
    if (rank == 0 || rank > 8) fail(ErrorKind::Data, where + ": array " + name + " has rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(in.get<std::uint64_t>());
      if (shape.back() == 0 || shape.back() > (1ULL << 32)) fail(ErrorKind::Data, where + ": bad dimension in " + name);
      count *= shape.back();
    }
    in.need(count * sizeof(double));
    std::vector<double> values(count);
    for (double& v : values) v = in.get<double>();
    tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (in.pos() != body) fail(ErrorKind::Data, where + ": trailing bytes after the last array");
  ck.params = ModelParams::from_tensors(config, std::move(tensors));
  return ck;
}

}  // namespace dspo::model
