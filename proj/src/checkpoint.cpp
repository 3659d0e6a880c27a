#include "dhan/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dhan/errors.hpp"

namespace dhan {

namespace {

constexpr char kMagic[8] = {'D', 'H', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  void metrics(const MetricsTable& m) {
    f64(m.hr1);
    f64(m.hr5);
    f64(m.hr10);
    f64(m.ndcg1);
    f64(m.ndcg5);
    f64(m.ndcg10);
    u64(m.instances);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  MetricsTable metrics() {
    MetricsTable m;
    m.hr1 = f64();
    m.hr5 = f64();
    m.hr10 = f64();
    m.ndcg1 = f64();
    m.ndcg5 = f64();
    m.ndcg10 = f64();
    m.instances = u64();
    return m;
  }
  void expect_magic() {
    need(sizeof(kMagic));
    if (std::memcmp(in_.data() + pos_, kMagic, sizeof(kMagic)) != 0) throw DataError("not a checkpoint file");
    pos_ += sizeof(kMagic);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw DataError("checkpoint truncated");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

ParamStore snapshot(const ParamStore& store) {
  ParamStore out;
  for (const std::string& name : store.names()) out.add(name, store.get(name).clone());
  return out;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.str(to_text(c.config));
  w.u64(c.epoch);
  w.u64(c.history.size());
  for (const EpochRecord& r : c.history) {
    w.u64(r.epoch);
    w.f64(r.loss);
    w.metrics(r.test);
    w.metrics(r.train);
    w.f64(r.dns_score_mean);
    w.f64(r.uniform_score_mean);
    w.u64(r.dns_draws);
  }
  w.u64(c.params.size());
  for (const std::string& name : c.params.names()) {
    const Tensor& t = c.params.get(name);
    w.str(name);
    w.u8(t.requires_grad() ? 1 : 0);
    w.u64(t.rank());
    for (std::size_t dim : t.shape()) w.u64(dim);
    for (double v : t.data()) w.f64(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.expect_magic();
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config = parse_config(r.str());
  c.epoch = r.u64();
  const std::uint64_t n_hist = r.u64();
  for (std::uint64_t i = 0; i < n_hist; ++i) {
    EpochRecord e;
    e.epoch = r.u64();
    e.loss = r.f64();
    e.test = r.metrics();
    e.train = r.metrics();
    e.dns_score_mean = r.f64();
    e.uniform_score_mean = r.f64();
    e.dns_draws = r.u64();
    c.history.push_back(e);
  }
  const std::uint64_t n_params = r.u64();
  for (std::uint64_t i = 0; i < n_params; ++i) {
    const std::string name = r.str();
    const bool grad = r.u8() != 0;
    Shape shape(r.u64());
    for (std::size_t& dim : shape) dim = r.u64();
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = r.f64();
    c.params.add(name, Tensor(shape, std::move(values), grad));
  }
  if (!r.done()) throw DataError("trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    const std::string bytes = serialize_checkpoint(checkpoint);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) {
      f.close();
      fs::remove(tmp);
      throw std::runtime_error("write failed: " + tmp.string());
    }
  }
  fs::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace dhan
