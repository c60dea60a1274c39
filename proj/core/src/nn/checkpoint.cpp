#include "sensorscan/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace sensorscan::nn {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'C', 'A', 'N', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.append(s);
  }
  void mat(const Mat& m) {
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) pod<double>(static_cast<double>(m.data()[i]));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Mat mat() {
    const auto rows = pod<std::uint64_t>();
    const auto cols = pod<std::uint64_t>();
    if (rows > (1ULL << 32) || cols > (1ULL << 32)) fail("implausible tensor shape");
    need(rows * cols * sizeof(double));
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(pod<double>());
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("checkpoint '" + source_ + "': " + what);
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated file");
  }
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (char c : kMagic) w.pod(c);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.str(ckpt.kind);
  w.str(ckpt.config_json);
  w.str(ckpt.fingerprint);
  w.pod<std::uint64_t>(ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    w.str(t.name);
    w.mat(t.value);
  }
  w.pod<std::uint8_t>(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    w.pod<std::uint64_t>(ckpt.optimizer->slots.size());
    for (const auto& s : ckpt.optimizer->slots) {
      w.str(s.name);
      w.pod<std::int64_t>(s.step);
      w.mat(s.first_moment);
      w.mat(s.second_moment);
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  for (char c : kMagic)
    if (r.pod<char>() != c) r.fail("not a sensorscan checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    r.fail("unsupported version " + std::to_string(version) + " (expected " + std::to_string(kCheckpointVersion) + ")");
  Checkpoint ckpt;
  ckpt.kind = r.str();
  ckpt.config_json = r.str();
  ckpt.fingerprint = r.str();
  const auto n = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = r.str();
    t.value = r.mat();
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.pod<std::uint8_t>()) {
    AdamState st;
    const auto slots = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < slots; ++i) {
      AdamSlotState s;
      s.name = r.str();
      s.step = r.pod<std::int64_t>();
      s.first_moment = r.mat();
      s.second_moment = r.mat();
      st.slots.push_back(std::move(s));
    }
    ckpt.optimizer = std::move(st);
  }
  if (!r.done()) r.fail("trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), path);
}

std::vector<NamedTensor> snapshot(const ParamRefs& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const auto* p : params) out.push_back({p->name, p->value});
  return out;
}

void restore(const std::vector<NamedTensor>& tensors, const ParamRefs& params) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  for (auto* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ValidationError("checkpoint lacks tensor '" + p->name + "'");
    const Mat& v = it->second->value;
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
      throw ValidationError("checkpoint tensor '" + p->name + "' has shape " + std::to_string(v.rows()) + "x" +
                            std::to_string(v.cols()) + ", model expects " + std::to_string(p->value.rows()) + "x" +
                            std::to_string(p->value.cols()));
    p->value = v;
  }
}

}  // namespace sensorscan::nn
