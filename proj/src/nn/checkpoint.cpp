#include "drsac/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "drsac/errors.hpp"

namespace drsac::nn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

constexpr char kMagic[8] = {'D', 'R', 'S', 'A', 'C', 'C', 'K', 'P'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_name(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return v;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(at_, n);
    at_ += n;
    return s;
  }
  std::string get_name() { return get_bytes(get<std::uint32_t>()); }
  bool done() const { return at_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - at_ < n) throw ConfigError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t at_ = 0;
};

}  // namespace

void Checkpoint::put_tensor(const std::string& name, const Matrix& value) {
  tensors_[name] = value;
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("checkpoint: missing tensor '" + name + "'");
  return it->second;
}

void Checkpoint::put_text(const std::string& name, const std::string& value) {
  texts_[name] = value;
}

const std::string& Checkpoint::text(const std::string& name) const {
  auto it = texts_.find(name);
  if (it == texts_.end()) throw ConfigError("checkpoint: missing entry '" + name + "'");
  return it->second;
}

void Checkpoint::put_store(const std::string& prefix, const ParameterStore& store,
                           bool optimizer_state) {
  for (const Parameter* p : store.parameters()) {
    put_tensor(prefix + "/" + p->name, p->value);
    if (optimizer_state) {
      put_tensor(prefix + "/" + p->name + "@adam_m", p->adam_m);
      put_tensor(prefix + "/" + p->name + "@adam_v", p->adam_v);
    }
  }
  if (optimizer_state) put_text(prefix + "/@optimizer_step", std::to_string(store.optimizer_step));
}

void Checkpoint::get_store(const std::string& prefix, ParameterStore& store) const {
  auto fetch = [&](const std::string& name, Matrix& dst) {
    const Matrix& src = tensor(name);
    if (src.rows() != dst.rows() || src.cols() != dst.cols()) {
      throw ConfigError("checkpoint: tensor '" + name + "' has the wrong shape");
    }
    dst = src;
  };
  for (Parameter* p : store.parameters()) {
    fetch(prefix + "/" + p->name, p->value);
    if (has_tensor(prefix + "/" + p->name + "@adam_m")) {
      fetch(prefix + "/" + p->name + "@adam_m", p->adam_m);
      fetch(prefix + "/" + p->name + "@adam_v", p->adam_v);
    }
    p->grad.setZero();
  }
  if (has_text(prefix + "/@optimizer_step")) {
    store.optimizer_step = std::stol(text(prefix + "/@optimizer_step"));
  }
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, tensors_.size());
  for (const auto& [name, m] : tensors_) {
    put_name(out, name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
  }
  put<std::uint64_t>(out, texts_.size());
  for (const auto& [name, s] : texts_) {
    put_name(out, name);
    put<std::uint64_t>(out, s.size());
    out += s;
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.get_bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw ConfigError("checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto n_tensors = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = r.get_name();
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows > (1u << 28) || cols > (1u << 28) || rows * cols > (1ull << 32)) {
      throw ConfigError("checkpoint: implausible tensor shape");
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const std::string payload = r.get_bytes(sizeof(double) * rows * cols);
    std::memcpy(m.data(), payload.data(), payload.size());
    ck.tensors_[name] = std::move(m);
  }
  const auto n_texts = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_texts; ++i) {
    std::string name = r.get_name();
    const auto len = r.get<std::uint64_t>();
    ck.texts_[name] = r.get_bytes(len);
  }
  if (!r.done()) throw ConfigError("checkpoint: trailing bytes");
  return ck;
}

void Checkpoint::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    const std::string bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace drsac::nn
