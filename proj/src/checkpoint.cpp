#include "daml/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "daml/errors.hpp"

namespace daml {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'M', 'L', 'C', 'K', 'P', '1'};

template <class T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = sizeof(T); i-- > 0;) out.push_back(static_cast<char>(bytes[i]));
  } else {
    out.append(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T value;
    if constexpr (std::endian::native == std::endian::big) {
      unsigned char bytes[sizeof(T)];
      for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(data_[pos_ + sizeof(T) - 1 - i]);
      std::memcpy(&value, bytes, sizeof(T));
    } else {
      std::memcpy(&value, data_.data() + pos_, sizeof(T));
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void expect_magic() {
    need(sizeof kMagic);
    if (std::memcmp(data_.data(), kMagic, sizeof kMagic) != 0) throw Error("checkpoint: bad magic");
    pos_ += sizeof kMagic;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error("checkpoint: truncated file");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::pair<std::string, Tensor>> snapshot_parameters(std::span<const Group> groups) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& g : groups)
    for (const auto& p : g.parameters()) out.emplace_back(p.name, p.var.value());
  return out;
}

void restore_parameters(std::span<Group> groups, const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : tensors) by_name.emplace(name, &t);
  for (auto& g : groups)
    for (auto& p : g.parameters()) {
      auto it = by_name.find(p.name);
      if (it == by_name.end()) throw Error("checkpoint: missing tensor " + p.name);
      if (it->second->shape() != p.var.shape())
        throw ShapeError("checkpoint: tensor " + p.name + " has shape " + to_string(it->second->shape()) +
                         ", model expects " + to_string(p.var.shape()));
      Var v = p.var;
      v.mutable_value() = *it->second;
    }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint64_t>(out, ckpt.config_hash);
  put<std::uint64_t>(out, ckpt.step);
  put_string(out, ckpt.config_text);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.vocab.size()));
  for (const auto& tok : ckpt.vocab) put_string(out, tok);
  if (ckpt.dev_accuracy.size() != ckpt.dev_rmse.size()) throw Error("checkpoint: metric count mismatch");
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.dev_accuracy.size()));
  for (std::size_t g = 0; g < ckpt.dev_accuracy.size(); ++g) {
    put<double>(out, ckpt.dev_accuracy[g]);
    put<double>(out, ckpt.dev_rmse[g]);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<double>(out, v);
  }
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str());
  r.expect_magic();
  Checkpoint c;
  c.config_hash = r.get<std::uint64_t>();
  c.step = r.get<std::uint64_t>();
  c.config_text = r.get_string();
  const auto vocab = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < vocab; ++i) c.vocab.push_back(r.get_string());
  const auto groups = r.get<std::uint32_t>();
  for (std::uint32_t g = 0; g < groups; ++g) {
    c.dev_accuracy.push_back(r.get<double>());
    c.dev_rmse.push_back(r.get<double>());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw Error("checkpoint: bad rank for " + name);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.get<std::uint64_t>());
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = r.get<double>();
    c.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw Error("checkpoint: trailing bytes");
  return c;
}

}  // namespace daml
