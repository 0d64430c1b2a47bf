#include "volres/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace volres {

namespace {

constexpr char kMagic[4] = {'V', 'R', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr const char* kSpecName = "meta/spec";
constexpr const char* kStepName = "meta/step";

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is, const std::string& path) : is_(is), path_(path) {}

  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (is_.gcount() != static_cast<std::streamsize>(n)) {
      throw Error(ErrorKind::kFormat, path_ + ": truncated at byte offset " +
                                          std::to_string(offset_));
    }
    offset_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    bytes(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t u64() {
    std::uint64_t lo = u32();
    std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  std::size_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

 private:
  std::istream& is_;
  std::string path_;
  std::size_t offset_ = 0;
};

void write_tensor(Writer& w, const std::string& name, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u8(static_cast<std::uint8_t>(t.dtype()));
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (std::int64_t e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
  if (t.dtype() == Dtype::kF32) {
    w.bytes(t.data<float>().data(), static_cast<std::size_t>(t.size()) * 4);
  } else {
    w.bytes(t.data<double>().data(), static_cast<std::size_t>(t.size()) * 8);
  }
}

std::pair<std::string, Tensor> read_tensor(Reader& r) {
  const std::uint32_t name_len = r.u32();
  if (name_len > 4096) {
    throw Error(ErrorKind::kFormat, r.path() + ": implausible name length " +
                                        std::to_string(name_len) + " at byte offset " +
                                        std::to_string(r.offset() - 4));
  }
  std::string name(name_len, '\0');
  r.bytes(name.data(), name_len);
  const std::uint8_t dtype_raw = r.u8();
  if (dtype_raw > 1) {
    throw Error(ErrorKind::kFormat, r.path() + ": unknown dtype tag " +
                                        std::to_string(dtype_raw) + " at byte offset " +
                                        std::to_string(r.offset() - 1));
  }
  const Dtype dt = static_cast<Dtype>(dtype_raw);
  const std::uint8_t rank = r.u8();
  if (rank < 1 || rank > 5) {
    throw Error(ErrorKind::kFormat, r.path() + ": tensor rank " + std::to_string(rank) +
                                        " out of range at byte offset " +
                                        std::to_string(r.offset() - 1));
  }
  std::vector<std::int64_t> shape(rank);
  for (auto& e : shape) e = r.u32();
  Tensor t = Tensor::zeros(shape, dt);
  if (dt == Dtype::kF32) {
    r.bytes(t.data<float>().data(), static_cast<std::size_t>(t.size()) * 4);
  } else {
    r.bytes(t.data<double>().data(), static_cast<std::size_t>(t.size()) * 8);
  }
  return {std::move(name), std::move(t)};
}

Tensor encode_spec(const NetworkSpec& spec) {
  return Tensor::from_f64({8}, {static_cast<double>(spec.k),
                                static_cast<double>(spec.num_classes),
                                spec.dropout_rate, spec.bn_eps, spec.bn_momentum,
                                static_cast<double>(spec.input_dim),
                                spec.stem_pool ? 1.0 : 0.0,
                                spec.dtype == Dtype::kF64 ? 1.0 : 0.0});
}

NetworkSpec decode_spec(const Tensor& t, const std::string& path) {
  if (t.rank() != 1 || t.dim(0) != 8 || t.dtype() != Dtype::kF64) {
    throw Error(ErrorKind::kFormat, path + ": malformed " + kSpecName + " record");
  }
  auto v = t.data<double>();
  NetworkSpec spec;
  spec.k = static_cast<int>(v[0]);
  spec.num_classes = static_cast<int>(v[1]);
  spec.dropout_rate = v[2];
  spec.bn_eps = v[3];
  spec.bn_momentum = v[4];
  spec.input_dim = static_cast<int>(v[5]);
  spec.stem_pool = v[6] != 0.0;
  spec.dtype = v[7] != 0.0 ? Dtype::kF64 : Dtype::kF32;
  return spec;
}

struct LoadedFile {
  std::uint64_t fingerprint = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

LoadedFile read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open checkpoint " + path);
  Reader r(is, path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::kFormat, path + ": bad magic at byte offset 0");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw Error(ErrorKind::kFormat, path + ": unsupported version " +
                                        std::to_string(version) + " at byte offset 4");
  }
  LoadedFile file;
  file.fingerprint = r.u64();
  const std::uint32_t count = r.u32();
  file.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) file.tensors.push_back(read_tensor(r));
  return file;
}

}  // namespace

void save_checkpoint(Network& net, const std::string& path,
                     const CheckpointExtras& extras) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::kIo, "cannot write checkpoint " + tmp.string());
    Writer w(os);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.u64(net.spec().fingerprint());

    auto params = net.parameters();
    const std::uint32_t count =
        static_cast<std::uint32_t>(params.size() + extras.tensors.size() + 2);
    w.u32(count);
    write_tensor(w, kSpecName, encode_spec(net.spec()));
    write_tensor(w, kStepName,
                 Tensor::from_f64({1}, {static_cast<double>(net.step())}));
    for (const ParamRef& p : params) write_tensor(w, p.name, *p.value);
    for (const auto& [name, tensor] : extras.tensors) write_tensor(w, name, tensor);
    if (!os) throw Error(ErrorKind::kIo, "write failed for " + tmp.string());
  }
  fs::rename(tmp, target);  // atomic publish
}

namespace {

void apply_loaded(Network& net, const LoadedFile& file, const std::string& path,
                  CheckpointExtras* extras) {
  if (file.fingerprint != net.spec().fingerprint()) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx vs %016llx",
                  static_cast<unsigned long long>(file.fingerprint),
                  static_cast<unsigned long long>(net.spec().fingerprint()));
    throw Error(ErrorKind::kSpec,
                path + ": checkpoint fingerprint does not match network spec (" +
                    buf + ")");
  }
  std::vector<ParamRef> params = net.parameters();
  std::size_t applied = 0;
  if (extras) extras->tensors.clear();
  for (const auto& [name, tensor] : file.tensors) {
    if (name == kSpecName) continue;
    if (name == kStepName) {
      net.set_step(static_cast<std::int64_t>(tensor.value_at(0)));
      continue;
    }
    bool matched = false;
    for (ParamRef& p : params) {
      if (p.name != name) continue;
      if (!tensor.same_shape(*p.value) || tensor.dtype() != p.value->dtype()) {
        throw Error(ErrorKind::kFormat, path + ": tensor " + name + " has shape " +
                                            tensor.shape_str() + ", expected " +
                                            p.value->shape_str());
      }
      *p.value = tensor;
      matched = true;
      ++applied;
      break;
    }
    if (!matched && extras) extras->tensors.emplace_back(name, tensor);
  }
  if (applied != params.size()) {
    throw Error(ErrorKind::kFormat,
                path + ": checkpoint supplies " + std::to_string(applied) + " of " +
                    std::to_string(params.size()) + " parameters");
  }
}

}  // namespace

Network load_checkpoint(const std::string& path, CheckpointExtras* extras) {
  LoadedFile file = read_file(path);
  const auto spec_it =
      std::find_if(file.tensors.begin(), file.tensors.end(),
                   [](const auto& kv) { return kv.first == kSpecName; });
  if (spec_it == file.tensors.end()) {
    throw Error(ErrorKind::kFormat, path + ": missing " + std::string(kSpecName) +
                                        " record");
  }
  Network net = build(decode_spec(spec_it->second, path));
  apply_loaded(net, file, path, extras);
  return net;
}

void load_checkpoint_into(Network& net, const std::string& path,
                          CheckpointExtras* extras) {
  LoadedFile file = read_file(path);
  apply_loaded(net, file, path, extras);
}

std::uint64_t checkpoint_fingerprint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open checkpoint " + path);
  Reader r(is, path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::kFormat, path + ": bad magic at byte offset 0");
  }
  r.u32();
  return r.u64();
}

}  // namespace volres
