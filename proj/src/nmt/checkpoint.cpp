#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "cmg/nmt/train.hpp"

namespace cmg::nmt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'M', 'G', 'C', 'K', 'P', 'T', '\0'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
public:
  template <typename T>
  void put(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::string& buffer() { return buf_; }

private:
  std::string buf_;
};

class Reader {
public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(std::size_t n) {
    if (n > size_ - pos_) throw ModelError("checkpoint truncated");
    const char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    return std::string(take(n), n);
  }
  bool done() const { return pos_ == size_; }

private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void write_tensors(Writer& w, const Params& p, const std::string& group) {
  p.for_each([&](const std::string& name, const auto& t) {
    w.put_string(group + name);
    w.put(static_cast<std::uint64_t>(t.rows()));
    w.put(static_cast<std::uint64_t>(t.cols()));
    w.put_bytes(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.size()) * sizeof(double));
  });
}

void read_tensors(Reader& r, Params& p, const std::string& group) {
  p.for_each([&](const std::string& name, auto& t) {
    const auto stored = r.get_string();
    if (stored != group + name) throw ModelError("checkpoint: expected tensor " + group + name + ", found " + stored);
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows != static_cast<std::uint64_t>(t.rows()) || cols != static_cast<std::uint64_t>(t.cols()))
      throw ModelError("checkpoint: tensor " + stored + " has unexpected shape");
    const auto bytes = static_cast<std::size_t>(t.size()) * sizeof(double);
    std::memcpy(t.data(), r.take(bytes), bytes);
  });
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put(kCheckpointVersion);
  const auto& d = c.params.dims;
  w.put(static_cast<std::int32_t>(d.embed));
  w.put(static_cast<std::int32_t>(d.hidden));
  w.put(static_cast<std::int32_t>(d.source_vocab));
  w.put(static_cast<std::int32_t>(d.target_vocab));
  w.put(c.seed);
  w.put(c.minibatch_index);
  w.put(c.source_vocab_fingerprint);
  w.put(c.target_vocab_fingerprint);
  w.put(static_cast<std::uint8_t>(c.validation_bleu.has_value()));
  w.put(c.validation_bleu.value_or(0.0));
  w.put(c.best_bleu);
  w.put(c.bad_validations);
  write_tensors(w, c.params, "params/");
  write_tensors(w, c.optimizer.sq_grad, "sq_grad/");
  write_tensors(w, c.optimizer.sq_update, "sq_update/");

  auto& buf = w.buffer();
  const auto payload = static_cast<std::uint64_t>(buf.size());
  const auto checksum = fnv1a(buf.data(), buf.size());
  w.put(payload);
  w.put(checksum);

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelError("cannot write checkpoint " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw ModelError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr std::size_t trailer = 2 * sizeof(std::uint64_t);
  if (bytes.size() < sizeof kMagic + trailer) throw ModelError("checkpoint truncated: " + path.string());
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw ModelError("not a checkpoint: " + path.string());

  Reader tail(bytes.data() + bytes.size() - trailer, trailer);
  const auto payload = tail.get<std::uint64_t>();
  const auto checksum = tail.get<std::uint64_t>();
  if (payload != bytes.size() - trailer) throw ModelError("checkpoint truncated: " + path.string());
  if (checksum != fnv1a(bytes.data(), payload)) throw ModelError("checkpoint checksum mismatch: " + path.string());

  Reader r(bytes.data(), payload);
  r.take(sizeof kMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw ModelError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                     std::to_string(kCheckpointVersion) + ")");

  ModelDims d;
  d.embed = r.get<std::int32_t>();
  d.hidden = r.get<std::int32_t>();
  d.source_vocab = r.get<std::int32_t>();
  d.target_vocab = r.get<std::int32_t>();

  Checkpoint c;
  c.params = Params(d);
  c.optimizer = AdadeltaState<double>(d);
  c.seed = r.get<std::uint64_t>();
  c.minibatch_index = r.get<std::uint64_t>();
  c.source_vocab_fingerprint = r.get<std::uint64_t>();
  c.target_vocab_fingerprint = r.get<std::uint64_t>();
  const bool has_bleu = r.get<std::uint8_t>() != 0;
  const auto bleu = r.get<double>();
  if (has_bleu) c.validation_bleu = bleu;
  c.best_bleu = r.get<double>();
  c.bad_validations = r.get<std::uint64_t>();
  read_tensors(r, c.params, "params/");
  read_tensors(r, c.optimizer.sq_grad, "sq_grad/");
  read_tensors(r, c.optimizer.sq_update, "sq_update/");
  if (!r.done()) throw ModelError("checkpoint has trailing data: " + path.string());
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, int source_vocab, int target_vocab) {
  auto c = load_checkpoint(path);
  if (c.params.dims.source_vocab != source_vocab || c.params.dims.target_vocab != target_vocab)
    throw ModelError("checkpoint " + path.string() + " was trained with vocabulary sizes " +
                     std::to_string(c.params.dims.source_vocab) + "/" + std::to_string(c.params.dims.target_vocab) +
                     ", expected " + std::to_string(source_vocab) + "/" + std::to_string(target_vocab));
  return c;
}

}  // namespace cmg::nmt
