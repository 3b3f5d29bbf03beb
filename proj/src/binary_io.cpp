#include "sickfuse/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "sickfuse/errors.hpp"

namespace sickfuse {

namespace {

constexpr std::uint64_t kMaxRank = 16;
constexpr std::uint64_t kMaxName = 4096;

}  // namespace

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw ParseError("unexpected end of binary stream");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

void expect_magic(std::istream& in, std::string_view magic, std::string_view what) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    throw ParseError(std::string(what) + ": bad magic, expected \"" + std::string(magic) + "\"");
  }
}

void write_named_tensor(std::ostream& out, std::string_view name, const Tensor& value) {
  write_u64(out, name.size());
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64(out, value.rank());
  for (auto d : value.shape()) write_u64(out, d);
  for (double v : value.data()) write_f64(out, v);
}

std::optional<NamedTensor> read_named_tensor(std::istream& in) {
  if (in.peek() == std::char_traits<char>::eof()) return std::nullopt;
  const std::uint64_t name_len = read_u64(in);
  if (name_len > kMaxName) throw ParseError("tensor record name too long");
  NamedTensor rec;
  rec.name.resize(name_len);
  if (!in.read(rec.name.data(), static_cast<std::streamsize>(name_len))) {
    throw ParseError("truncated tensor record name");
  }
  const std::uint64_t rank = read_u64(in);
  if (rank > kMaxRank) throw ParseError("tensor record rank too large");
  Shape shape(rank);
  for (auto& d : shape) d = read_u64(in);
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) v = read_f64(in);
  rec.value = Tensor(std::move(shape), std::move(values));
  return rec;
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<const Parameter*>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_magic(out, kCheckpointMagic);
  for (const Parameter* p : params) write_named_tensor(out, p->name(), p->value());
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingStreamError("checkpoint not found: " + path.string());
  expect_magic(in, kCheckpointMagic, path.string());
  std::vector<NamedTensor> out;
  while (auto rec = read_named_tensor(in)) out.push_back(std::move(*rec));
  return out;
}

}  // namespace sickfuse
