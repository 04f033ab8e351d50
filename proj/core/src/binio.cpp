#include "attachrec/binio.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "attachrec/errors.hpp"

namespace attachrec {

namespace {

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), std::streamsize(n));
  if (!out) throw ExecutionError("binary write failed");
}

void get_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), std::streamsize(n));
  if (std::size_t(in.gcount()) != n) throw ValidationError("truncated binary artifact");
}

}  // namespace

void BinaryWriter::u8(std::uint8_t v) { put_bytes(out_, &v, 1); }

void BinaryWriter::u32(std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  put_bytes(out_, b, 4);
}

void BinaryWriter::u64(std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  put_bytes(out_, b, 8);
}

void BinaryWriter::i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

void BinaryWriter::f64(double v) {
  std::uint64_t bits;
  static_assert(sizeof bits == sizeof v);
  std::memcpy(&bits, &v, sizeof bits);
  u64(bits);
}

void BinaryWriter::str(const std::string& v) {
  u64(v.size());
  if (!v.empty()) put_bytes(out_, v.data(), v.size());
}

void BinaryWriter::str_vec(const std::vector<std::string>& v) {
  u64(v.size());
  for (const auto& s : v) str(s);
}

void BinaryWriter::f64_vec(const std::vector<double>& v) {
  u64(v.size());
  for (double d : v) f64(d);
}

void BinaryWriter::magic(const char tag[4], std::uint32_t version) {
  put_bytes(out_, tag, 4);
  u32(version);
}

std::uint8_t BinaryReader::u8() {
  std::uint8_t v;
  get_bytes(in_, &v, 1);
  return v;
}

std::uint32_t BinaryReader::u32() {
  unsigned char b[4];
  get_bytes(in_, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  unsigned char b[8];
  get_bytes(in_, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

std::int64_t BinaryReader::i64() { return static_cast<std::int64_t>(u64()); }

double BinaryReader::f64() {
  std::uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string BinaryReader::str() {
  std::uint64_t n = u64();
  if (n > (std::uint64_t(1) << 32)) throw ValidationError("implausible string length in binary artifact");
  std::string s(std::size_t(n), '\0');
  if (n) get_bytes(in_, s.data(), std::size_t(n));
  return s;
}

std::vector<std::string> BinaryReader::str_vec() {
  std::uint64_t n = u64();
  std::vector<std::string> v;
  v.reserve(std::size_t(n));
  for (std::uint64_t i = 0; i < n; ++i) v.push_back(str());
  return v;
}

std::vector<double> BinaryReader::f64_vec() {
  std::uint64_t n = u64();
  std::vector<double> v;
  v.reserve(std::size_t(n));
  for (std::uint64_t i = 0; i < n; ++i) v.push_back(f64());
  return v;
}

std::uint32_t BinaryReader::magic(const char tag[4], std::uint32_t max_version) {
  char got[4];
  get_bytes(in_, got, 4);
  if (std::memcmp(got, tag, 4) != 0)
    throw ValidationError(std::string("artifact magic mismatch, expected ") + std::string(tag, 4));
  std::uint32_t version = u32();
  if (version == 0 || version > max_version)
    throw ValidationError("unsupported artifact format version " + std::to_string(version) +
                          " for " + std::string(tag, 4));
  return version;
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[std::size_t(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read file for hashing: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  return fnv1a64(bytes.data(), bytes.size());
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& key) {
  std::uint64_t z = base ^ fnv1a64(key);
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace attachrec
