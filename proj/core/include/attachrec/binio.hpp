#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace attachrec {

// Little-endian binary serialization helpers shared by the versioned artifact
// containers (index, checkpoint, feature matrices, corpus snapshot).
class BinaryWriter {
public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void str(const std::string& v);
  void str_vec(const std::vector<std::string>& v);
  void f64_vec(const std::vector<double>& v);
  void magic(const char tag[4], std::uint32_t version);

private:
  std::ostream& out_;
};

class BinaryReader {
public:
  explicit BinaryReader(std::istream& in) : in_(in) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  std::string str();
  std::vector<std::string> str_vec();
  std::vector<double> f64_vec();
  // Throws ValidationError if the tag mismatches or the version is unsupported.
  std::uint32_t magic(const char tag[4], std::uint32_t max_version);

private:
  std::istream& in_;
};

// FNV-1a over a byte sequence; used for config/artifact fingerprints.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);
std::string hex64(std::uint64_t v);
std::uint64_t hash_file(const std::string& path);  // throws ValidationError if unreadable
// Splitmix-style seed derivation so each (stage, key) pair gets its own stream.
std::uint64_t derive_seed(std::uint64_t base, const std::string& key);

}  // namespace attachrec
