#pragma once

#include <cstdint>
#include <fstream>
#include <string>

namespace pllm {

// Round-trip-exact decimal formatting for CSV/JSON output; identical inputs
// produce identical bytes.
std::string format_double(double x);

// Writes to "<path>.tmp" and renames on commit, so readers never observe a
// partially written file and failed runs leave no artifact behind.
class AtomicFileWriter {
 public:
  explicit AtomicFileWriter(const std::string& path);
  ~AtomicFileWriter();

  AtomicFileWriter(const AtomicFileWriter&) = delete;
  AtomicFileWriter& operator=(const AtomicFileWriter&) = delete;

  void write_bytes(const void* data, std::size_t n);
  void write_text(const std::string& s) { write_bytes(s.data(), s.size()); }
  void write_u32(std::uint32_t v) { write_bytes(&v, sizeof(v)); }
  void write_u64(std::uint64_t v) { write_bytes(&v, sizeof(v)); }
  void write_f64(double v) { write_bytes(&v, sizeof(v)); }
  void write_f32(float v) { write_bytes(&v, sizeof(v)); }

  void commit();

 private:
  std::string path_;
  std::string tmp_path_;
  std::ofstream out_;
  bool committed_ = false;
};

class FileReader {
 public:
  explicit FileReader(const std::string& path);

  void read_bytes(void* data, std::size_t n);
  std::uint32_t read_u32() { std::uint32_t v; read_bytes(&v, sizeof(v)); return v; }
  std::uint64_t read_u64() { std::uint64_t v; read_bytes(&v, sizeof(v)); return v; }
  double read_f64() { double v; read_bytes(&v, sizeof(v)); return v; }
  float read_f32() { float v; read_bytes(&v, sizeof(v)); return v; }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

void ensure_dir(const std::string& path);
bool file_exists(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::string parent_dir(const std::string& path);
std::string join_path(const std::string& a, const std::string& b);

}  // namespace pllm
