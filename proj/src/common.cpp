#include "scribe/bytes.hpp"
#include "scribe/error.hpp"

#include <cerrno>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/stat.h>

namespace scribe {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::MalformedElf: return "MalformedElf";
  case ErrorKind::UnsupportedTarget: return "UnsupportedTarget";
  case ErrorKind::NoHeaderRoom: return "NoHeaderRoom";
  case ErrorKind::AddressSpaceExhausted: return "AddressSpaceExhausted";
  case ErrorKind::SchemaError: return "SchemaError";
  case ErrorKind::EmptyMetadata: return "EmptyMetadata";
  case ErrorKind::ParseFailure: return "ParseFailure";
  case ErrorKind::OverlapError: return "OverlapError";
  case ErrorKind::ZeroSizeVar: return "ZeroSizeVar";
  case ErrorKind::UndeclaredPinnedVar: return "UndeclaredPinnedVar";
  case ErrorKind::RedeclaredPinnedVar: return "RedeclaredPinnedVar";
  case ErrorKind::UnresolvedSymbol: return "UnresolvedSymbol";
  case ErrorKind::RelocOverflow: return "RelocOverflow";
  case ErrorKind::UnsupportedRelocation: return "UnsupportedRelocation";
  case ErrorKind::FunctionTooSmall: return "FunctionTooSmall";
  case ErrorKind::PlacementMismatch: return "PlacementMismatch";
  case ErrorKind::AlreadyPatched: return "AlreadyPatched";
  case ErrorKind::CompilerInvocationFailed: return "CompilerInvocationFailed";
  case ErrorKind::ToolchainFailed: return "ToolchainFailed";
  case ErrorKind::LayoutInfeasible: return "LayoutInfeasible";
  case ErrorKind::VerifyCommandMissing: return "VerifyCommandMissing";
  case ErrorKind::ConfigError: return "ConfigError";
  case ErrorKind::IoError: return "IoError";
  case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string hex(u64 v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "0x%llx", (unsigned long long)v);
  return buf;
}

u64 parse_hex(const std::string &s) {
  if (s.size() < 3 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X'))
    fail(ErrorKind::SchemaError, "expected hex string, got '" + s + "'");
  u64 v = 0;
  for (size_t i = 2; i < s.size(); i++) {
    char c = s[i];
    int d;
    if (c >= '0' && c <= '9')
      d = c - '0';
    else if (c >= 'a' && c <= 'f')
      d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F')
      d = c - 'A' + 10;
    else
      fail(ErrorKind::SchemaError, "bad hex digit in '" + s + "'");
    if (v >> 60)
      fail(ErrorKind::SchemaError, "hex value too large: '" + s + "'");
    v = v * 16 + d;
  }
  return v;
}

Bytes read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorKind::IoError, "cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

std::string read_text_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorKind::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string &path, std::span<const u8> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    fail(ErrorKind::IoError, "cannot write " + path);
  out.write(reinterpret_cast<const char *>(data.data()), data.size());
  if (!out)
    fail(ErrorKind::IoError, "short write to " + path);
}

void write_text_file(const std::string &path, const std::string &text) {
  write_file(path, {reinterpret_cast<const u8 *>(text.data()), text.size()});
}

void write_file_atomic(const std::string &path, std::span<const u8> data) {
  std::string tmp = path + ".tmp";
  write_file(tmp, data);
  ::chmod(tmp.c_str(), 0755);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    fail(ErrorKind::IoError, "rename " + tmp + " -> " + path + ": " + ec.message());
}

} // namespace scribe
