#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>

#include "spmpc/errors.hpp"

namespace spmpc {

/// Shortest decimal text that parses back to exactly `v`; both zeros print as "0".
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Parses the whole token as a double. Accepts "inf", rejects NaN and trailing text.
inline bool parse_number(std::string_view text, double& out) {
  if (text.empty()) return false;
  std::string_view body = text;
  if (body.front() == '+') body.remove_prefix(1);
  const auto res = std::from_chars(body.data(), body.data() + body.size(), out);
  return res.ec == std::errc() && res.ptr == body.data() + body.size() && !std::isnan(out);
}

inline bool parse_integer(std::string_view text, long long& out) {
  if (text.empty()) return false;
  std::string_view body = text;
  if (body.front() == '+') body.remove_prefix(1);
  const auto res = std::from_chars(body.data(), body.data() + body.size(), out);
  return res.ec == std::errc() && res.ptr == body.data() + body.size();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read error on " + path.string());
  return text;
}

/// Writes `content` to a temporary sibling and renames it over `path`, so a
/// reader sees either the old file or the complete new one.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write error on " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw IoError("cannot move output into place at " + path.string() + ": " + ec.message());
  }
}

}  // namespace spmpc
