#pragma once

#include "plantrec/common.h"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace plantrec::detail
{
inline std::string read_file(const std::filesystem::path &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw UsageError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path &path, const std::string &bytes)
{
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw UsageError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline nlohmann::json parse_json(const std::string &text, const std::string &what)
{
  try
  {
    return nlohmann::json::parse(text);
  }
  catch (const nlohmann::json::parse_error &e)
  {
    throw FormatError(what + ": " + e.what(), e.byte);
  }
}
}  // namespace plantrec::detail
