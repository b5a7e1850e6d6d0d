#include "corpus.hpp"

#include "upcg/errors.hpp"
#include "upcg/ply.hpp"
#include "upcg/synth.hpp"
#include "upcg/voxelize.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>

namespace upcg::cli {

namespace {

std::vector<std::string>
split(const std::string& s, char sep)
{
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i)
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  return out;
}

int64_t
number(const std::string& s, const std::string& what)
{
  int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    fail(ErrorCode::kInvalidArgument, "bad " + what + " '" + s + "'");
  return v;
}

VoxelCloud
fromPly(const std::filesystem::path& path, int depth)
{
  VoxelCloud c;
  c.name = path.filename().string();
  c.depth = depth;
  c.coords = voxelize(loadPly(path.string()), depth).coords;
  return c;
}

}  // namespace

std::vector<VoxelCloud>
loadCorpus(const std::string& spec, int depth)
{
  if (spec.rfind("synth:", 0) == 0) {
    const auto f = split(spec, ':');
    if (f.size() < 3 || f.size() > 4)
      fail(ErrorCode::kInvalidArgument, "corpus spec must be synth:COUNT:DEPTH[:SEED]");
    const auto count = number(f[1], "corpus count");
    const auto d = number(f[2], "corpus depth");
    const auto seed = f.size() == 4 ? number(f[3], "corpus seed") : 0;
    if (count < 1 || d < 2 || d > kMaxDepth || seed < 0)
      fail(ErrorCode::kInvalidArgument, "corpus spec out of range: " + spec);
    return synthCorpus(int(count), int(d), uint64_t(seed));
  }
  namespace fs = std::filesystem;
  const fs::path path(spec);
  std::error_code ec;
  if (fs::is_regular_file(path, ec))
    return {fromPly(path, depth)};
  if (!fs::is_directory(path, ec))
    fail(ErrorCode::kIo, "corpus '" + spec + "' is neither a synth spec nor a PLY file or directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_regular_file() && e.path().extension() == ".ply")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    fail(ErrorCode::kIo, "no .ply files in " + spec);
  std::vector<VoxelCloud> out;
  for (const auto& f : files)
    out.push_back(fromPly(f, depth));
  return out;
}

VoxelCloud
loadInput(const std::string& spec, int depth)
{
  if (spec.rfind("synth:", 0) == 0) {
    const auto f = split(spec, ':');
    if (f.size() < 2 || f.size() > 3)
      fail(ErrorCode::kInvalidArgument, "input spec must be synth:KIND[:SEED]");
    const auto seed = f.size() == 3 ? number(f[2], "seed") : 0;
    return {spec, depth, synthCloud(synthKindFromName(f[1]), depth, uint64_t(seed))};
  }
  return fromPly(spec, depth);
}

}  // namespace upcg::cli
