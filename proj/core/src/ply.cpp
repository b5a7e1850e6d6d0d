#include "upcg/ply.hpp"

#include "upcg/byteio.hpp"
#include "upcg/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

namespace upcg {

namespace {

enum class Scalar { kI8, kU8, kI16, kU16, kI32, kU32, kF32, kF64 };

struct Property {
  std::string name;
  Scalar type = Scalar::kF32;
  bool isList = false;
  Scalar countType = Scalar::kU8;
};

struct Element {
  std::string name;
  size_t count = 0;
  std::vector<Property> props;
};

[[noreturn]] void
parseError(size_t offset, const std::string& what)
{
  fail(ErrorCode::kParse, "PLY parse error at byte " + std::to_string(offset) + ": " + what);
}

bool
scalarOf(const std::string& s, Scalar& out)
{
  static const std::pair<const char*, Scalar> names[] = {
    {"char", Scalar::kI8},     {"int8", Scalar::kI8},     {"uchar", Scalar::kU8},
    {"uint8", Scalar::kU8},    {"short", Scalar::kI16},   {"int16", Scalar::kI16},
    {"ushort", Scalar::kU16},  {"uint16", Scalar::kU16},  {"int", Scalar::kI32},
    {"int32", Scalar::kI32},   {"uint", Scalar::kU32},    {"uint32", Scalar::kU32},
    {"float", Scalar::kF32},   {"float32", Scalar::kF32}, {"double", Scalar::kF64},
    {"float64", Scalar::kF64},
  };
  for (const auto& [n, t] : names) {
    if (s == n) {
      out = t;
      return true;
    }
  }
  return false;
}

size_t
scalarSize(Scalar t)
{
  switch (t) {
  case Scalar::kI8:
  case Scalar::kU8: return 1;
  case Scalar::kI16:
  case Scalar::kU16: return 2;
  case Scalar::kI32:
  case Scalar::kU32:
  case Scalar::kF32: return 4;
  case Scalar::kF64: return 8;
  }
  return 0;
}

double
readBinary(Scalar t, const uint8_t* p)
{
  uint64_t v = 0;
  const size_t n = scalarSize(t);
  for (size_t i = 0; i < n; ++i)
    v |= uint64_t(p[i]) << (8 * i);
  switch (t) {
  case Scalar::kI8: return double(int8_t(v));
  case Scalar::kU8: return double(uint8_t(v));
  case Scalar::kI16: return double(int16_t(v));
  case Scalar::kU16: return double(uint16_t(v));
  case Scalar::kI32: return double(int32_t(v));
  case Scalar::kU32: return double(uint32_t(v));
  case Scalar::kF32: return double(std::bit_cast<float>(uint32_t(v)));
  case Scalar::kF64: return std::bit_cast<double>(v);
  }
  return 0.0;
}

}  // namespace

std::vector<Point3>
readPly(std::span<const uint8_t> bytes)
{
  size_t pos = 0;
  auto nextLine = [&]() -> std::string {
    const size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n')
      ++pos;
    if (pos >= bytes.size())
      parseError(start, "header is not terminated");
    std::string line(bytes.begin() + start, bytes.begin() + pos);
    ++pos;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    return line;
  };

  if (nextLine() != "ply")
    parseError(0, "missing 'ply' signature");
  std::string format;
  std::vector<Element> elements;
  for (;;) {
    const size_t lineStart = pos;
    const std::string line = nextLine();
    std::istringstream is(line);
    std::string word;
    is >> word;
    if (word == "end_header")
      break;
    if (word.empty() || word == "comment" || word == "obj_info")
      continue;
    if (word == "format") {
      std::string version;
      is >> format >> version;
      if (format == "binary_big_endian")
        fail(ErrorCode::kUnsupported, "binary big-endian PLY is not supported");
      if (format != "ascii" && format != "binary_little_endian")
        parseError(lineStart, "unknown format '" + format + "'");
    } else if (word == "element") {
      Element e;
      long long count = -1;
      is >> e.name >> count;
      if (!is || count < 0)
        parseError(lineStart, "malformed element line");
      e.count = size_t(count);
      elements.push_back(std::move(e));
    } else if (word == "property") {
      if (elements.empty())
        parseError(lineStart, "property before any element");
      Property p;
      std::string type;
      is >> type;
      if (type == "list") {
        std::string countType, itemType;
        is >> countType >> itemType >> p.name;
        p.isList = true;
        if (!scalarOf(countType, p.countType) || !scalarOf(itemType, p.type))
          parseError(lineStart, "unknown list property type");
      } else {
        is >> p.name;
        if (!scalarOf(type, p.type))
          parseError(lineStart, "unknown property type '" + type + "'");
      }
      if (p.name.empty())
        parseError(lineStart, "property without a name");
      elements.back().props.push_back(std::move(p));
    } else {
      parseError(lineStart, "unexpected header keyword '" + word + "'");
    }
  }
  if (format.empty())
    parseError(pos, "header lacks a format line");

  std::vector<Point3> points;
  const bool ascii = format == "ascii";
  for (const auto& e : elements) {
    int axis[3] = {-1, -1, -1};
    if (e.name == "vertex") {
      for (size_t i = 0; i < e.props.size(); ++i) {
        const auto& n = e.props[i].name;
        const int a = n == "x" ? 0 : n == "y" ? 1 : n == "z" ? 2 : -1;
        if (a >= 0 && !e.props[i].isList)
          axis[a] = int(i);
      }
      if (axis[0] < 0 || axis[1] < 0 || axis[2] < 0)
        parseError(pos, "vertex element lacks x, y or z");
      points.reserve(e.count);
    }
    for (size_t row = 0; row < e.count; ++row) {
      Point3 pt{};
      if (ascii) {
        const size_t rowStart = pos;
        std::string line;
        do {
          if (pos >= bytes.size())
            parseError(pos, "truncated body in element '" + e.name + "'");
          const size_t s = pos;
          while (pos < bytes.size() && bytes[pos] != '\n')
            ++pos;
          line.assign(bytes.begin() + s, bytes.begin() + pos);
          if (pos < bytes.size())
            ++pos;
        } while (line.find_first_not_of(" \t\r") == std::string::npos);
        const char* p = line.data();
        const char* end = line.data() + line.size();
        auto number = [&]() {
          while (p < end && (*p == ' ' || *p == '\t' || *p == '\r'))
            ++p;
          double v = 0.0;
          auto [q, ec] = std::from_chars(p, end, v);
          if (ec != std::errc())
            parseError(rowStart + size_t(p - line.data()), "expected a number");
          p = q;
          return v;
        };
        for (size_t i = 0; i < e.props.size(); ++i) {
          const auto& prop = e.props[i];
          if (prop.isList) {
            const double count = number();
            for (long long k = 0; k < (long long)count; ++k)
              number();
            continue;
          }
          const double v = number();
          for (int a = 0; a < 3; ++a)
            if (axis[a] == int(i))
              pt[a] = v;
        }
      } else {
        for (size_t i = 0; i < e.props.size(); ++i) {
          const auto& prop = e.props[i];
          if (prop.isList) {
            const size_t cs = scalarSize(prop.countType);
            if (bytes.size() - pos < cs)
              parseError(pos, "truncated body in element '" + e.name + "'");
            const double count = readBinary(prop.countType, bytes.data() + pos);
            pos += cs;
            const size_t skip = size_t(count) * scalarSize(prop.type);
            if (count < 0 || bytes.size() - pos < skip)
              parseError(pos, "truncated list in element '" + e.name + "'");
            pos += skip;
            continue;
          }
          const size_t sz = scalarSize(prop.type);
          if (bytes.size() - pos < sz)
            parseError(pos, "truncated body in element '" + e.name + "'");
          const double v = readBinary(prop.type, bytes.data() + pos);
          pos += sz;
          for (int a = 0; a < 3; ++a)
            if (axis[a] == int(i))
              pt[a] = v;
        }
      }
      if (e.name == "vertex") {
        if (!std::isfinite(pt[0]) || !std::isfinite(pt[1]) || !std::isfinite(pt[2]))
          parseError(pos, "non-finite coordinate");
        points.push_back(pt);
      }
    }
    if (e.name == "vertex")
      break;
  }
  return points;
}

std::vector<uint8_t>
writePly(std::span<const Point3> points, PlyFormat format)
{
  bool integral = true;
  for (const auto& p : points)
    for (double v : p)
      integral = integral && v == std::floor(v) && std::abs(v) < 2147483647.0;

  std::ostringstream h;
  h << "ply\nformat " << (format == PlyFormat::kAscii ? "ascii" : "binary_little_endian")
    << " 1.0\nelement vertex " << points.size() << "\n";
  const char* type = integral ? "int" : "double";
  h << "property " << type << " x\nproperty " << type << " y\nproperty " << type
    << " z\nend_header\n";
  const std::string header = h.str();

  ByteWriter w;
  w.str(header);
  if (format == PlyFormat::kAscii) {
    char buf[64];
    for (const auto& p : points) {
      for (int a = 0; a < 3; ++a) {
        auto [end, ec] = integral ? std::to_chars(buf, buf + sizeof buf, int64_t(p[a]))
                                  : std::to_chars(buf, buf + sizeof buf, p[a]);
        (void)ec;
        w.bytes({reinterpret_cast<const uint8_t*>(buf), size_t(end - buf)});
        w.u8(a < 2 ? ' ' : '\n');
      }
    }
  } else {
    for (const auto& p : points) {
      for (double v : p) {
        if (integral)
          w.i32(int32_t(v));
        else
          w.u64(std::bit_cast<uint64_t>(v));
      }
    }
  }
  return w.take();
}

std::vector<Point3>
loadPly(const std::string& path)
{
  return readPly(readFile(path));
}

void
savePly(const std::string& path, std::span<const Point3> points, PlyFormat format)
{
  writeFile(path, writePly(points, format));
}

}  // namespace upcg
