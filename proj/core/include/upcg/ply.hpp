#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace upcg {

using Point3 = std::array<double, 3>;

enum class PlyFormat { kAscii, kBinaryLE };

// Reads the x/y/z properties of the vertex element from an ASCII or
// binary little-endian PLY. Other properties and elements are skipped.
// Errors carry the byte offset where parsing stopped.
std::vector<Point3> readPly(std::span<const uint8_t> bytes);

// Integer-valued coordinates are written as int properties so they
// round-trip exactly; anything else is written as double.
std::vector<uint8_t> writePly(std::span<const Point3> points, PlyFormat format);

std::vector<Point3> loadPly(const std::string& path);
void savePly(const std::string& path, std::span<const Point3> points, PlyFormat format);

}  // namespace upcg
