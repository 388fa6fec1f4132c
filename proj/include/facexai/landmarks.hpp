#pragma once

// 68-point facial landmark sets (300-W / iBUG ordering) and the "pts" file format.

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "facexai/error.hpp"
#include "facexai/image.hpp"
#include "facexai/io.hpp"

namespace fxai {

inline constexpr std::size_t kLandmarkCount = 68;

// 0-based index ranges in the 300-W markup.
struct LandmarkRange {
  std::size_t first;
  std::size_t last;  // inclusive
};
inline constexpr LandmarkRange kJaw{0, 16};
inline constexpr LandmarkRange kRightBrow{17, 21};  // subject's right, image left
inline constexpr LandmarkRange kLeftBrow{22, 26};
inline constexpr LandmarkRange kNoseBridge{27, 30};
inline constexpr LandmarkRange kNostrils{31, 35};
inline constexpr LandmarkRange kLeftEyeRange{36, 41};   // image-left eye contour
inline constexpr LandmarkRange kRightEyeRange{42, 47};  // image-right eye contour
inline constexpr LandmarkRange kOuterLip{48, 59};
inline constexpr LandmarkRange kInnerLip{60, 67};

class LandmarkSet {
 public:
  LandmarkSet() = default;

  explicit LandmarkSet(std::array<Point2, kLandmarkCount> points) : points_(points) { validate(); }

  static LandmarkSet from_vector(const std::vector<Point2>& points) {
    if (points.size() != kLandmarkCount) {
      throw InvalidArgument("landmark set needs exactly 68 points, got " + std::to_string(points.size()));
    }
    std::array<Point2, kLandmarkCount> a{};
    std::copy(points.begin(), points.end(), a.begin());
    return LandmarkSet(a);
  }

  const std::array<Point2, kLandmarkCount>& points() const { return points_; }
  const Point2& operator[](std::size_t i) const { return points_[i]; }

  Point2 centroid(LandmarkRange r) const {
    Point2 sum;
    for (std::size_t i = r.first; i <= r.last; ++i) sum = sum + points_[i];
    return (1.0 / static_cast<double>(r.last - r.first + 1)) * sum;
  }

  template <typename Fn>
  LandmarkSet transformed(Fn&& fn) const {
    std::array<Point2, kLandmarkCount> out{};
    for (std::size_t i = 0; i < kLandmarkCount; ++i) out[i] = fn(points_[i]);
    return LandmarkSet(out);
  }

  friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;

 private:
  void validate() const {
    for (const auto& p : points_) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidArgument("landmark coordinate is not finite");
    }
  }

  std::array<Point2, kLandmarkCount> points_{};
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline double parse_double(std::string_view token, const std::string& context) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError(context + ": bad number '" + std::string(token) + "'");
  return v;
}

}  // namespace detail

// Parses the iBUG "pts" text format:
//   version: 1
//   n_points: 68
//   {
//   x y   (68 lines)
//   }
inline LandmarkSet parse_pts(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = detail::trim(text.substr(pos, nl - pos));
    if (!line.empty()) lines.push_back(line);
    pos = nl + 1;
  }
  std::size_t i = 0;
  auto expect_prefix = [&](std::string_view key) -> std::string_view {
    if (i >= lines.size() || !lines[i].starts_with(key)) {
      throw ParseError("pts: expected '" + std::string(key) + "'");
    }
    return detail::trim(lines[i++].substr(key.size()));
  };
  expect_prefix("version:");
  const auto n_text = expect_prefix("n_points:");
  const double n = detail::parse_double(n_text, "pts n_points");
  if (n != static_cast<double>(kLandmarkCount)) {
    throw ParseError("pts: expected 68 points, header declares " + std::string(n_text));
  }
  if (i >= lines.size() || lines[i] != "{") throw ParseError("pts: expected '{'");
  ++i;
  std::vector<Point2> points;
  points.reserve(kLandmarkCount);
  while (i < lines.size() && lines[i] != "}") {
    const auto line = lines[i++];
    const auto sep = line.find_first_of(" \t");
    if (sep == std::string_view::npos) throw ParseError("pts: point line needs two coordinates");
    const auto xs = detail::trim(line.substr(0, sep));
    const auto ys = detail::trim(line.substr(sep));
    if (ys.find_first_of(" \t") != std::string_view::npos) throw ParseError("pts: extra tokens on point line");
    points.push_back({detail::parse_double(xs, "pts x"), detail::parse_double(ys, "pts y")});
  }
  if (i >= lines.size()) throw ParseError("pts: missing closing '}'");
  if (points.size() != kLandmarkCount) {
    throw ParseError("pts: found " + std::to_string(points.size()) + " points, expected 68");
  }
  return LandmarkSet::from_vector(points);
}

inline LandmarkSet read_pts(const std::filesystem::path& path) { return parse_pts(read_text_file(path)); }

inline std::string format_pts(const LandmarkSet& lm) {
  std::ostringstream out;
  out << "version: 1\nn_points: 68\n{\n";
  out << std::setprecision(17);
  for (const auto& p : lm.points()) out << p.x << ' ' << p.y << '\n';
  out << "}\n";
  return out.str();
}

inline void write_pts(const std::filesystem::path& path, const LandmarkSet& lm) {
  write_text_file(path, format_pts(lm));
}

}  // namespace fxai
