#include "priorvo/prior.hpp"

#include "priorvo/errors.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

namespace priorvo {
namespace {

constexpr std::string_view kMagic = "DPRIOR";

std::uint32_t load_le32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

void store_le32(std::uint32_t v, char* p) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
}

// Parses one space-terminated token starting at `pos`; advances pos past the token.
std::string_view next_token(const std::string& bytes, std::size_t& pos, std::size_t end) {
  const std::size_t start = pos;
  while (pos < end && bytes[pos] != ' ') ++pos;
  return std::string_view(bytes).substr(start, pos - start);
}

}  // namespace

DepthMap parse_depth_map(const std::string& bytes) {
  const std::size_t eol = bytes.find('\n');
  if (eol == std::string::npos || eol > 256) throw LoadError("depth prior header has no newline", 0);
  std::size_t pos = 0;
  if (next_token(bytes, pos, eol) != kMagic) throw LoadError("depth prior magic is not DPRIOR", 0);

  DepthMap map;
  auto parse_int = [&](int& out) {
    if (pos >= eol || bytes[pos] != ' ') throw LoadError("expected space in depth prior header", pos);
    ++pos;
    const std::size_t at = pos;
    const auto tok = next_token(bytes, pos, eol);
    const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    if (r.ec != std::errc{} || r.ptr != tok.data() + tok.size() || out <= 0)
      throw LoadError("bad dimension in depth prior header", at);
  };
  parse_int(map.width);
  parse_int(map.height);
  if (pos >= eol || bytes[pos] != ' ') throw LoadError("expected space in depth prior header", pos);
  ++pos;
  const std::size_t focal_at = pos;
  const auto tok = next_token(bytes, pos, eol);
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), map.trained_focal);
  if (r.ec != std::errc{} || r.ptr != tok.data() + tok.size() || !(map.trained_focal > 0.0))
    throw LoadError("bad trained focal in depth prior header", focal_at);
  if (pos != eol) throw LoadError("trailing characters in depth prior header", pos);

  const std::size_t payload = eol + 1;
  const std::size_t count = static_cast<std::size_t>(map.width) * map.height;
  const std::size_t available = bytes.size() - payload;
  if (available < count * 4) throw LoadError("truncated depth prior payload", bytes.size());
  if (available > count * 4) throw LoadError("depth prior payload longer than width*height", payload + count * 4);
  map.values.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    map.values[i] = std::bit_cast<float>(load_le32(bytes.data() + payload + 4 * i));
  return map;
}

DepthMap load_depth_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open depth prior " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_depth_map(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what(), e.byte_offset());
  }
}

std::string serialize_depth_map(const DepthMap& map) {
  if (map.values.size() != static_cast<std::size_t>(map.width) * map.height)
    throw ContractViolation("depth map value count does not match its dimensions");
  char focal[64];
  const auto r = std::to_chars(focal, focal + sizeof focal, map.trained_focal);
  std::string out = std::string(kMagic) + ' ' + std::to_string(map.width) + ' ' + std::to_string(map.height) + ' ' +
                    std::string(focal, r.ptr) + '\n';
  const std::size_t header = out.size();
  out.resize(header + 4 * map.values.size());
  for (std::size_t i = 0; i < map.values.size(); ++i)
    store_le32(std::bit_cast<std::uint32_t>(map.values[i]), out.data() + header + 4 * i);
  return out;
}

void save_depth_map(const DepthMap& map, const std::filesystem::path& path) {
  const std::string bytes = serialize_depth_map(map);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write depth prior " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::string prior_filename(int frame_index) {
  std::ostringstream ss;
  ss << std::setw(6) << std::setfill('0') << frame_index << ".dpr";
  return ss.str();
}

double scale_depth(double d_trained, double f_current, double f_trained) {
  if (!(f_current > 0.0) || !(f_trained > 0.0)) throw ContractViolation("focal lengths must be positive");
  return f_current / f_trained * d_trained;
}

std::optional<double> sample_prior(const DepthMap& map, const PinholeCamera& cam, const Vec2& pixel,
                                   const PriorBounds& bounds) {
  if (!(pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() <= cam.width - 1 && pixel.y() <= cam.height - 1))
    throw ContractViolation("prior sample outside the image");
  static std::atomic<bool> warned{false};
  if (std::abs(cam.fx - cam.fy) > 0.01 * cam.fx && !warned.exchange(true))
    spdlog::warn("fx and fy differ by more than 1%; rescaling priors with fx");

  // Nearest pixel; maps whose resolution differs from the camera are indexed proportionally.
  const double sx = static_cast<double>(map.width) / cam.width;
  const double sy = static_cast<double>(map.height) / cam.height;
  const int x = std::clamp(static_cast<int>(std::lround((pixel.x() + 0.5) * sx - 0.5)), 0, map.width - 1);
  const int y = std::clamp(static_cast<int>(std::lround((pixel.y() + 0.5) * sy - 0.5)), 0, map.height - 1);
  const float d = map.at(x, y);
  if (!DepthMap::valid(d)) return std::nullopt;
  const double scaled = scale_depth(d, cam.fx, map.trained_focal);
  if (scaled < bounds.d_floor || scaled > bounds.d_ceiling) return std::nullopt;
  return scaled;
}

}  // namespace priorvo
