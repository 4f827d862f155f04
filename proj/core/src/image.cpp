#include "coronet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "coronet/error.hpp"

namespace coronet::data {

namespace {

class HeaderCursor {
 public:
  explicit HeaderCursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + std::size_t(bytes_[pos_] - '0');
      if (++digits > 9) throw FormatError(std::string("image ") + what + " is too large");
      ++pos_;
    }
    if (digits == 0) throw FormatError(std::string("image header: missing ") + what);
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }
  bool at_space() const { return pos_ < bytes_.size() && std::isspace(bytes_[pos_]); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("unsupported image: expected binary PGM (P5) or PPM (P6) magic");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderCursor cur(bytes.subspan(2));
  const std::size_t width = cur.number("width");
  const std::size_t height = cur.number("height");
  const std::size_t maxval = cur.number("maxval");
  if (maxval != 255) throw FormatError("only maxval 255 is supported, got " + std::to_string(maxval));
  if (width == 0 || height == 0) throw FormatError("image has a zero extent");
  if (!cur.at_space()) throw FormatError("image header not terminated by whitespace");
  cur.advance();

  const std::size_t offset = 2 + cur.pos();
  const std::size_t needed = width * height * channels;
  if (bytes.size() - offset < needed) {
    throw FormatError("truncated pixel payload: need " + std::to_string(needed) + " bytes, have " +
                      std::to_string(bytes.size() - offset));
  }
  Tensor out(Shape{height, width, 3});
  const std::uint8_t* px = bytes.data() + offset;
  for (std::size_t i = 0; i < height * width; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::uint8_t v = channels == 1 ? px[i] : px[i * 3 + c];
      out[i * 3 + c] = float(v) / 255.0f;
    }
  }
  return out;
}

Tensor load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  try {
    return decode_image(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_pgm(std::span<const std::uint8_t> gray, std::size_t height,
                                     std::size_t width) {
  if (gray.size() != height * width) throw ShapeError("raster size does not match extents");
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), gray.begin(), gray.end());
  return out;
}

Tensor resize_bilinear(const Tensor& pixels, std::size_t target_h, std::size_t target_w) {
  if (pixels.rank() != 3) throw ShapeError("resize expects [H, W, C], got " + pixels.shape().str());
  if (target_h == 0 || target_w == 0) throw InputError("resize target extent is zero");
  const std::size_t h = pixels.dim(0), w = pixels.dim(1), c = pixels.dim(2);
  if (h == 0 || w == 0) throw InputError("resize source extent is zero");
  if (h == target_h && w == target_w) return pixels;

  struct Tap {
    std::size_t lo, hi;
    float frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = double(in) / double(out);
    for (std::size_t i = 0; i < out; ++i) {
      double src = (double(i) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, double(in - 1));
      const auto lo = std::size_t(std::floor(src));
      const std::size_t hi = std::min(lo + 1, in - 1);
      t[i] = {lo, hi, float(src - double(lo))};
    }
    return t;
  };
  const auto ty = taps(h, target_h);
  const auto tx = taps(w, target_w);

  Tensor out(Shape{target_h, target_w, c});
  for (std::size_t y = 0; y < target_h; ++y) {
    const float fy = ty[y].frac;
    for (std::size_t x = 0; x < target_w; ++x) {
      const float fx = tx[x].frac;
      for (std::size_t ch = 0; ch < c; ++ch) {
        auto at = [&](std::size_t yy, std::size_t xx) { return pixels[(yy * w + xx) * c + ch]; };
        const float top = at(ty[y].lo, tx[x].lo) * (1 - fx) + at(ty[y].lo, tx[x].hi) * fx;
        const float bottom = at(ty[y].hi, tx[x].lo) * (1 - fx) + at(ty[y].hi, tx[x].hi) * fx;
        out[(y * target_w + x) * c + ch] = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

}  // namespace coronet::data
