#include "dattr/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

namespace dattr::postproc {

std::string_view kind_name(Kind kind) {
  switch (kind) {
    case Kind::Identity: return "identity";
    case Kind::Blur: return "blur";
    case Kind::Crop: return "crop";
    case Kind::Noise: return "noise";
    case Kind::Jpeg: return "jpeg";
    case Kind::Combination: return "combination";
  }
  return "unknown";
}

Kind parse_kind(std::string_view name) {
  for (Kind k : {Kind::Identity, Kind::Blur, Kind::Crop, Kind::Noise, Kind::Jpeg, Kind::Combination}) {
    if (kind_name(k) == name) return k;
  }
  if (name == "combi") return Kind::Combination;
  throw Error(Errc::InvalidArgument, "unknown post-process '" + std::string(name) + "'");
}

namespace {

void check_image(ConstVecView image, const ImageLayout& layout) {
  layout.validate();
  require_same_dim(image.size(), layout.size(), "image vs layout");
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Vec gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw Error(Errc::InvalidArgument, "blur sigma must be > 0");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  Vec k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + r)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

Vec blur(ConstVecView image, const ImageLayout& layout, double sigma) {
  check_image(image, layout);
  const Vec k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int h = layout.height, w = layout.width, c = layout.channels;
  auto at = [c, w](int y, int x, int ch) { return (static_cast<std::size_t>(y) * w + x) * c + ch; };

  Vec tmp(image.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int t = -r; t <= r; ++t) s += k[static_cast<std::size_t>(t + r)] * image[at(y, reflect(x + t, w), ch)];
        tmp[at(y, x, ch)] = s;
      }
  Vec out(image.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int t = -r; t <= r; ++t) s += k[static_cast<std::size_t>(t + r)] * tmp[at(reflect(y + t, h), x, ch)];
        out[at(y, x, ch)] = s;
      }
  return out;
}

Vec resize_bilinear(ConstVecView image, int src_h, int src_w, int channels, int dst_h, int dst_w) {
  require_same_dim(image.size(), static_cast<std::size_t>(src_h) * src_w * channels, "resize_bilinear");
  Vec out(static_cast<std::size_t>(dst_h) * dst_w * channels);
  auto src_coord = [](int dst, int dst_n, int src_n, int& i0, int& i1, double& f) {
    if (dst_n == 1 || src_n == 1) {
      i0 = i1 = 0;
      f = 0.0;
      return;
    }
    const double s = static_cast<double>(dst) * (src_n - 1) / (dst_n - 1);
    i0 = std::min(static_cast<int>(std::floor(s)), src_n - 1);
    i1 = std::min(i0 + 1, src_n - 1);
    f = s - i0;
  };
  for (int y = 0; y < dst_h; ++y) {
    int y0, y1;
    double fy;
    src_coord(y, dst_h, src_h, y0, y1, fy);
    for (int x = 0; x < dst_w; ++x) {
      int x0, x1;
      double fx;
      src_coord(x, dst_w, src_w, x0, x1, fx);
      for (int ch = 0; ch < channels; ++ch) {
        auto px = [&](int yy, int xx) { return image[(static_cast<std::size_t>(yy) * src_w + xx) * channels + ch]; };
        const double top = (1.0 - fx) * px(y0, x0) + fx * px(y0, x1);
        const double bot = (1.0 - fx) * px(y1, x0) + fx * px(y1, x1);
        out[(static_cast<std::size_t>(y) * dst_w + x) * channels + ch] = (1.0 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

Vec crop_resize(ConstVecView image, const ImageLayout& layout, double ratio) {
  check_image(image, layout);
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error(Errc::InvalidArgument, "crop ratio must be in (0, 1]");
  const int h = layout.height, w = layout.width, c = layout.channels;
  const int ch_ = std::max(1, static_cast<int>(std::floor(ratio * h)));
  const int cw = std::max(1, static_cast<int>(std::floor(ratio * w)));
  const int oy = (h - ch_) / 2, ox = (w - cw) / 2;
  Vec crop(static_cast<std::size_t>(ch_) * cw * c);
  for (int y = 0; y < ch_; ++y)
    for (int x = 0; x < cw; ++x)
      for (int k = 0; k < c; ++k)
        crop[(static_cast<std::size_t>(y) * cw + x) * c + k] =
            image[(static_cast<std::size_t>(y + oy) * w + (x + ox)) * c + k];
  return resize_bilinear(crop, ch_, cw, c, h, w);
}

Vec add_noise(ConstVecView image, const ImageLayout& layout, double sigma, std::uint64_t seed) {
  check_image(image, layout);
  if (!(sigma >= 0.0)) throw Error(Errc::InvalidArgument, "noise sigma must be >= 0");
  Vec out(image.begin(), image.end());
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (double& v : out) v += sigma * rng.normal();
  return out;
}

// ---------------------------------------------------------------------------
// JPEG

namespace {

constexpr std::array<int, 64> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr std::array<int, 64> kChromaTable = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct DctBasis {
  // basis[u * 8 + x] = C(u)/2 * cos((2x + 1) u pi / 16)
  std::array<double, 64> m{};
  DctBasis() {
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x) {
        const double cu = (u == 0) ? std::numbers::sqrt2 / 2.0 : 1.0;
        m[u * 8 + x] = 0.5 * cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

void fdct8x8(const double* in, double* out) {
  const auto& m = basis().m;
  double tmp[64];
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += m[u * 8 + x] * in[y * 8 + x];
      tmp[y * 8 + u] = s;
    }
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += m[v * 8 + y] * tmp[y * 8 + u];
      out[v * 8 + u] = s;
    }
}

void idct8x8(const double* in, double* out) {
  const auto& m = basis().m;
  double tmp[64];
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += m[u * 8 + x] * in[v * 8 + u];
      tmp[v * 8 + x] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += m[v * 8 + y] * tmp[v * 8 + x];
      out[y * 8 + x] = s;
    }
}

// Quantize-dequantize one plane in place; plane values are in [0, 255].
void roundtrip_plane(Vec& plane, int h, int w, const std::array<int, 64>& table) {
  const int bh = (h + 7) / 8, bw = (w + 7) / 8;
  double block[64], coef[64];
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx) {
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const int sy = std::min(by * 8 + y, h - 1), sx = std::min(bx * 8 + x, w - 1);
          block[y * 8 + x] = plane[static_cast<std::size_t>(sy) * w + sx] - 128.0;
        }
      fdct8x8(block, coef);
      for (int i = 0; i < 64; ++i) coef[i] = std::nearbyint(coef[i] / table[i]) * table[i];
      idct8x8(coef, block);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const int sy = by * 8 + y, sx = bx * 8 + x;
          if (sy < h && sx < w) plane[static_cast<std::size_t>(sy) * w + sx] = block[y * 8 + x] + 128.0;
        }
    }
}

double saturate255(double v) { return std::clamp(std::nearbyint(v), 0.0, 255.0); }

}  // namespace

std::array<int, 64> quant_table(int quality, bool chroma) {
  if (quality < 1 || quality > 100) throw Error(Errc::BadQuality, "JPEG quality must be in [1, 100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  const auto& base = chroma ? kChromaTable : kLumaTable;
  std::array<int, 64> t{};
  for (int i = 0; i < 64; ++i) t[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return t;
}

int to_gray_level(double value, double lo, double hi) {
  const double v = (value - lo) / (hi - lo) * 255.0;
  return static_cast<int>(std::clamp(std::nearbyint(v), 0.0, 255.0));
}

double from_gray_level(double level, double lo, double hi) { return lo + level / 255.0 * (hi - lo); }

Vec jpeg(ConstVecView image, const ImageLayout& layout, int quality) {
  check_image(image, layout);
  const auto luma = quant_table(quality, false);
  const int h = layout.height, w = layout.width;
  const std::size_t px = static_cast<std::size_t>(h) * w;
  Vec out(image.size());
  if (layout.channels == 1) {
    Vec plane(px);
    for (std::size_t i = 0; i < px; ++i) plane[i] = to_gray_level(image[i], layout.lo, layout.hi);
    roundtrip_plane(plane, h, w, luma);
    for (std::size_t i = 0; i < px; ++i) out[i] = from_gray_level(saturate255(plane[i]), layout.lo, layout.hi);
    return out;
  }
  const auto chroma = quant_table(quality, true);
  Vec yp(px), cb(px), cr(px);
  for (std::size_t i = 0; i < px; ++i) {
    const double r = to_gray_level(image[3 * i], layout.lo, layout.hi);
    const double g = to_gray_level(image[3 * i + 1], layout.lo, layout.hi);
    const double b = to_gray_level(image[3 * i + 2], layout.lo, layout.hi);
    yp[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    cb[i] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
    cr[i] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
  }
  roundtrip_plane(yp, h, w, luma);
  roundtrip_plane(cb, h, w, chroma);
  roundtrip_plane(cr, h, w, chroma);
  for (std::size_t i = 0; i < px; ++i) {
    const double y = yp[i], u = cb[i] - 128.0, v = cr[i] - 128.0;
    const double r = y + 1.402 * v;
    const double g = y - 0.344136 * u - 0.714136 * v;
    const double b = y + 1.772 * u;
    out[3 * i] = from_gray_level(saturate255(r), layout.lo, layout.hi);
    out[3 * i + 1] = from_gray_level(saturate255(g), layout.lo, layout.hi);
    out[3 * i + 2] = from_gray_level(saturate255(b), layout.lo, layout.hi);
  }
  return out;
}

// ---------------------------------------------------------------------------
// composition

CombinationPlan plan_combination(std::uint64_t seed, int jpeg_quality) {
  Rng rng(seed);
  CombinationPlan p;
  p.blur = rng.coin();
  p.blur_sigma = kBlurSigmas[rng.index(kBlurSigmas.size())];
  p.crop = rng.coin();
  p.crop_ratio = rng.uniform(kCropMin, 1.0);
  p.noise = rng.coin();
  p.noise_sigma = rng.uniform(0.0, kNoiseMax);
  p.noise_seed = rng.next_u64();
  p.jpeg = rng.coin();
  p.jpeg_quality = jpeg_quality;
  return p;
}

Vec apply_plan(ConstVecView image, const ImageLayout& layout, const CombinationPlan& plan) {
  Vec x(image.begin(), image.end());
  if (plan.blur) x = blur(x, layout, plan.blur_sigma);
  if (plan.crop) x = crop_resize(x, layout, plan.crop_ratio);
  if (plan.noise) x = add_noise(x, layout, plan.noise_sigma, plan.noise_seed);
  if (plan.jpeg) x = jpeg(x, layout, plan.jpeg_quality);
  return x;
}

Vec combination(ConstVecView image, const ImageLayout& layout, std::uint64_t seed, int jpeg_quality) {
  check_image(image, layout);
  return apply_plan(image, layout, plan_combination(seed, jpeg_quality));
}

void PostProcessSpec::validate() const {
  switch (kind) {
    case Kind::Blur:
      if (sigma && !(*sigma > 0.0)) throw Error(Errc::InvalidArgument, "blur sigma must be > 0");
      break;
    case Kind::Crop:
      if (ratio && !(*ratio >= kCropMin && *ratio <= 1.0))
        throw Error(Errc::InvalidArgument, "crop ratio must be in [0.8, 1]");
      break;
    case Kind::Noise:
      if (sigma && !(*sigma >= 0.0)) throw Error(Errc::InvalidArgument, "noise sigma must be >= 0");
      break;
    case Kind::Jpeg:
    case Kind::Combination:
      if (quality < 1 || quality > 100) throw Error(Errc::BadQuality, "JPEG quality must be in [1, 100]");
      break;
    case Kind::Identity:
      break;
  }
}

Vec PostProcessSpec::apply(ConstVecView image, const ImageLayout& layout, std::uint64_t sample_index) const {
  const std::uint64_t s = derive_seed(seed, sample_index);
  switch (kind) {
    case Kind::Identity:
      check_image(image, layout);
      return Vec(image.begin(), image.end());
    case Kind::Blur: {
      Rng rng(s);
      return blur(image, layout, sigma ? *sigma : kBlurSigmas[rng.index(kBlurSigmas.size())]);
    }
    case Kind::Crop: {
      Rng rng(s);
      return crop_resize(image, layout, ratio ? *ratio : rng.uniform(kCropMin, 1.0));
    }
    case Kind::Noise: {
      Rng rng(s);
      const double sg = sigma ? *sigma : rng.uniform(0.0, kNoiseMax);
      return add_noise(image, layout, sg, rng.next_u64());
    }
    case Kind::Jpeg:
      return jpeg(image, layout, quality);
    case Kind::Combination:
      return combination(image, layout, s, quality);
  }
  return Vec(image.begin(), image.end());
}

void PostProcessSpec::apply_in_place(VecView image, const ImageLayout& layout, std::uint64_t sample_index) const {
  if (kind == Kind::Identity) return;
  const Vec out = apply(image, layout, sample_index);
  std::copy(out.begin(), out.end(), image.begin());
}

std::string PostProcessSpec::describe() const {
  std::ostringstream os;
  os << kind_name(kind);
  if (sigma) os << " sigma=" << *sigma;
  if (ratio) os << " ratio=" << *ratio;
  if (kind == Kind::Jpeg || kind == Kind::Combination) os << " quality=" << quality;
  return os.str();
}

void write_pnm(std::ostream& out, ConstVecView image, const ImageLayout& layout) {
  check_image(image, layout);
  out << (layout.channels == 1 ? "P2" : "P3") << "\n" << layout.width << " " << layout.height << "\n255\n";
  const std::size_t per_row = static_cast<std::size_t>(layout.width) * layout.channels;
  for (std::size_t i = 0; i < image.size(); ++i) {
    out << to_gray_level(image[i], layout.lo, layout.hi);
    out << (((i + 1) % per_row == 0) ? '\n' : ' ');
  }
}

}  // namespace dattr::postproc
