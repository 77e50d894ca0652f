#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ikr/error.hpp"
#include "ikr/model.hpp"

namespace ikr {

enum class Split { Train, Validation, Test };

// Images are stored back to back in channel-major (C, H, W) order.
struct Dataset {
  Shape3 image_shape;
  std::size_t num_classes = 0;
  std::vector<float> images;
  std::vector<std::uint16_t> labels;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  std::span<const float> image(std::size_t i) const {
    return {images.data() + i * image_shape.size(), image_shape.size()};
  }
  std::span<float> image(std::size_t i) {
    return {images.data() + i * image_shape.size(), image_shape.size()};
  }

  void validate() const {
    if (images.size() != labels.size() * image_shape.size())
      throw DataError("dataset image buffer does not match label count");
    for (auto l : labels)
      if (l >= num_classes) throw DataError("label " + std::to_string(l) + " outside [0, " +
                                            std::to_string(num_classes) + ")");
  }
};

// Copies samples [first, first + count).
inline Dataset subset(const Dataset& d, std::size_t first, std::size_t count, Split split) {
  if (first + count > d.size()) throw UsageError("subset range exceeds dataset size");
  Dataset out;
  out.image_shape = d.image_shape;
  out.num_classes = d.num_classes;
  out.split = split;
  const std::size_t n = d.image_shape.size();
  out.images.assign(d.images.begin() + static_cast<std::ptrdiff_t>(first * n),
                    d.images.begin() + static_cast<std::ptrdiff_t>((first + count) * n));
  out.labels.assign(d.labels.begin() + static_cast<std::ptrdiff_t>(first),
                    d.labels.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

struct TrainValidation {
  Dataset train;
  Dataset validation;
};

// The last `validation_count` samples become the validation split.
inline TrainValidation split_train_validation(const Dataset& d, std::size_t validation_count) {
  if (validation_count >= d.size()) throw UsageError("validation split larger than dataset");
  const std::size_t n_train = d.size() - validation_count;
  return {subset(d, 0, n_train, Split::Train), subset(d, n_train, validation_count, Split::Validation)};
}

struct ChannelStats {
  std::vector<float> mean;
  std::vector<float> stddev;
};

inline ChannelStats channel_stats(const Dataset& d) {
  const auto& s = d.image_shape;
  const std::size_t plane = s.height * s.width;
  ChannelStats st{std::vector<float>(s.channels), std::vector<float>(s.channels)};
  for (std::size_t c = 0; c < s.channels; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const float* p = d.images.data() + i * s.size() + c * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        sum += p[j];
        sq += static_cast<double>(p[j]) * p[j];
      }
    }
    const double n = static_cast<double>(d.size() * plane);
    const double mean = n > 0 ? sum / n : 0.0;
    const double var = n > 0 ? std::max(sq / n - mean * mean, 0.0) : 0.0;
    st.mean[c] = static_cast<float>(mean);
    st.stddev[c] = static_cast<float>(var > 1e-12 ? std::sqrt(var) : 1.0);
  }
  return st;
}

// Per-channel standardization with statistics taken from the training split.
inline void standardize(Dataset& d, const ChannelStats& st) {
  const auto& s = d.image_shape;
  const std::size_t plane = s.height * s.width;
  if (st.mean.size() != s.channels) throw DimensionError("channel statistics do not match dataset");
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t c = 0; c < s.channels; ++c) {
      float* p = d.images.data() + i * s.size() + c * plane;
      const float inv = 1.0f / st.stddev[c];
      for (std::size_t j = 0; j < plane; ++j) p[j] = (p[j] - st.mean[c]) * inv;
    }
}

struct AugmentOptions {
  float contrast_min = 0.8f;
  float contrast_max = 1.2f;
  bool horizontal_flip = false;  // label-destructive for digits
};

// Appends one transformed replica of every sample: random contrast around the
// per-image channel mean and, when enabled, a random horizontal flip.
inline Dataset augment_duplicate(const Dataset& d, const AugmentOptions& opt, std::uint64_t seed) {
  Dataset out = d;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> contrast(opt.contrast_min, opt.contrast_max);
  std::bernoulli_distribution flip(0.5);
  const auto& s = d.image_shape;
  const std::size_t plane = s.height * s.width;
  out.images.reserve(d.images.size() * 2);
  out.labels.reserve(d.labels.size() * 2);
  std::vector<float> img(s.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto src = d.image(i);
    std::copy(src.begin(), src.end(), img.begin());
    const float c = contrast(rng);
    const bool do_flip = opt.horizontal_flip && flip(rng);
    for (std::size_t ch = 0; ch < s.channels; ++ch) {
      float* p = img.data() + ch * plane;
      double mean = 0.0;
      for (std::size_t j = 0; j < plane; ++j) mean += p[j];
      const float m = static_cast<float>(mean / static_cast<double>(plane));
      for (std::size_t j = 0; j < plane; ++j) p[j] = (p[j] - m) * c + m;
      if (do_flip)
        for (std::size_t y = 0; y < s.height; ++y) std::reverse(p + y * s.width, p + (y + 1) * s.width);
    }
    out.images.insert(out.images.end(), img.begin(), img.end());
    out.labels.push_back(d.labels[i]);
  }
  return out;
}

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off) {
  if (off + 4 > b.size()) throw DataError("truncated IDX header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace detail

// Reads an MNIST IDX image/label pair; pixels are scaled to [0, 1].
inline Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                              Split split = Split::Train) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);
  if (detail::read_be32(img, 0) != 0x00000803) throw DataError(images_path.string() + ": not an IDX3 image file");
  if (detail::read_be32(lab, 0) != 0x00000801) throw DataError(labels_path.string() + ": not an IDX1 label file");
  const std::size_t n = detail::read_be32(img, 4);
  const std::size_t rows = detail::read_be32(img, 8);
  const std::size_t cols = detail::read_be32(img, 12);
  if (detail::read_be32(lab, 4) != n) throw DataError("MNIST image and label counts differ");
  if (img.size() < 16 + n * rows * cols || lab.size() < 8 + n) throw DataError("truncated MNIST file");

  Dataset d;
  d.image_shape = {1, rows, cols};
  d.num_classes = 10;
  d.split = split;
  d.images.resize(n * rows * cols);
  for (std::size_t i = 0; i < d.images.size(); ++i) d.images[i] = static_cast<float>(img[16 + i]) / 255.0f;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.labels[i] = lab[8 + i];
  d.validate();
  return d;
}

// `dir` holds the four standard MNIST files (uncompressed).
inline Dataset load_mnist(const std::filesystem::path& dir, Split split) {
  if (split == Split::Test)
    return load_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", Split::Test);
  return load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", split);
}

// CIFAR-10 binary batch: 1 label byte + 3072 channel-major pixel bytes per record.
inline Dataset load_cifar10_batches(const std::vector<std::filesystem::path>& files, Split split) {
  constexpr std::size_t kPixels = 3 * 32 * 32;
  Dataset d;
  d.image_shape = kCifarShape;
  d.num_classes = 10;
  d.split = split;
  for (const auto& f : files) {
    const auto bytes = detail::read_file(f);
    if (bytes.size() % (kPixels + 1) != 0) throw DataError(f.string() + ": not a CIFAR-10 binary batch");
    for (std::size_t off = 0; off < bytes.size(); off += kPixels + 1) {
      d.labels.push_back(bytes[off]);
      for (std::size_t j = 0; j < kPixels; ++j) d.images.push_back(static_cast<float>(bytes[off + 1 + j]) / 255.0f);
    }
  }
  d.validate();
  return d;
}

inline Dataset load_cifar10(const std::filesystem::path& dir, Split split) {
  if (split == Split::Test) return load_cifar10_batches({dir / "test_batch.bin"}, Split::Test);
  std::vector<std::filesystem::path> files;
  for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  return load_cifar10_batches(files, split);
}

struct BlobOptions {
  std::size_t samples = 512;
  std::size_t classes = 2;
  Shape3 shape{1, 8, 8};
  float noise = 0.3f;
};

// Each class gets a random +/-1 template; samples are template plus Gaussian
// noise, so classes are linearly separable for small noise.
inline Dataset make_blobs(const BlobOptions& opt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::bernoulli_distribution coin(0.5);
  const std::size_t n = opt.shape.size();
  std::vector<std::vector<float>> templates(opt.classes, std::vector<float>(n));
  for (auto& t : templates)
    for (auto& v : t) v = coin(rng) ? 1.0f : -1.0f;

  Dataset d;
  d.image_shape = opt.shape;
  d.num_classes = opt.classes;
  d.images.reserve(n * opt.samples);
  for (std::size_t i = 0; i < opt.samples; ++i) {
    const auto label = static_cast<std::uint16_t>(i % opt.classes);
    d.labels.push_back(label);
    for (std::size_t j = 0; j < n; ++j) d.images.push_back(templates[label][j] + opt.noise * gauss(rng));
  }
  return d;
}

}  // namespace ikr
