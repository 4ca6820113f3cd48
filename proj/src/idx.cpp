#include "fedsynth/idx.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <vector>

namespace fedsynth {
namespace {

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  std::span<const std::uint8_t> take(std::uint64_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return s;
  }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_)
      throw IdxError(IdxError::Kind::truncated, std::string(what_) + ": file is truncated");
  }

  std::span<const std::uint8_t> bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  std::size_t num_classes) {
  Reader img(images, "images");
  if (const auto magic = img.u32(); magic != kIdxImageMagic)
    throw IdxError(IdxError::Kind::bad_magic, "images: bad magic number");
  const std::uint64_t count = img.u32();
  const std::uint64_t rows = img.u32();
  const std::uint64_t cols = img.u32();
  if (rows == 0 || cols == 0) throw IdxError(IdxError::Kind::dim_mismatch, "images: zero image size");
  if (count != 0 && rows * cols > images.size() / count)
    throw IdxError(IdxError::Kind::truncated, "images: file is truncated");
  const auto pixels = img.take(count * rows * cols);

  Reader lab(labels, "labels");
  if (const auto magic = lab.u32(); magic != kIdxLabelMagic)
    throw IdxError(IdxError::Kind::bad_magic, "labels: bad magic number");
  const std::uint64_t label_count = lab.u32();
  if (label_count != count)
    throw IdxError(IdxError::Kind::dim_mismatch, "image count " + std::to_string(count) +
                                                     " differs from label count " + std::to_string(label_count));
  const auto raw_labels = lab.take(label_count);

  Dataset d;
  d.X.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(rows * cols));
  for (std::size_t i = 0; i < pixels.size(); ++i) d.X.data()[i] = static_cast<double>(pixels[i]) / 255.0;
  d.labels.assign(raw_labels.begin(), raw_labels.end());
  const std::size_t inferred =
      raw_labels.empty() ? 0 : static_cast<std::size_t>(*std::max_element(raw_labels.begin(), raw_labels.end())) + 1;
  if (num_classes == 0) num_classes = inferred;
  if (inferred > num_classes)
    throw IdxError(IdxError::Kind::dim_mismatch, "labels exceed the declared class count");
  d.num_classes = num_classes;
  return d;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t num_classes) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  return parse_idx(images, labels, num_classes);
}

}  // namespace fedsynth
