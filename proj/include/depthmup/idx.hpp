#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace depthmup {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major per image
};

struct IdxLabels {
  std::uint32_t count = 0;
  std::vector<std::uint8_t> labels;
};

IdxImages read_idx_images(const std::string& path);
IdxLabels read_idx_labels(const std::string& path);

void write_idx_images(const std::string& path, const IdxImages& images);
void write_idx_labels(const std::string& path, const IdxLabels& labels);

struct IdxDataset {
  IdxImages images;
  IdxLabels labels;

  std::size_t size() const { return images.count; }
  int dim() const { return static_cast<int>(images.rows * images.cols); }
  /// Pixels of image i scaled to [0, 1].
  Eigen::VectorXd pixels(std::size_t i) const;
};

/// Reads both files and checks that the counts agree.
IdxDataset load_idx(const std::string& image_path, const std::string& label_path);

}  // namespace depthmup
