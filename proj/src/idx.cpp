#include "depthmup/idx.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "depthmup/errors.hpp"

namespace depthmup {

namespace {

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open IDX file: " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::string& what) {
  if (off + 4 > b.size()) throw ParseError("truncated IDX header while reading " + what, off);
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void put_be32(std::ofstream& os, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                         static_cast<char>(v)};
  os.write(bytes, 4);
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08X", v);
  return buf;
}

}  // namespace

IdxImages read_idx_images(const std::string& path) {
  const auto b = slurp(path);
  const std::uint32_t magic = be32(b, 0, "magic");
  if (magic != kIdxImageMagic) {
    throw ParseError("IDX image file " + path + " has magic " + hex(magic) + ", expected " + hex(kIdxImageMagic), 0);
  }
  IdxImages im;
  im.count = be32(b, 4, "image count");
  im.rows = be32(b, 8, "row count");
  im.cols = be32(b, 12, "column count");
  const std::size_t need = static_cast<std::size_t>(im.count) * im.rows * im.cols;
  if (b.size() < 16 + need) {
    throw ParseError("IDX image file " + path + " is truncated: expected " + std::to_string(need) +
                         " pixel bytes, found " + std::to_string(b.size() - 16),
                     b.size());
  }
  im.pixels.assign(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return im;
}

IdxLabels read_idx_labels(const std::string& path) {
  const auto b = slurp(path);
  const std::uint32_t magic = be32(b, 0, "magic");
  if (magic != kIdxLabelMagic) {
    throw ParseError("IDX label file " + path + " has magic " + hex(magic) + ", expected " + hex(kIdxLabelMagic), 0);
  }
  IdxLabels lb;
  lb.count = be32(b, 4, "label count");
  if (b.size() < 8 + static_cast<std::size_t>(lb.count)) {
    throw ParseError("IDX label file " + path + " is truncated: expected " + std::to_string(lb.count) +
                         " labels, found " + std::to_string(b.size() - 8),
                     b.size());
  }
  lb.labels.assign(b.begin() + 8, b.begin() + 8 + lb.count);
  return lb;
}

void write_idx_images(const std::string& path, const IdxImages& im) {
  if (im.pixels.size() != static_cast<std::size_t>(im.count) * im.rows * im.cols) {
    throw ContractViolation("write_idx_images: pixel buffer size does not match dimensions");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  put_be32(os, kIdxImageMagic);
  put_be32(os, im.count);
  put_be32(os, im.rows);
  put_be32(os, im.cols);
  os.write(reinterpret_cast<const char*>(im.pixels.data()), static_cast<std::streamsize>(im.pixels.size()));
}

void write_idx_labels(const std::string& path, const IdxLabels& lb) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  put_be32(os, kIdxLabelMagic);
  put_be32(os, static_cast<std::uint32_t>(lb.labels.size()));
  os.write(reinterpret_cast<const char*>(lb.labels.data()), static_cast<std::streamsize>(lb.labels.size()));
}

Eigen::VectorXd IdxDataset::pixels(std::size_t i) const {
  if (i >= size()) throw DomainError("IdxDataset: sample index out of range");
  const std::size_t d = static_cast<std::size_t>(dim());
  Eigen::VectorXd v(d);
  for (std::size_t k = 0; k < d; ++k) v[k] = images.pixels[i * d + k] / 255.0;
  return v;
}

IdxDataset load_idx(const std::string& image_path, const std::string& label_path) {
  IdxDataset ds{read_idx_images(image_path), read_idx_labels(label_path)};
  if (ds.images.count != ds.labels.count) {
    throw ParseError("IDX count mismatch: " + std::to_string(ds.images.count) + " images vs " +
                         std::to_string(ds.labels.count) + " labels",
                     4);
  }
  return ds;
}

}  // namespace depthmup
