#include "flowps/io.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "flowps/errors.hpp"

namespace flowps {

namespace {

constexpr int kMaxval = 65535;

int quantize(double v, double lo, double hi) {
  const double u = (v - lo) / (hi - lo);
  const double q = std::round(u * kMaxval);
  if (q < 0.0) {
    return 0;
  }
  if (q > kMaxval) {
    return kMaxval;
  }
  return static_cast<int>(q);
}

}  // namespace

void write_pgm(const std::string& path, const Eigen::MatrixXd& image,
               double lo, double hi) {
  if (image.size() == 0) {
    throw UsageError("write_pgm: empty image");
  }
  if (!(hi > lo)) {
    throw DomainError("write_pgm: need hi > lo");
  }
  std::ofstream os(path);
  if (!os) {
    throw ConfigError("write_pgm: cannot open " + path);
  }
  os << "P2\n" << image.cols() << ' ' << image.rows() << '\n' << kMaxval
     << '\n';
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      os << quantize(image(r, c), lo, hi);
      os << (c + 1 == image.cols() ? '\n' : ' ');
    }
  }
  if (!os) {
    throw ConfigError("write_pgm: failed writing " + path);
  }
}

Eigen::MatrixXd read_pgm(const std::string& path, double lo, double hi) {
  std::ifstream is(path);
  if (!is) {
    throw ConfigError("read_pgm: cannot open " + path);
  }
  std::string magic;
  is >> magic;
  if (magic != "P2") {
    throw ConfigError("read_pgm: not a plain P2 file: " + path);
  }
  long long w = 0;
  long long h = 0;
  long long maxval = 0;
  is >> w >> h >> maxval;
  if (!is || w <= 0 || h <= 0 || maxval != kMaxval) {
    throw ConfigError("read_pgm: bad header in " + path);
  }
  Eigen::MatrixXd image(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      long long q = 0;
      is >> q;
      if (!is || q < 0 || q > kMaxval) {
        throw ConfigError("read_pgm: bad pixel data in " + path);
      }
      image(r, c) = lo + (hi - lo) * static_cast<double>(q) / kMaxval;
    }
  }
  return image;
}

void write_matrix(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream os(path);
  if (!os) {
    throw ConfigError("write_matrix: cannot open " + path);
  }
  os << m.rows() << ' ' << m.cols() << '\n';
  os << std::setprecision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      os << m(r, c) << (c + 1 == m.cols() ? '\n' : ' ');
    }
  }
  if (!os) {
    throw ConfigError("write_matrix: failed writing " + path);
  }
}

Eigen::MatrixXd read_matrix(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw ConfigError("read_matrix: cannot open " + path);
  }
  long long rows = 0;
  long long cols = 0;
  is >> rows >> cols;
  if (!is || rows <= 0 || cols <= 0) {
    throw ConfigError("read_matrix: bad header in " + path);
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v = 0.0;
      is >> v;
      if (!is) {
        throw ConfigError("read_matrix: truncated data in " + path);
      }
      m(r, c) = v;
    }
  }
  return m;
}

CsvWriter::CsvWriter(const std::string& path, const std::string& header)
    : os_(path) {
  if (!os_) {
    throw ConfigError("CsvWriter: cannot open " + path);
  }
  columns_ = static_cast<std::size_t>(
      std::count(header.begin(), header.end(), ',') + 1);
  os_ << header << '\n';
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
  if (fields.size() != columns_) {
    throw UsageError("CsvWriter: row has " + std::to_string(fields.size()) +
                     " fields, header has " + std::to_string(columns_));
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    os_ << fields[i] << (i + 1 == fields.size() ? '\n' : ',');
  }
}

void CsvWriter::flush() { os_.flush(); }

Eigen::MatrixXd vector_to_image(const Eigen::VectorXd& x, int height,
                                int width) {
  if (height < 1 || width < 1 ||
      x.size() != static_cast<Eigen::Index>(height) * width) {
    throw UsageError("vector_to_image: size mismatch");
  }
  Eigen::MatrixXd image(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      image(r, c) = x(static_cast<Eigen::Index>(r) * width + c);
    }
  }
  return image;
}

Eigen::VectorXd image_to_vector(const Eigen::MatrixXd& image) {
  Eigen::VectorXd x(image.size());
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      x(r * image.cols() + c) = image(r, c);
    }
  }
  return x;
}

}  // namespace flowps
