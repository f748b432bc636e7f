#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <string>
#include <vector>

namespace flowps {

// Plain-text (P2) PGM with maxval 65535. Values are affinely quantized from
// [lo, hi] to 0..65535; write/read round-trips the quantized levels exactly.
void write_pgm(const std::string& path, const Eigen::MatrixXd& image,
               double lo, double hi);

// Reads a P2 PGM back as levels rescaled to [lo, hi].
Eigen::MatrixXd read_pgm(const std::string& path, double lo, double hi);

// Whitespace-separated text matrix: first line "rows cols", then rows lines
// of full-precision doubles.
void write_matrix(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const std::string& path);

// Minimal CSV writer: caller provides the header once and one formatted row
// at a time; fields are written verbatim (no quoting; callers must not pass
// commas inside fields).
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& header);
  void write_row(const std::vector<std::string>& fields);
  void flush();

 private:
  std::ofstream os_;
  std::size_t columns_ = 0;
};

// Reshape helpers between flat vectors and images (row-major pixels).
Eigen::MatrixXd vector_to_image(const Eigen::VectorXd& x, int height,
                                int width);
Eigen::VectorXd image_to_vector(const Eigen::MatrixXd& image);

}  // namespace flowps
