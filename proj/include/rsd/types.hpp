#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace rsd {

// Training and verification run in double; checkpoints store float32.
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

template <typename Scalar>
using VecT = Eigen::Vector<Scalar, Eigen::Dynamic>;
template <typename Scalar>
using ArrT = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Channel-major [c,h,w] layout: index = (ch*h + row)*w + col.
struct Shape {
  int c = 1;
  int h = 1;
  int w = 1;

  int size() const { return c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "[" + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
  }
};

/// HR image and its degraded-then-upsampled counterpart, both in model
/// space with values in [-1,1] and identical shape.
struct PairedSample {
  Vec x0;
  Vec y0;
  Shape shape;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PrecisionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateDensityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_same_shape(const Shape& a, const Shape& b,
                               const char* where) {
  if (!(a == b))
    throw ShapeError(std::string(where) + ": shape mismatch " + a.str() +
                     " vs " + b.str());
}

inline void require_same_size(const Vec& a, const Vec& b, const char* where) {
  if (a.size() != b.size())
    throw ShapeError(std::string(where) + ": size mismatch " +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
}

}  // namespace rsd
