#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdasr {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXf = Mat<float>;
using MatrixXd = Mat<double>;
using VectorXf = Vec<float>;
using VectorXd = Vec<double>;

/// Row-major float matrix used for utterance features (frames x dims).
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using WordSeq = std::vector<std::string>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::string> split_words(const std::string& text);
std::string join_words(const WordSeq& words, const std::string& sep = " ");

}  // namespace cdasr
