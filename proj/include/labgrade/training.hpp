#ifndef LABGRADE_TRAINING_HPP_
#define LABGRADE_TRAINING_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace labgrade {

struct OptimizerConfig {
  double learning_rate = 5e-3;
  int batch_size = 8;
  int epochs = 10;
  std::uint64_t seed = 1;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;

  /// One {epoch, train_loss, val_loss} object per line.
  std::string to_jsonl() const;
  static TrainingLog from_jsonl(const std::string& text);
};

/// Adam over a fixed list of dense parameter blocks.
template <typename Scalar>
class Adam {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  explicit Adam(Scalar learning_rate, Scalar beta1 = 0.9, Scalar beta2 = 0.999, Scalar epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
    if (first_.empty()) {
      for (const Matrix* p : params) {
        first_.push_back(Matrix::Zero(p->rows(), p->cols()));
        second_.push_back(Matrix::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    const Scalar c1 = 1 - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar c2 = 1 - std::pow(beta2_, static_cast<Scalar>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      first_[i] = beta1_ * first_[i] + (1 - beta1_) * grads[i];
      second_[i] = beta2_ * second_[i] + (1 - beta2_) * grads[i].cwiseAbs2();
      params[i]->array() -=
          lr_ * (first_[i].array() / c1) / ((second_[i].array() / c2).sqrt() + epsilon_);
    }
  }

  long steps() const { return t_; }

 private:
  Scalar lr_, beta1_, beta2_, epsilon_;
  long t_ = 0;
  std::vector<Matrix> first_, second_;
};

}  // namespace labgrade

#endif  // LABGRADE_TRAINING_HPP_
