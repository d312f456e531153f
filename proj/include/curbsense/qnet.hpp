#pragma once

#include "curbsense/rng.hpp"

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace curbsense::marl {

/// Dense layers with ReLU on hidden layers and identity output.
class QNet
{
public:
  struct Layer
  {
    Eigen::MatrixXd w; // out x in
    Eigen::VectorXd b;

    bool operator==(const Layer& o) const { return w == o.w && b == o.b; }
  };

  QNet() = default;
  /// Glorot-uniform weights, zero biases.
  QNet(std::vector<int> sizes, Rng& rng);
  static QNet zeros(std::vector<int> sizes);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  /// Columns are samples.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> p);

  bool operator==(const QNet& o) const { return sizes_ == o.sizes_ && layers_ == o.layers_; }

private:
  std::vector<int> sizes_;
  std::vector<Layer> layers_;
};

using Gradient = std::vector<QNet::Layer>;

/// Mean over samples of (Q(s_i, a_i) - y_i)^2; fills `grad` when given.
double td_loss(const QNet& net, const Eigen::MatrixXd& x, std::span<const int> actions,
               std::span<const double> targets, Gradient* grad = nullptr);

struct AdamConfig
{
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam
{
public:
  Adam() = default;
  Adam(const QNet& net, AdamConfig cfg = {});

  void apply(QNet& net, const Gradient& grad);
  std::int64_t steps() const { return t_; }

private:
  AdamConfig cfg_;
  Gradient m_, v_;
  std::int64_t t_ = 0;
};

void write_qnet(std::ostream& out, const QNet& net);
QNet read_qnet(std::istream& in, const std::string& source = "<model>");
void save_qnet(const QNet& net, const std::filesystem::path& path);
QNet load_qnet(const std::filesystem::path& path);

} // namespace curbsense::marl
