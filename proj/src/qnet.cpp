#include "curbsense/qnet.hpp"

#include "binary.hpp"
#include "curbsense/error.hpp"

#include <cmath>
#include <fstream>

namespace curbsense::marl {

namespace {

constexpr char kMagic[6] = "CSQN1";
constexpr std::uint32_t kVersion = 1;

void check_sizes(const std::vector<int>& sizes)
{
  if (sizes.size() < 2)
    throw usage_error("a network needs at least an input and an output layer");
  for (int s : sizes)
    if (s < 1)
      throw usage_error("layer sizes must be positive");
}

} // namespace

QNet QNet::zeros(std::vector<int> sizes)
{
  check_sizes(sizes);
  QNet net;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    net.layers_.push_back({Eigen::MatrixXd::Zero(sizes[l + 1], sizes[l]), Eigen::VectorXd::Zero(sizes[l + 1])});
  net.sizes_ = std::move(sizes);
  return net;
}

QNet::QNet(std::vector<int> sizes, Rng& rng)
{
  *this = zeros(std::move(sizes));
  for (auto& layer : layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.w.rows() + layer.w.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index c = 0; c < layer.w.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
        layer.w(r, c) = u(rng);
  }
}

Eigen::VectorXd QNet::forward(const Eigen::VectorXd& x) const
{
  if (x.size() != input_size())
    throw usage_error("state length " + std::to_string(x.size()) + " does not match network input " +
                      std::to_string(input_size()));
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::VectorXd z = layers_[l].w * a + layers_[l].b;
    a = l + 1 < layers_.size() ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  return a;
}

Eigen::MatrixXd QNet::forward_batch(const Eigen::MatrixXd& x) const
{
  if (x.rows() != input_size())
    throw usage_error("batch rows do not match network input");
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].w * a;
    z.colwise() += layers_[l].b;
    a = l + 1 < layers_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return a;
}

std::size_t QNet::parameter_count() const
{
  std::size_t n = 0;
  for (const auto& l : layers_)
    n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

std::vector<double> QNet::parameters() const
{
  std::vector<double> p;
  p.reserve(parameter_count());
  for (const auto& l : layers_) {
    p.insert(p.end(), l.w.data(), l.w.data() + l.w.size());
    p.insert(p.end(), l.b.data(), l.b.data() + l.b.size());
  }
  return p;
}

void QNet::set_parameters(std::span<const double> p)
{
  if (p.size() != parameter_count())
    throw usage_error("parameter vector has the wrong length");
  std::size_t i = 0;
  for (auto& l : layers_) {
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(i), l.w.size(), l.w.data());
    i += static_cast<std::size_t>(l.w.size());
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(i), l.b.size(), l.b.data());
    i += static_cast<std::size_t>(l.b.size());
  }
}

double td_loss(const QNet& net, const Eigen::MatrixXd& x, std::span<const int> actions,
               std::span<const double> targets, Gradient* grad)
{
  const auto n = x.cols();
  if (n == 0 || static_cast<std::size_t>(n) != actions.size() || actions.size() != targets.size())
    throw usage_error("loss needs a non-empty batch with one action and target per sample");
  const auto& layers = net.layers();

  // Forward pass keeping pre-activations.
  std::vector<Eigen::MatrixXd> acts{x};
  std::vector<Eigen::MatrixXd> pre;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].w * acts.back();
    z.colwise() += layers[l].b;
    pre.push_back(z);
    acts.push_back(l + 1 < layers.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
  }
  const Eigen::MatrixXd& q = acts.back();

  Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(q.rows(), n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    if (a < 0 || a >= q.rows())
      throw usage_error("action index out of range");
    const double err = q(a, i) - targets[static_cast<std::size_t>(i)];
    loss += err * err;
    dz(a, i) = 2.0 * err / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (!grad)
    return loss;

  grad->resize(layers.size());
  for (std::size_t l = layers.size(); l-- > 0;) {
    (*grad)[l].w = dz * acts[l].transpose();
    (*grad)[l].b = dz.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd da = layers[l].w.transpose() * dz;
      dz = da.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return loss;
}

Adam::Adam(const QNet& net, AdamConfig cfg) : cfg_(cfg)
{
  for (const auto& l : net.layers()) {
    m_.push_back({Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()), Eigen::VectorXd::Zero(l.b.size())});
    v_.push_back({Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()), Eigen::VectorXd::Zero(l.b.size())});
  }
}

void Adam::apply(QNet& net, const Gradient& grad)
{
  if (grad.size() != m_.size())
    throw usage_error("gradient does not match the optimizer state");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.array() -= cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
  };
  auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].w, grad[l].w, m_[l].w, v_[l].w);
    update(layers[l].b, grad[l].b, m_[l].b, v_[l].b);
  }
}

void write_qnet(std::ostream& out, const QNet& net)
{
  binary::Writer w(out);
  binary::put_header(w, kMagic, kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(net.sizes().size()));
  for (int s : net.sizes())
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s));
  for (double p : net.parameters())
    w.put<double>(p);
}

QNet read_qnet(std::istream& in, const std::string& source)
{
  binary::Reader r(in, source);
  binary::expect_header(r, kMagic, kVersion);
  const auto nl = r.get<std::uint32_t>();
  if (nl < 2 || nl > 64)
    throw data_error(source + ": implausible layer count " + std::to_string(nl));
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < nl; ++i) {
    const auto s = r.get<std::uint32_t>();
    if (s == 0 || s > (1u << 20))
      throw data_error(source + ": implausible layer size " + std::to_string(s));
    sizes.push_back(static_cast<int>(s));
  }
  QNet net = QNet::zeros(sizes);
  std::vector<double> p(net.parameter_count());
  for (auto& v : p)
    v = r.get<double>();
  r.expect_end();
  net.set_parameters(p);
  return net;
}

void save_qnet(const QNet& net, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw data_error("cannot write model file " + path.string());
  write_qnet(out, net);
}

QNet load_qnet(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw data_error("cannot open model file " + path.string());
  return read_qnet(in, path.string());
}

} // namespace curbsense::marl
