#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nngauge {

enum class ActTag { ReLU, LeakyReLU, Tanh, GeLU, Identity, Polynomial, Custom };

// Pointwise activation together with its first derivative and smoothness
// order. The derivative convention at kinks (ReLU at 0) is sigma'(0) = 0.
struct Nonlinearity {
  ActTag tag = ActTag::Identity;
  double slope = 0.0;                // LeakyReLU negative-side slope
  std::vector<double> coeffs;        // Polynomial, c[k] * x^k
  int smoothness_order = 1;          // r
  std::function<double(double)> value;
  std::function<double(double)> deriv;

  double operator()(double x) const { return value(x); }

  std::string name() const;

  static Nonlinearity relu();
  static Nonlinearity leaky_relu(double negative_slope);
  static Nonlinearity tanh_act();
  static Nonlinearity gelu();
  static Nonlinearity identity();
  static Nonlinearity polynomial(std::vector<double> coefficients);
  static Nonlinearity custom(std::function<double(double)> f,
                             std::function<double(double)> df, int order);
  static Nonlinearity from_name(const std::string& name);

  bool is_smooth() const {
    return tag == ActTag::Tanh || tag == ActTag::GeLU ||
           tag == ActTag::Identity || tag == ActTag::Polynomial;
  }
  bool is_piecewise_linear() const {
    return tag == ActTag::ReLU || tag == ActTag::LeakyReLU;
  }
};

inline Nonlinearity Nonlinearity::relu() {
  Nonlinearity s;
  s.tag = ActTag::ReLU;
  s.smoothness_order = 1;
  s.value = [](double x) { return x > 0.0 ? x : 0.0; };
  s.deriv = [](double x) { return x > 0.0 ? 1.0 : 0.0; };
  return s;
}

inline Nonlinearity Nonlinearity::leaky_relu(double negative_slope) {
  Nonlinearity s;
  s.tag = ActTag::LeakyReLU;
  s.slope = negative_slope;
  s.smoothness_order = 1;
  s.value = [negative_slope](double x) {
    return x > 0.0 ? x : negative_slope * x;
  };
  s.deriv = [negative_slope](double x) {
    return x > 0.0 ? 1.0 : negative_slope;
  };
  return s;
}

inline Nonlinearity Nonlinearity::tanh_act() {
  Nonlinearity s;
  s.tag = ActTag::Tanh;
  s.smoothness_order = 4;
  s.value = [](double x) { return std::tanh(x); };
  s.deriv = [](double x) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  };
  return s;
}

inline Nonlinearity Nonlinearity::gelu() {
  Nonlinearity s;
  s.tag = ActTag::GeLU;
  s.smoothness_order = 4;
  s.value = [](double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
  };
  s.deriv = [](double x) {
    const double phi =
        0.39894228040143267794 * std::exp(-0.5 * x * x);  // N(0,1) density
    return 0.5 * (1.0 + std::erf(x * 0.7071067811865475244)) + x * phi;
  };
  return s;
}

inline Nonlinearity Nonlinearity::identity() {
  Nonlinearity s;
  s.tag = ActTag::Identity;
  s.smoothness_order = 4;
  s.value = [](double x) { return x; };
  s.deriv = [](double) { return 1.0; };
  return s;
}

inline Nonlinearity Nonlinearity::polynomial(std::vector<double> coefficients) {
  if (coefficients.empty())
    throw std::invalid_argument("polynomial needs at least one coefficient");
  Nonlinearity s;
  s.tag = ActTag::Polynomial;
  s.coeffs = std::move(coefficients);
  s.smoothness_order = 4;
  const auto c = s.coeffs;
  s.value = [c](double x) {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 0;) acc = acc * x + c[k];
    return acc;
  };
  s.deriv = [c](double x) {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 1;)
      acc = acc * x + static_cast<double>(k) * c[k];
    return acc;
  };
  return s;
}

inline Nonlinearity Nonlinearity::custom(std::function<double(double)> f,
                                         std::function<double(double)> df,
                                         int order) {
  Nonlinearity s;
  s.tag = ActTag::Custom;
  s.smoothness_order = order;
  s.value = std::move(f);
  s.deriv = std::move(df);
  return s;
}

inline std::string Nonlinearity::name() const {
  switch (tag) {
    case ActTag::ReLU: return "relu";
    case ActTag::LeakyReLU: return "leaky_relu";
    case ActTag::Tanh: return "tanh";
    case ActTag::GeLU: return "gelu";
    case ActTag::Identity: return "identity";
    case ActTag::Polynomial: return "polynomial";
    case ActTag::Custom: return "custom";
  }
  return "unknown";
}

inline Nonlinearity Nonlinearity::from_name(const std::string& name) {
  if (name == "relu") return relu();
  if (name == "leaky_relu") return leaky_relu(0.1);
  if (name == "tanh") return tanh_act();
  if (name == "gelu") return gelu();
  if (name == "identity") return identity();
  throw std::invalid_argument("unknown nonlinearity: " + name);
}

}  // namespace nngauge
