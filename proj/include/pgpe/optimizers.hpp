#ifndef PGPE_OPTIMIZERS_HPP
#define PGPE_OPTIMIZERS_HPP

// Gradient-following rules used to move the center of the search
// distribution. Every rule returns an ascent step: a vector that is *added*
// to the current solution (maximization).

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>

#include "pgpe/common.hpp"

namespace pgpe {

struct ClipUpConfig {
  double step_size = 0.15;
  /// Upper bound on the norm of every returned update. +inf disables clipping.
  double max_speed = 0.3;
  double momentum = 0.9;

  void validate() const {
    require(step_size > 0.0, "ClipUp step size must be positive");
    require(max_speed > 0.0, "ClipUp max speed must be positive");
    require(momentum >= 0.0 && momentum < 1.0, "ClipUp momentum must lie in [0, 1)");
  }
};

struct ClipUpState {
  Vector velocity;

  ClipUpState() = default;
  explicit ClipUpState(std::size_t dimension) : velocity(dimension, 0.0) {}
};

struct AdamConfig {
  double step_size = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    require(step_size > 0.0, "Adam step size must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0, "Adam beta1 must lie in [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, "Adam beta2 must lie in [0, 1)");
    require(epsilon > 0.0, "Adam epsilon must be positive");
  }
};

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step_count = 0;

  AdamState() = default;
  explicit AdamState(std::size_t dimension)
      : first_moment(dimension, 0.0), second_moment(dimension, 0.0) {}
};

struct AscentDirection {
  Vector update;
  /// True when the velocity was rescaled down to the speed limit.
  bool clipped = false;
};

namespace detail {

inline AscentDirection momentum_step(ClipUpState& state, const ClipUpConfig& config,
                                     std::span<const double> gradient, bool clip) {
  require_same_size(gradient.size(), state.velocity.size(), "ClipUp gradient");
  require_finite(gradient, "gradient");

  const double grad_norm = l2_norm(gradient);
  // 0/0 is taken as the zero vector: the velocity just decays.
  const double scale = grad_norm > 0.0 ? config.step_size / grad_norm : 0.0;

  AscentDirection out;
  out.update.resize(gradient.size());
  for (std::size_t i = 0; i < gradient.size(); ++i)
    out.update[i] = config.momentum * state.velocity[i] + scale * gradient[i];

  if (clip) {
    const double speed = l2_norm(out.update);
    if (speed > config.max_speed) {
      const double ratio = config.max_speed / speed;
      for (double& x : out.update) x *= ratio;
      out.clipped = true;
    }
  }
  state.velocity = out.update;
  return out;
}

}  // namespace detail

/// Heavy-ball ascent on the normalized gradient, with the velocity clipped to
/// `max_speed`. The returned update becomes the new velocity.
inline AscentDirection clipup_step(ClipUpState& state, const ClipUpConfig& config,
                                   std::span<const double> gradient) {
  return detail::momentum_step(state, config, gradient, /*clip=*/true);
}

/// ClipUp without the clipping branch.
inline AscentDirection noclip_step(ClipUpState& state, const ClipUpConfig& config,
                                   std::span<const double> gradient) {
  return detail::momentum_step(state, config, gradient, /*clip=*/false);
}

/// Bias-corrected Adam, sign-flipped for ascent.
inline AscentDirection adam_step(AdamState& state, const AdamConfig& config,
                                 std::span<const double> gradient) {
  detail::require_same_size(gradient.size(), state.first_moment.size(), "Adam gradient");
  detail::require_finite(gradient, "gradient");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);

  AscentDirection out;
  out.update.resize(gradient.size());
  for (std::size_t i = 0; i < gradient.size(); ++i) {
    const double g = gradient[i];
    state.first_moment[i] = config.beta1 * state.first_moment[i] + (1.0 - config.beta1) * g;
    state.second_moment[i] =
        config.beta2 * state.second_moment[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.first_moment[i] / correction1;
    const double v_hat = state.second_moment[i] / correction2;
    out.update[i] = config.step_size * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
  return out;
}

inline AscentDirection plain_step(double step_size, std::span<const double> gradient) {
  detail::require_finite(gradient, "gradient");
  AscentDirection out;
  out.update.assign(gradient.begin(), gradient.end());
  for (double& x : out.update) x *= step_size;
  return out;
}

enum class OptimizerKind { clipup, noclip, adam, plain };

inline std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::clipup: return "clipup";
    case OptimizerKind::noclip: return "noclip";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::plain: return "plain";
  }
  return "?";
}

inline OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "clipup") return OptimizerKind::clipup;
  if (name == "noclip") return OptimizerKind::noclip;
  if (name == "adam") return OptimizerKind::adam;
  if (name == "plain" || name == "sga") return OptimizerKind::plain;
  throw Error("unknown optimizer '" + std::string(name) + "'");
}

/// One optimizer instance: configuration plus its mutable state, selected at
/// run time.
class Optimizer {
 public:
  struct ClipUp {
    ClipUpConfig config;
    ClipUpState state;
  };
  struct NoClip {
    ClipUpConfig config;
    ClipUpState state;
  };
  struct Adam {
    AdamConfig config;
    AdamState state;
  };
  struct Plain {
    double step_size = 0.0;
  };
  using Variant = std::variant<ClipUp, NoClip, Adam, Plain>;

  static Optimizer clipup(std::size_t dimension, const ClipUpConfig& config) {
    config.validate();
    return Optimizer(ClipUp{config, ClipUpState(dimension)});
  }
  static Optimizer noclip(std::size_t dimension, const ClipUpConfig& config) {
    config.validate();
    return Optimizer(NoClip{config, ClipUpState(dimension)});
  }
  static Optimizer adam(std::size_t dimension, const AdamConfig& config) {
    config.validate();
    return Optimizer(Adam{config, AdamState(dimension)});
  }
  static Optimizer plain(double step_size) {
    require(step_size >= 0.0, "plain ascent step size must be nonnegative");
    return Optimizer(Plain{step_size});
  }

  explicit Optimizer(Variant impl) : impl_(std::move(impl)) {}

  AscentDirection ascent(std::span<const double> gradient) {
    return std::visit(
        [&](auto& o) -> AscentDirection {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, ClipUp>) return clipup_step(o.state, o.config, gradient);
          else if constexpr (std::is_same_v<T, NoClip>) return noclip_step(o.state, o.config, gradient);
          else if constexpr (std::is_same_v<T, Adam>) return adam_step(o.state, o.config, gradient);
          else return plain_step(o.step_size, gradient);
        },
        impl_);
  }

  OptimizerKind kind() const { return static_cast<OptimizerKind>(impl_.index()); }

  /// Speed limit enforced on updates, +inf when the rule has none.
  double max_speed() const {
    if (auto* c = std::get_if<ClipUp>(&impl_)) return c->config.max_speed;
    return std::numeric_limits<double>::infinity();
  }

  const Variant& variant() const { return impl_; }
  Variant& variant() { return impl_; }

 private:
  Variant impl_;
};

}  // namespace pgpe

#endif  // PGPE_OPTIMIZERS_HPP
