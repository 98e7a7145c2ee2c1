#pragma once

#include <cmath>
#include <limits>

namespace unilite::algo {

// One learner update's summary. Fields an algorithm does not produce stay NaN.
struct UpdateStats {
  static constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  double policy_loss = nan;
  double value_loss = nan;
  double entropy = nan;
  double kl = nan;
  double lr = nan;
  double clip_fraction = nan;
  double staleness = nan;
  double q_loss = nan;
  double actor_loss = nan;
  double alpha = nan;
  double alpha_loss = nan;
};

}  // namespace unilite::algo
