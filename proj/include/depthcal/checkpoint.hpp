#pragma once

#include <filesystem>
#include <istream>
#include <ostream>

#include "depthcal/config_io.hpp"
#include "depthcal/estimator.hpp"

namespace depthcal {

inline constexpr int kCheckpointVersion = 1;

/// Versioned JSON dump of an estimator: configuration, weights, optimizer
/// moments, recurrent state, history and Kalman belief. Doubles are written
/// in shortest round-trip form, so a reload continues bit-exactly.
Json checkpoint_to_json(const OnlineEstimator& e);
OnlineEstimator checkpoint_from_json(const Json& j);

void save_checkpoint(const OnlineEstimator& e, const std::filesystem::path& path);
OnlineEstimator load_checkpoint(const std::filesystem::path& path);

}  // namespace depthcal
