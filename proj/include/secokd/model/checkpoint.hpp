#pragma once

#include <string>

#include "secokd/model/model.hpp"

namespace secokd::model {

// Self-describing binary container: a JSON header with the configs and the
// named/shaped tensor directory, followed by raw little-endian float64 data.
// save followed by load is bit-exact.
void save_checkpoint(const AdaptedModel& m, const std::string& path);
AdaptedModel load_checkpoint(const std::string& path);

}  // namespace secokd::model
