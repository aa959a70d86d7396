#pragma once

#include "hsac/experiment.hpp"

#include <string>

namespace hsac {

// Flat key-value config file: one `key = value` pair per line, `#` comments.
// Unknown keys are rejected.
ExperimentConfig load_config_file(const std::string& path);
void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value);

} // namespace hsac
