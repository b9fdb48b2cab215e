// Command-line front end: `hipal <verb> [options]`.
#pragma once

#include "hipal/harness.hpp"
#include "hipal/synthgen.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace hipal::cli {

/// Runs one command line (args exclude the program name). Returns the exit
/// code: 0 on success, 2 on usage errors, 1 on any other failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Generator keys: participants, months, vocab_size, categories,
/// mean_shifts, max_shifts_per_month, mean_events, max_events,
/// interval_log_mean, interval_log_sd, signal_strength, label_bias,
/// unlabeled_fraction, participant_sd, month_sd, intermittent,
/// tail_jitter_days, start_epoch, seed.
void apply_generator_config(const ConfigMap& config, GeneratorConfig& gen);

/// Splits one configuration into generator keys (plus seed) and experiment
/// keys (plus seed).
std::pair<ConfigMap, ConfigMap> split_config(const ConfigMap& config);

}  // namespace hipal::cli
