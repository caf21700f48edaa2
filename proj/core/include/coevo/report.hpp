#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "coevo/graph.hpp"
#include "coevo/metrics.hpp"
#include "coevo/theorems.hpp"
#include "coevo/train.hpp"

namespace coevo {

/// Canonical config key order, mirrored by config files and CLI overrides.
const std::vector<std::string>& config_keys();

/// String form of one config field (for CSV columns and display).
std::string config_get(const TrainConfig& cfg, const std::string& key);

/// Parses and assigns one field; unknown keys and malformed values throw.
void config_set(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Flat `key = value` text document; full-line and trailing `#` comments.
/// Starts from defaults; unknown keys are errors naming the line.
TrainConfig parse_config_file(const std::string& path);

/// Everything one training run produces, serialized as a single JSON
/// document (plus CSV companions via write_report_csvs).
struct RunReport {
	TrainConfig config; // effective (after ablation overrides)
	std::string dataset;
	EvolutionTrace trace;
	std::vector<MetricSet> epoch_val;
	MetricSet val_metrics, test_metrics;
	std::vector<verify::TheoremReport> theorems; // present when requested
	std::string protocol_note;
	double train_seconds = 0;
};

std::string to_json(const TrainConfig& cfg);
std::string to_json(const MetricSet& ms);
std::string to_json(const EvolutionTrace& trace);
std::string to_json(const std::vector<verify::TheoremReport>& reps);
std::string to_json(const RunReport& report);
RunReport run_report_from_json(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file_atomic(const std::string& path, const std::string& content);

/// Model parameters plus the effective config and selection metadata.
/// Layout: manifest JSON plus one .f32 blob per parameter, written
/// temp-then-rename with the manifest last.
struct Checkpoint {
	TrainConfig config;
	std::string dataset;
	int best_epoch = -1;
	double best_val = 0;
	std::string val_metric_name;
	std::vector<std::pair<std::string, MatF>> params;
};

void save_checkpoint(const std::string& dir, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& dir);

/// Plot tables: summary.csv (one row per run, union of metric columns),
/// epochs.csv (losses of each epoch's final round plus the validation
/// metric), deltas.csv (topology change per round). Deterministic bytes for
/// identical input.
void write_report_csvs(const std::vector<RunReport>& runs, const std::string& out_dir);

} // namespace coevo
