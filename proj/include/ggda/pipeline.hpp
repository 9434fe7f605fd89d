#ifndef GGDA_PIPELINE_HPP
#define GGDA_PIPELINE_HPP

#include <optional>
#include <string>

#include "ggda/config.hpp"
#include "ggda/datahub.hpp"

namespace ggda {
namespace cli {

/// Materializes the configured dataset (loading or generating, splitting,
/// and corrupting labels when flip_fraction > 0). Deterministic in the
/// config seeds, so every subcommand reconstructs the identical dataset.
std::pair<datahub::Dataset, std::optional<datahub::CorruptionRecord>> build_dataset(
    const RunConfig& cfg);

// Subcommands. Each reads its inputs from cfg and the files earlier stages
// wrote under out_dir, and writes its own artifacts atomically.
void cmd_train(const RunConfig& cfg, const std::string& out_dir);     // checkpoints.json
void cmd_group(const RunConfig& cfg, const std::string& out_dir);     // partition.json
void cmd_attribute(const RunConfig& cfg, const std::string& out_dir); // scores.json/.csv
void cmd_eval(const RunConfig& cfg, const std::string& out_dir,
              const std::string& metric);                             // eval_<metric>.json/.csv
void cmd_bench(const RunConfig& cfg, const std::string& out_dir);     // bench.csv

}  // namespace cli
}  // namespace ggda

#endif
