#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapo/optim.hpp"

namespace mapo {

inline constexpr const char* kCodeVersion = "mapo-lab 1.0";

struct CorruptRunError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Run header, written as the first line of metrics.jsonl. The start time is
// the only non-reproducible field in a run bundle.
struct RunHeader {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::string start_time;
    std::string code_version;
};

RunHeader make_run_header(const RunConfig& config);

// Appends whole lines only: each record is rendered in full, validated for
// finiteness, and written with a single flush, so a crash can at worst lose
// the final record, never corrupt one.
class MetricsWriter {
public:
    MetricsWriter(const std::string& path, const RunHeader& header, bool append = false);
    void append(const IterationMetrics& m);

private:
    std::ofstream out_;
    int last_iter_ = -1;
};

struct MetricsFile {
    RunHeader header;
    std::vector<IterationMetrics> records;
};

MetricsFile read_metrics(const std::string& path);

// Full optimizer/train state, enough to resume a run mid-stream. ASCII
// header line, then raw little-endian doubles (params, first moment, second
// moment, reward history).
void save_train_state(const std::string& path, const TrainState& state);
TrainState load_train_state(const std::string& path, const PolicyShape& shape);

// ---- Run bundle ----------------------------------------------------------
//
// <dir>/config.cfg      canonical config copy
// <dir>/metrics.jsonl   header line + one record per iteration
// <dir>/policy_<k>.bin  policy checkpoints (k = completed iterations)
// <dir>/state_<k>.bin   optimizer state alongside each checkpoint
// <dir>/scenes.txt      scene records for the first training batch
// <dir>/lock            held while a process owns the directory

std::string config_path(const std::string& dir);
std::string metrics_path(const std::string& dir);
std::string policy_path(const std::string& dir, int iteration);
std::string state_path(const std::string& dir, int iteration);
std::string scenes_path(const std::string& dir);

// Exclusive-creation lock file, removed on destruction. Throws if another
// process holds the directory.
class RunLock {
public:
    explicit RunLock(const std::string& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::string path_;
};

struct RunBundle {
    RunConfig config;
    RunHeader header;
    std::vector<IterationMetrics> metrics;
    std::vector<int> checkpoint_iters;  // sorted ascending
};

// Validates the stored config against the header hash; a mismatch (tampered
// bundle) raises CorruptRunError.
RunBundle load_run(const std::string& dir);

// One trajectory transcript for `replay`: regenerates the iteration's
// scenes/rollouts from the seeding scheme and renders the chosen group
// member with serialized <tool_call> blocks, per-step z, rewards, and the
// group advantages.
std::string render_transcript(const RunConfig& config, const PolicyParams& old_params,
                              const EmbeddingSpace& space, int iteration, int index);

}  // namespace mapo
