#ifndef PROJCGAN_COMMANDS_HPP
#define PROJCGAN_COMMANDS_HPP

#include <cstdint>

#include "projcgan/config.hpp"

namespace projcgan {

/// Fixed child-stream ids spawned off Rng(seed). Every random draw a command
/// makes derives from one of these, so each artifact is reproducible from the
/// echoed config alone.
namespace stream {
inline constexpr std::uint64_t kInit = 11;     // model construction
inline constexpr std::uint64_t kLoop = 12;     // training loop batches
inline constexpr std::uint64_t kPanel = 13;    // fixed sample panel
inline constexpr std::uint64_t kMetric = 14;   // per-cadence metric draws
inline constexpr std::uint64_t kEval = 15;     // evaluation sampling
inline constexpr std::uint64_t kMorph = 16;    // morph z seeds
inline constexpr std::uint64_t kFxInit = 17;   // feature extractor weights
inline constexpr std::uint64_t kFxFit = 18;    // feature extractor batches
}  // namespace stream

/// Semantic validation across the whole key table; every problem found is
/// collected and raised in one ValueError, mirroring the parser's behavior.
void validate_run_config(const RunConfig& cfg);

/// Train the configured task/variant. Artifacts under `out`: config_echo.txt,
/// ckpt_NNNNNN.bin, metrics.csv, panel images per cadence, timing.txt. The
/// metric CSV uses a zero wall clock so identical config + seed reproduces
/// it bytewise; real elapsed time goes to timing.txt. iterations=0 writes
/// the initial checkpoint and the echo only. resume=true continues from the
/// newest checkpoint in `out` and appends to the existing CSV.
void cmd_train(const RunConfig& cfg);

/// One cmd_train run per (variant, lr, beta1) grid point in its own
/// subdirectory, then a local-score evaluation of each final checkpoint.
/// Emits sweep.csv and score-vs-parameter plots. Grid points whose done
/// marker exists are not retrained.
void cmd_sweep(const RunConfig& cfg);

/// Feature-space evaluation of a trained classgen checkpoint: local score
/// with splits, mean and per-class intra-FID with a split-half real-vs-real
/// noise floor. Emits report.jsonl, per_class.csv, and a per-class plot.
void cmd_eval(const RunConfig& cfg);

/// Interpolated class renderings from a trained classgen checkpoint: one
/// strip per z seed per consecutive class pair, lambda = i/(steps-1).
/// Image tasks write strips; the 2-d task writes coordinate CSVs.
void cmd_morph(const RunConfig& cfg);

/// Super-resolution of the dataset's first n_eval images against bilinear
/// and bicubic baselines: output grids, per-method MS-SSIM, classifier
/// accuracy single-shot and MC-ensembled. Emits report.jsonl.
void cmd_superres(const RunConfig& cfg);

}  // namespace projcgan

#endif
