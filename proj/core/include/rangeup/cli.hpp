#pragma once

namespace rangeup {

// Full command-line surface: project, downsample, upsample, eval, synth,
// gradcheck, maskfit, heatmap. Returns the process exit code (0 success,
// 1 runtime error, 2 usage error).
int run_cli(int argc, const char* const* argv);

} // namespace rangeup
