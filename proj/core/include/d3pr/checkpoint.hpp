#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "d3pr/denoiser.hpp"
#include "d3pr/gaussian.hpp"
#include "d3pr/train.hpp"

namespace d3pr {

struct ScheduleSpec {
  int t_max = 50;
  double offset_s = 0.008;

  friend bool operator==(const ScheduleSpec&, const ScheduleSpec&) = default;
};

/// Everything the refine pipeline needs: schedule parameters, the fitted
/// noise model and, once trained, the denoiser.
struct Checkpoint {
  ScheduleSpec schedule;
  std::optional<CondGaussianModel> noise_model;
  std::optional<DenoiserParams> denoiser;
  std::vector<EpochRecord> train_log;
};

inline constexpr char kCheckpointMagic[9] = "D3PRCK01";
inline constexpr int kCheckpointVersion = 1;

/// Layout: 8-byte magic, u64 little-endian header length, JSON header, then
/// the float64 little-endian arrays listed in the header's array table.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace d3pr
