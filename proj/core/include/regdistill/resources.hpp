#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace regdistill::resources {

/// Bytes per GB throughout this module.
inline constexpr double kBytesPerGb = 1073741824.0;

struct ModelProfile {
  std::string name;
  double n_params = 0.0;
  int weight_bits = 16;                      // 4, 8, 16 or 32
  double trainable_fraction = 1.0;           // (0, 1]
  double grad_bytes_per_trainable = 2.0;
  double optimizer_bytes_per_trainable = 8.0;
  double activation_overhead_gb = 0.0;

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;
};

struct MemoryEstimate {
  double weights_gb = 0.0;
  double gradients_gb = 0.0;
  double optimizer_gb = 0.0;
  double activations_gb = 0.0;
  double total_gb = 0.0;
};

/// Training footprint: quantized weights plus gradient and optimizer state for
/// the trainable share plus a flat activation allowance.
MemoryEstimate estimate_vram(const ModelProfile& profile);

/// "full-ft-7b" and "qlora-7b". Throws InvalidArgument for other names.
ModelProfile preset(std::string_view name);
std::vector<std::string> preset_names();

/// JSON object with the ModelProfile field names; absent fields keep defaults.
ModelProfile profile_from_json(std::string_view json);
std::string profile_json(const ModelProfile& p);
std::string estimate_json(const ModelProfile& p, const MemoryEstimate& e);

struct LossPoint {
  std::int64_t step = 0;
  double loss = 0.0;
};

/// CSV with a `step,loss` header. Throws InvalidArgument on malformed rows,
/// non-increasing steps or negative losses.
std::vector<LossPoint> parse_loss_csv(std::string_view csv);

struct ConvergenceReport {
  double initial = 0.0;
  double final_loss = 0.0;
  double drop_ratio = 0.0;
  /// First step from which every later loss is within tolerance of the final
  /// loss, reported only when that tail spans at least `window` points.
  std::optional<std::int64_t> stabilized_step;
  std::size_t monotone_violations = 0;  // adjacent increases
  std::size_t points = 0;
};

/// Throws TooFewPoints for fewer than two points.
ConvergenceReport analyze_convergence(const std::vector<LossPoint>& points,
                                      std::size_t stabilization_window = 1,
                                      double tolerance = 0.05);

std::string convergence_json(const ConvergenceReport& r);

}  // namespace regdistill::resources
