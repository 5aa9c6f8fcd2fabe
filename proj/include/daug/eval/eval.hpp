#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "daug/nn/tensor.hpp"

namespace daug {

struct ClassIoU {
  long long intersection = 0;
  long long union_count = 0;
  std::optional<double> iou;  // empty when the class is absent from both masks
};

/// |pred and gt| / |pred or gt| over one channel of two {0,1} masks.
ClassIoU iou(const Tensor4& pred, const Tensor4& gt, int channel = 0);

/// Mean over the defined entries; throws ValueError if none is defined.
double mean_iou(std::span<const std::optional<double>> ious);

struct IoUReport {
  std::array<ClassIoU, 3> classes;
  double overall = 0;
};

/// Per-class IoU of two (1,3,H,W) masks plus their mean.
IoUReport evaluate_masks(const Tensor4& pred, const Tensor4& gt);

/// Each channel scaled so its mean equals the mean over all channels, on
/// [0,1] intensities, then clamped.
Tensor4 gray_world(const Tensor4& image);

/// Per-channel CDF remap of 8-bit levels onto the full range.
Tensor4 hist_equalize(const Tensor4& image);

/// Per-channel (x - mean) / std with the population std.
Tensor4 zscore(const Tensor4& image);

/// Per-channel monotone remap of src levels so their CDF follows ref's.
Tensor4 hist_match(const Tensor4& src, const Tensor4& ref);

struct DomainReport {
  std::string domain;
  IoUReport report;
};

/// JSON report: per-domain, per-class IoU with pixel counts and overall means.
std::string report_json(std::span<const DomainReport> reports);
void write_report(const std::filesystem::path& path, std::span<const DomainReport> reports);

}  // namespace daug
