#pragma once

#include <span>
#include <vector>

#include "diffeo/sampler.hpp"

namespace diffeo {

/// An M x N x C tensor, channel-interleaved: value (p, c) at p * channels + c.
struct GeometryImage {
    int rows = 0;
    int cols = 0;
    int channels = 0;
    std::vector<double> data;

    std::size_t pixels() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// The x^pS tensor of a sample as a two-channel image.
GeometryImage geometry_image(const GridSample& sample);

struct NccOptions {
    /// false: one normalization over all channels, as in the definition.
    /// true: NCC per channel, then averaged over channels.
    bool per_channel_average = false;
};

struct NccResult {
    double value = 0.0;      // clamped to [-1, 1]
    double unclamped = 0.0;
};

NccResult ncc_detailed(const GeometryImage& a, const GeometryImage& b, const NccOptions& options = {});
double ncc(const GeometryImage& a, const GeometryImage& b, const NccOptions& options = {});

/// Mean NCC of the candidate against every training image.
double dds(const GeometryImage& candidate, std::span<const GeometryImage> training_set, const NccOptions& options = {});

struct CorrelationRow {
    double dds = 0.0;
    double error = 0.0;
};

struct CorrelationReport {
    double pearson_r = 0.0;
    double spearman_rho = 0.0;
    bool pearson_degenerate = false;   // a constant input; r reported as 0
    bool spearman_degenerate = false;
    std::size_t n = 0;
    std::vector<CorrelationRow> table;  // sorted by dds ascending
};

CorrelationReport correlation_report(std::span<const double> dds_values, std::span<const double> errors);

/// Pearson correlation. Returns 0 and sets *degenerate when either side is constant.
double pearson(std::span<const double> x, std::span<const double> y, bool* degenerate = nullptr);

/// Ranks starting at 1, ties receive their average rank.
std::vector<double> average_ranks(std::span<const double> values);

}  // namespace diffeo
