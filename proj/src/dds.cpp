#include "diffeo/dds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "diffeo/errors.hpp"

namespace diffeo {

GeometryImage geometry_image(const GridSample& s) {
    GeometryImage img{s.ry, s.rx, 2, {}};
    img.data.reserve(2 * s.physics_points.size());
    for (const auto& p : s.physics_points) {
        img.data.push_back(p.x());
        img.data.push_back(p.y());
    }
    return img;
}

namespace {

void check_image(const GeometryImage& img) {
    if (img.channels < 1 || img.rows < 1 || img.cols < 1 || img.data.size() != img.pixels() * static_cast<std::size_t>(img.channels))
        fail(ErrorCode::ShapeMismatch, "geometry image data does not match its shape");
}

std::vector<double> channel_means(const GeometryImage& img) {
    std::vector<double> mean(static_cast<std::size_t>(img.channels), 0.0);
    const auto c_count = static_cast<std::size_t>(img.channels);
    for (std::size_t p = 0; p < img.pixels(); ++p)
        for (std::size_t c = 0; c < c_count; ++c) mean[c] += img.data[p * c_count + c];
    for (auto& m : mean) m /= static_cast<double>(img.pixels());
    return mean;
}

}  // namespace

NccResult ncc_detailed(const GeometryImage& a, const GeometryImage& b, const NccOptions& options) {
    check_image(a);
    check_image(b);
    if (a.rows != b.rows || a.cols != b.cols || a.channels != b.channels)
        fail(ErrorCode::ShapeMismatch, "geometry images differ in shape");
    const auto channels = static_cast<std::size_t>(a.channels);
    const auto ma = channel_means(a), mb = channel_means(b);
    std::vector<double> ab(channels, 0.0), aa(channels, 0.0), bb(channels, 0.0);
    for (std::size_t p = 0; p < a.pixels(); ++p) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double da = a.data[p * channels + c] - ma[c];
            const double db = b.data[p * channels + c] - mb[c];
            ab[c] += da * db;
            aa[c] += da * da;
            bb[c] += db * db;
        }
    }
    const double ea = std::accumulate(aa.begin(), aa.end(), 0.0);
    const double eb = std::accumulate(bb.begin(), bb.end(), 0.0);
    if (ea < 1e-20 || eb < 1e-20) fail(ErrorCode::ZeroVariance, "geometry image has no centred energy");

    double r = 0.0;
    if (options.per_channel_average) {
        for (std::size_t c = 0; c < channels; ++c) {
            if (aa[c] < 1e-20 || bb[c] < 1e-20)
                fail(ErrorCode::ZeroVariance, "channel " + std::to_string(c) + " is constant");
            r += ab[c] / (std::sqrt(aa[c]) * std::sqrt(bb[c]));
        }
        r /= static_cast<double>(channels);
    } else {
        r = std::accumulate(ab.begin(), ab.end(), 0.0) / (std::sqrt(ea) * std::sqrt(eb));
    }
    return {std::clamp(r, -1.0, 1.0), r};
}

double ncc(const GeometryImage& a, const GeometryImage& b, const NccOptions& options) {
    return ncc_detailed(a, b, options).value;
}

double dds(const GeometryImage& candidate, std::span<const GeometryImage> training_set, const NccOptions& options) {
    if (training_set.empty()) fail(ErrorCode::EmptyTrainingSet, "DDS needs at least one training image");
    double sum = 0.0;
    for (const auto& t : training_set) sum += ncc(candidate, t, options);
    return sum / static_cast<double>(training_set.size());
}

double pearson(std::span<const double> x, std::span<const double> y, bool* degenerate) {
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    // Relative test so that rounding noise in the means reads as constant.
    const auto flat = [](double ss, double mean, double count) {
        return ss <= 1e-28 * std::max(1.0, mean * mean * count);
    };
    const bool degen = flat(sxx, mx, n) || flat(syy, my, n);
    if (degenerate) *degenerate = degen;
    if (degen) return 0.0;
    return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

CorrelationReport correlation_report(std::span<const double> dds_values, std::span<const double> errors) {
    if (dds_values.size() != errors.size()) fail(ErrorCode::ShapeMismatch, "DDS and error lists differ in length");
    if (dds_values.size() < 3) fail(ErrorCode::InsufficientData, "correlation needs at least 3 pairs");
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!std::isfinite(dds_values[i]) || !std::isfinite(errors[i]))
            fail(ErrorCode::NonFinite, "non-finite value at row " + std::to_string(i));
    CorrelationReport r;
    r.n = dds_values.size();
    r.pearson_r = pearson(dds_values, errors, &r.pearson_degenerate);
    const auto rd = average_ranks(dds_values), re = average_ranks(errors);
    r.spearman_rho = pearson(rd, re, &r.spearman_degenerate);
    for (std::size_t i = 0; i < r.n; ++i) r.table.push_back({dds_values[i], errors[i]});
    std::stable_sort(r.table.begin(), r.table.end(),
                     [](const CorrelationRow& a, const CorrelationRow& b) { return a.dds < b.dds; });
    return r;
}

}  // namespace diffeo
