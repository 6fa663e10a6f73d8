#include "csisleep/foreground_filter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace csisleep {

namespace {

constexpr double kEps = 1e-9;

bool density_too_low(Eigen::Index count, Eigen::Index rows, Eigen::Index cols, double min_density) {
    return static_cast<double>(count) < min_density * static_cast<double>(rows * cols) - kEps;
}

// Applies the segment rule to columns [0, cols) of `grid`, treating the last
// run as complete.
void clear_short_segments(MaskGrid& grid, Eigen::Index min_run, Eigen::Index min_rows) {
    const Eigen::Index cols = grid.cols();
    Eigen::Index i = 0;
    while (i < cols) {
        if (grid.col(i).count() == 0) {
            ++i;
            continue;
        }
        Eigen::Index j = i;
        Eigen::Index peak = 0;
        while (j < cols) {
            const Eigen::Index c = grid.col(j).count();
            if (c == 0) break;
            peak = std::max(peak, c);
            ++j;
        }
        if (j - i < min_run || peak < min_rows) grid.middleCols(i, j - i).setConstant(false);
        i = j;
    }
}

void clear_sparse_windows(MaskGrid& grid, Eigen::Index window, double min_density) {
    for (Eigen::Index w = 0; w < grid.cols(); w += window) {
        const Eigen::Index len = std::min(window, grid.cols() - w);
        auto block = grid.middleCols(w, len);
        if (density_too_low(block.count(), grid.rows(), len, min_density)) block.setConstant(false);
    }
}

}  // namespace

void FilterParams::validate() const {
    if (!(min_duration > 0.0)) throw std::invalid_argument("filter: tau must be > 0");
    if (!(min_coverage > 0.0 && min_coverage <= 1.0)) throw std::invalid_argument("filter: p must lie in (0,1]");
    if (!(density_window > 0.0)) throw std::invalid_argument("filter: density window must be > 0");
    if (!(min_density > 0.0 && min_density <= 1.0)) throw std::invalid_argument("filter: d must lie in (0,1]");
}

Eigen::Index FilterParams::min_run_columns(double stride) const {
    return static_cast<Eigen::Index>(std::ceil(min_duration / stride - kEps));
}

Eigen::Index FilterParams::min_covered_rows(Eigen::Index subcarriers) const {
    return static_cast<Eigen::Index>(std::ceil(min_coverage * static_cast<double>(subcarriers) - kEps));
}

Eigen::Index FilterParams::window_columns(double stride) const {
    return std::max<Eigen::Index>(1, std::lround(density_window / stride));
}

ForegroundMask merge_streams(std::span<const ForegroundMask> masks) {
    if (masks.empty()) throw std::invalid_argument("merge_streams: no masks");
    ForegroundMask out = masks.front();
    for (const auto& m : masks.subspan(1)) {
        if (m.grid.rows() != out.grid.rows() || m.grid.cols() != out.grid.cols()) {
            throw std::invalid_argument("merge_streams: dimension mismatch");
        }
        if (std::abs(m.start_time - out.start_time) > kEps) {
            throw std::invalid_argument("merge_streams: start_time mismatch");
        }
        out.grid = out.grid || m.grid;
    }
    return out;
}

ForegroundMask frequency_temporal_filter(const ForegroundMask& mask, const FilterParams& params) {
    params.validate();
    ForegroundMask out = mask;
    clear_short_segments(out.grid, params.min_run_columns(mask.sample_stride), params.min_covered_rows(mask.subcarriers()));
    return out;
}

ForegroundMask motion_density_filter(const ForegroundMask& mask, const FilterParams& params) {
    params.validate();
    ForegroundMask out = mask;
    clear_sparse_windows(out.grid, params.window_columns(mask.sample_stride), params.min_density);
    return out;
}

// ---------------------------------------------------------------------------

StreamingFilter::StreamingFilter(const FilterParams& params, Eigen::Index subcarriers, double stride)
    : params_(params),
      rows_(subcarriers),
      min_run_(params.min_run_columns(stride)),
      min_rows_(params.min_covered_rows(subcarriers)),
      window_(params.window_columns(stride)),
      raw_(subcarriers, 0),
      work_(subcarriers, 0) {
    params_.validate();
}

std::vector<FilteredBlock> StreamingFilter::push(const MaskGrid& merged) {
    if (merged.rows() != rows_) throw std::invalid_argument("StreamingFilter: row count mismatch");
    const Eigen::Index old = raw_.cols();
    raw_.conservativeResize(Eigen::NoChange, old + merged.cols());
    work_.conservativeResize(Eigen::NoChange, old + merged.cols());
    raw_.rightCols(merged.cols()) = merged;
    work_.rightCols(merged.cols()) = merged;
    columns_in_ += merged.cols();
    scan(false);
    return emit(false);
}

std::vector<FilteredBlock> StreamingFilter::finish() {
    scan(true);
    return emit(true);
}

void StreamingFilter::scan(bool final) {
    const Eigen::Index cols = work_.cols();
    Eigen::Index i = decided_;
    while (i < cols) {
        if (work_.col(i).count() == 0) {
            open_retained_ = false;
            decided_ = ++i;
            continue;
        }
        Eigen::Index j = i;
        Eigen::Index peak = 0;
        while (j < cols) {
            const Eigen::Index c = work_.col(j).count();
            if (c == 0) break;
            peak = std::max(peak, c);
            ++j;
        }
        if (j == cols && !final) {
            // Run may continue into the next push. Once it already passes both
            // tests its future columns are kept too, so it can be released.
            if (open_retained_ || (j - i >= min_run_ && peak >= min_rows_)) {
                open_retained_ = true;
                decided_ = cols;
            }
            return;
        }
        if (!open_retained_ && (j - i < min_run_ || peak < min_rows_)) work_.middleCols(i, j - i).setConstant(false);
        open_retained_ = false;
        decided_ = i = j;
    }
}

std::vector<FilteredBlock> StreamingFilter::emit(bool final) {
    std::vector<FilteredBlock> out;
    auto take = [&](Eigen::Index len) {
        FilteredBlock b;
        b.start_column = buffer_start_;
        b.merged = raw_.leftCols(len);
        b.filtered = work_.leftCols(len);
        clear_sparse_windows(b.filtered, window_, params_.min_density);
        out.push_back(std::move(b));

        const Eigen::Index rest = raw_.cols() - len;
        MaskGrid raw_rest = raw_.rightCols(rest);
        MaskGrid work_rest = work_.rightCols(rest);
        raw_ = std::move(raw_rest);
        work_ = std::move(work_rest);
        buffer_start_ += len;
        decided_ -= len;
    };
    while (decided_ >= window_) take(window_);
    if (final && decided_ > 0) take(decided_);
    return out;
}

void write_pbm(const MaskGrid& grid, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "P1\n" << grid.cols() << ' ' << grid.rows() << '\n';
    for (Eigen::Index m = 0; m < grid.rows(); ++m) {
        for (Eigen::Index n = 0; n < grid.cols(); ++n) {
            out << (grid(m, n) ? '1' : '0') << ((n + 1) % 70 == 0 || n + 1 == grid.cols() ? '\n' : ' ');
        }
    }
}

}  // namespace csisleep
