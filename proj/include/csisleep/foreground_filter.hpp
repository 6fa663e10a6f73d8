#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace csisleep {

using MaskGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// M x N foreground flags (true = in-place motion).
struct ForegroundMask {
    double start_time = 0.0;
    double sample_stride = 0.0;
    MaskGrid grid;

    Eigen::Index subcarriers() const { return grid.rows(); }
    Eigen::Index columns() const { return grid.cols(); }
    Eigen::Index count() const { return grid.count(); }
};

struct FilterParams {
    double min_duration = 0.1;    // tau, seconds
    double min_coverage = 0.7;    // p, fraction of subcarriers
    double density_window = 0.5;  // seconds
    double min_density = 0.4;     // d

    void validate() const;

    // Thresholds expressed in columns / pixels for a given geometry.
    Eigen::Index min_run_columns(double stride) const;
    Eigen::Index min_covered_rows(Eigen::Index subcarriers) const;
    Eigen::Index window_columns(double stride) const;
};

// Pixel-wise OR over antennas. Throws std::invalid_argument on shape or
// start-time mismatch.
ForegroundMask merge_streams(std::span<const ForegroundMask> masks);

// Clears every foreground segment (maximal run of columns holding at least one
// foreground pixel) that is shorter than tau or whose peak column coverage is
// below p * M. A run touching the mask end counts as complete.
ForegroundMask frequency_temporal_filter(const ForegroundMask& mask, const FilterParams& params);

// Tumbling windows of density_window seconds aligned to column 0. A window
// whose foreground density is below d is cleared. A trailing short window uses
// its own column count.
ForegroundMask motion_density_filter(const ForegroundMask& mask, const FilterParams& params);

struct FilteredBlock {
    std::int64_t start_column = 0;  // absolute column index in the stream
    MaskGrid merged;                // before filtering
    MaskGrid filtered;              // after both filters
};

// Frame-concatenating form of the two filters. Columns are held back while
// they belong to an undecided segment or an incomplete density window, and
// come out in whole windows aligned to the stream start. The concatenation
// of all emitted blocks equals the batch filters applied to the concatenated
// input.
class StreamingFilter {
public:
    StreamingFilter(const FilterParams& params, Eigen::Index subcarriers, double stride);

    std::vector<FilteredBlock> push(const MaskGrid& merged);
    std::vector<FilteredBlock> finish();

    std::int64_t columns_in() const { return columns_in_; }
    std::int64_t columns_out() const { return buffer_start_; }

private:
    void scan(bool final);
    std::vector<FilteredBlock> emit(bool final);

    FilterParams params_;
    Eigen::Index rows_;
    Eigen::Index min_run_;
    Eigen::Index min_rows_;
    Eigen::Index window_;
    MaskGrid raw_;   // unfiltered copy of the pending columns
    MaskGrid work_;  // pending columns with decided segments already applied
    std::int64_t buffer_start_ = 0;
    Eigen::Index decided_ = 0;
    bool open_retained_ = false;
    std::int64_t columns_in_ = 0;
};

// Plain PBM (P1) dump for inspection.
void write_pbm(const MaskGrid& grid, const std::string& path);

}  // namespace csisleep
