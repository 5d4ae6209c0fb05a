#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace dtx {

/// Dense column-major design matrix. Each column carries the schema feature id
/// it was projected from, so trees fitted on a subset of the schema still name
/// the original features.
class FeatureMatrix {
public:
    FeatureMatrix() = default;

    FeatureMatrix(std::size_t rows, std::vector<int> feature_ids)
        : rows_(rows), ids_(std::move(feature_ids)), values_(rows_ * ids_.size(), 0.0) {
        for (std::size_t c = 0; c < ids_.size(); ++c) {
            const int id = ids_[c];
            if (id < 0) throw std::invalid_argument("feature ids must be non-negative");
            if (static_cast<std::size_t>(id) >= column_of_.size()) column_of_.resize(id + 1, -1);
            if (column_of_[id] >= 0) throw std::invalid_argument("duplicate feature id");
            column_of_[id] = static_cast<int>(c);
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return ids_.size(); }

    double at(std::size_t row, std::size_t col) const { return values_[col * rows_ + row]; }
    double& at(std::size_t row, std::size_t col) { return values_[col * rows_ + row]; }

    std::span<const double> column(std::size_t col) const {
        return {values_.data() + col * rows_, rows_};
    }
    std::span<double> column(std::size_t col) { return {values_.data() + col * rows_, rows_}; }

    int feature_id(std::size_t col) const { return ids_[col]; }
    const std::vector<int>& feature_ids() const { return ids_; }

    /// Column holding schema feature `id`, or -1 when the feature is not present.
    int column_of(int id) const {
        return id >= 0 && static_cast<std::size_t>(id) < column_of_.size() ? column_of_[id] : -1;
    }

    /// Value of schema feature `id` in `row`; throws if the feature was projected out.
    double value(std::size_t row, int id) const {
        const int col = column_of(id);
        if (col < 0) throw std::out_of_range("feature not present in matrix");
        return at(row, static_cast<std::size_t>(col));
    }

    /// Rows `rows` of this matrix, same columns.
    FeatureMatrix select_rows(std::span<const std::size_t> rows) const {
        FeatureMatrix out(rows.size(), ids_);
        for (std::size_t c = 0; c < cols(); ++c) {
            const auto src = column(c);
            auto dst = out.column(c);
            for (std::size_t i = 0; i < rows.size(); ++i) dst[i] = src[rows[i]];
        }
        return out;
    }

private:
    std::size_t rows_ = 0;
    std::vector<int> ids_;
    std::vector<int> column_of_;
    std::vector<double> values_;
};

}  // namespace dtx
