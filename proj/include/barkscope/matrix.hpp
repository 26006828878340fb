#ifndef BARKSCOPE_MATRIX_HPP
#define BARKSCOPE_MATRIX_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace barkscope {

// Labeled, row-major design matrix.
struct DesignMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> values;
  std::vector<int> labels;
  std::vector<std::string> column_names;
  std::vector<std::string> row_ids;
  // Per row, the clip ids the row was built from (used by group folds).
  std::vector<std::vector<std::string>> row_groups;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * n_cols, n_cols}; }
  double at(std::size_t r, std::size_t c) const { return values[r * n_cols + c]; }

  void add_row(std::span<const double> x, int label, std::string id = {},
               std::vector<std::string> groups = {}) {
    if (n_rows == 0 && n_cols == 0) n_cols = x.size();
    values.insert(values.end(), x.begin(), x.end());
    labels.push_back(label);
    row_ids.push_back(std::move(id));
    row_groups.push_back(std::move(groups));
    ++n_rows;
  }

  DesignMatrix subset(std::span<const std::size_t> rows) const {
    DesignMatrix m;
    m.n_cols = n_cols;
    m.column_names = column_names;
    for (std::size_t r : rows) {
      m.values.insert(m.values.end(), values.begin() + static_cast<std::ptrdiff_t>(r * n_cols),
                      values.begin() + static_cast<std::ptrdiff_t>((r + 1) * n_cols));
      m.labels.push_back(labels[r]);
      m.row_ids.push_back(r < row_ids.size() ? row_ids[r] : std::string());
      m.row_groups.push_back(r < row_groups.size() ? row_groups[r] : std::vector<std::string>{});
      ++m.n_rows;
    }
    return m;
  }
};

}  // namespace barkscope

#endif  // BARKSCOPE_MATRIX_HPP
