// Copyright 2026 The hsdacs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef HSDACS_MASK_H_
#define HSDACS_MASK_H_

#include <cstddef>
#include <cstdint>
#include <vector>

namespace hsdacs {

// Boolean rows x cols matrix; true means the column may be attended from the
// row.
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(std::size_t rows, std::size_t cols, bool fill = false)
      : rows_(rows), cols_(cols), allowed_(rows * cols, fill ? 1 : 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  bool operator()(std::size_t r, std::size_t c) const {
    return allowed_[r * cols_ + c] != 0;
  }
  void set(std::size_t r, std::size_t c, bool value) {
    allowed_[r * cols_ + c] = value ? 1 : 0;
  }

  // Number of allowed columns in row r.
  std::size_t row_count(std::size_t r) const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < cols_; ++c) n += allowed_[r * cols_ + c];
    return n;
  }

  bool operator==(const AttentionMask&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> allowed_;
};

}  // namespace hsdacs

#endif  // HSDACS_MASK_H_
