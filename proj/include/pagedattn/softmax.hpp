// Copyright 2026 The pagedattn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Tiled (online) softmax fused with the P*V accumulation, plus the
// rescaling merge of per-segment partial results and a direct
// materializing reference. Everything here is templated on the scalar type
// so the reference can be evaluated in double against fp32 kernels.

#include <Eigen/Core>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pagedattn/core.hpp"
#include "pagedattn/error.hpp"

namespace pagedattn {

using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Running row maxima, sums of exponentials and un-normalized output rows.
template <typename Scalar = float>
struct SoftmaxState {
  ColVector<Scalar> m;
  ColVector<Scalar> l;
  RowMatrix<Scalar> acc;

  SoftmaxState() = default;
  SoftmaxState(Index rows, Index head_size) { reset(rows, head_size); }

  void reset(Index rows, Index head_size) {
    m.setConstant(rows, -std::numeric_limits<Scalar>::infinity());
    l.setZero(rows);
    acc.setZero(rows, head_size);
  }
  void reset() { reset(rows(), head_size()); }

  Index rows() const { return m.size(); }
  Index head_size() const { return acc.cols(); }
};

/// Partial state of one segment of tiles. A row that saw no visible key has
/// l == 0 and m == -inf and is skipped when merging.
template <typename Scalar = float>
struct SegmentResult {
  RowMatrix<Scalar> acc;
  ColVector<Scalar> m;
  ColVector<Scalar> l;
  Index segment_index = 0;

  SegmentResult() = default;
  SegmentResult(const SoftmaxState<Scalar>& state, Index index)
      : acc(state.acc), m(state.m), l(state.l), segment_index(index) {}
};

/// out = scale * q_rows * k_tile^T.
template <typename DerivedQ, typename DerivedK, typename DerivedOut>
void scores_into(const Eigen::MatrixBase<DerivedQ>& q_rows, const Eigen::MatrixBase<DerivedK>& k_tile,
                 typename DerivedOut::Scalar scale, Eigen::MatrixBase<DerivedOut>& out) {
  if (q_rows.cols() != k_tile.cols()) {
    throw Error(ErrorCode::ShapeError, "q has " + std::to_string(q_rows.cols()) +
                                           " columns, k has " + std::to_string(k_tile.cols()));
  }
  out.derived().resize(q_rows.rows(), k_tile.rows());
  out.noalias() = q_rows * k_tile.transpose();
  out *= scale;
}

template <typename DerivedQ, typename DerivedK>
RowMatrix<typename DerivedQ::Scalar> scores(const Eigen::MatrixBase<DerivedQ>& q_rows,
                                            const Eigen::MatrixBase<DerivedK>& k_tile,
                                            typename DerivedQ::Scalar scale) {
  RowMatrix<typename DerivedQ::Scalar> out;
  scores_into(q_rows, k_tile, scale, out);
  return out;
}

namespace detail {

template <typename Scalar, typename DerivedS, typename DerivedV, typename Visible>
void online_update_impl(SoftmaxState<Scalar>& state, const Eigen::MatrixBase<DerivedS>& s,
                        const Eigen::MatrixBase<DerivedV>& v, Visible&& visible) {
  if (s.rows() != state.rows() || s.cols() != v.rows() || v.cols() != state.head_size()) {
    throw Error(ErrorCode::ShapeError, "score/value tile does not match softmax state");
  }
  constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
  for (Index i = 0; i < s.rows(); ++i) {
    Scalar tile_max = kNegInf;
    bool any = false;
    for (Index j = 0; j < s.cols(); ++j) {
      if (visible(i, j)) {
        tile_max = std::max<Scalar>(tile_max, s(i, j));
        any = true;
      }
    }
    if (!any) continue;  // fully masked: row state untouched

    const Scalar m_new = std::max(state.m(i), tile_max);
    const Scalar alpha = std::exp(state.m(i) - m_new);
    Scalar l = alpha * state.l(i);
    auto acc = state.acc.row(i);
    acc *= alpha;
    for (Index j = 0; j < s.cols(); ++j) {
      if (!visible(i, j)) continue;
      const Scalar p = std::exp(s(i, j) - m_new);
      l += p;
      acc += p * v.row(j);
    }
    state.l(i) = l;
    state.m(i) = m_new;
  }
}

}  // namespace detail

/// One online-softmax step with a per-column mask shared by all rows.
template <typename Scalar, typename DerivedS, typename DerivedV>
void online_update(SoftmaxState<Scalar>& state, const Eigen::MatrixBase<DerivedS>& s_tile,
                   const Eigen::MatrixBase<DerivedV>& v_tile, const MaskVector& mask) {
  if (mask.size() != s_tile.cols()) throw Error(ErrorCode::ShapeError, "mask length");
  detail::online_update_impl(state, s_tile, v_tile, [&](Index, Index j) { return mask(j); });
}

/// One online-softmax step with an independent mask per (row, column).
template <typename Scalar, typename DerivedS, typename DerivedV>
void online_update(SoftmaxState<Scalar>& state, const Eigen::MatrixBase<DerivedS>& s_tile,
                   const Eigen::MatrixBase<DerivedV>& v_tile, const MaskMatrix& mask) {
  if (mask.rows() != s_tile.rows() || mask.cols() != s_tile.cols()) {
    throw Error(ErrorCode::ShapeError, "mask shape");
  }
  detail::online_update_impl(state, s_tile, v_tile, [&](Index i, Index j) { return mask(i, j); });
}

/// Row i sees columns [0, visible_cols[i]). Causal and ragged-tail masks in
/// the kernels are always of this prefix form.
template <typename Scalar, typename DerivedS, typename DerivedV>
void online_update_prefix(SoftmaxState<Scalar>& state, const Eigen::MatrixBase<DerivedS>& s_tile,
                          const Eigen::MatrixBase<DerivedV>& v_tile,
                          std::span<const Index> visible_cols) {
  if (static_cast<Index>(visible_cols.size()) != s_tile.rows()) {
    throw Error(ErrorCode::ShapeError, "visible_cols length");
  }
  detail::online_update_impl(state, s_tile, v_tile,
                             [&](Index i, Index j) { return j < visible_cols[static_cast<std::size_t>(i)]; });
}

/// acc / l for a single row; throws EmptyAttentionRow when l == 0.
template <typename Scalar, typename DerivedOut>
void finalize_row(const SoftmaxState<Scalar>& state, Index row, Eigen::MatrixBase<DerivedOut>&& out) {
  if (!(state.l(row) > Scalar(0))) {
    throw Error(ErrorCode::EmptyAttentionRow, "row " + std::to_string(row) + " saw no keys");
  }
  out = (state.acc.row(row) / state.l(row)).template cast<typename DerivedOut::Scalar>();
}

template <typename Scalar>
RowMatrix<Scalar> finalize(const SoftmaxState<Scalar>& state) {
  RowMatrix<Scalar> out(state.rows(), state.head_size());
  for (Index i = 0; i < state.rows(); ++i) finalize_row(state, i, out.row(i));
  return out;
}

/// Merges one row across segments taken in the given order. Returns false if
/// no segment saw a key for this row.
template <typename Scalar, typename SegmentRange, typename DerivedOut>
bool merge_segment_row(const SegmentRange& parts, Index row, Eigen::MatrixBase<DerivedOut>&& out) {
  constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
  Scalar m_star = kNegInf;
  bool any = false;
  for (const auto& part : parts) {
    if (part.l(row) > Scalar(0)) {
      m_star = std::max(m_star, part.m(row));
      any = true;
    }
  }
  if (!any) return false;
  Scalar denom = 0;
  ColVector<Scalar> numer = ColVector<Scalar>::Zero(out.cols());
  for (const auto& part : parts) {
    if (!(part.l(row) > Scalar(0))) continue;
    const Scalar w = std::exp(part.m(row) - m_star);
    denom += w * part.l(row);
    numer += w * part.acc.row(row).transpose();
  }
  out = (numer / denom).transpose().template cast<typename DerivedOut::Scalar>();
  return true;
}

/// Rescaling reduction of per-segment partials. Segments are combined in
/// segment_index order, so the result does not depend on input order.
template <typename Scalar>
RowMatrix<Scalar> merge_segments(std::span<const SegmentResult<Scalar>> parts) {
  if (parts.empty()) throw Error(ErrorCode::EmptyAttentionRow, "no segments to merge");
  const Index rows = parts.front().m.size();
  const Index cols = parts.front().acc.cols();
  for (const auto& p : parts) {
    if (p.m.size() != rows || p.l.size() != rows || p.acc.rows() != rows || p.acc.cols() != cols) {
      throw Error(ErrorCode::ShapeError, "segment shapes differ");
    }
  }
  std::vector<SegmentResult<Scalar>> ordered(parts.begin(), parts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.segment_index < b.segment_index; });

  RowMatrix<Scalar> out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (!merge_segment_row<Scalar>(ordered, i, out.row(i))) {
      throw Error(ErrorCode::EmptyAttentionRow, "row " + std::to_string(i) + " empty in all segments");
    }
  }
  return out;
}

/// Direct softmax(scale * Q K^T) V with a full score matrix. Row i attends to
/// keys [0, visible[i]).
template <typename Scalar, typename DerivedQ, typename DerivedK, typename DerivedV>
RowMatrix<Scalar> naive_attention_oracle(const Eigen::MatrixBase<DerivedQ>& q,
                                         const Eigen::MatrixBase<DerivedK>& k,
                                         const Eigen::MatrixBase<DerivedV>& v, double scale,
                                         std::span<const Index> visible) {
  if (q.cols() != k.cols() || k.rows() != v.rows() ||
      static_cast<Index>(visible.size()) != q.rows()) {
    throw Error(ErrorCode::ShapeError, "oracle operand shapes");
  }
  const RowMatrix<Scalar> qs = q.template cast<Scalar>();
  const RowMatrix<Scalar> ks = k.template cast<Scalar>();
  const RowMatrix<Scalar> vs = v.template cast<Scalar>();
  const RowMatrix<Scalar> s = (qs * ks.transpose()) * static_cast<Scalar>(scale);

  RowMatrix<Scalar> out(q.rows(), v.cols());
  for (Index i = 0; i < q.rows(); ++i) {
    const Index n = visible[static_cast<std::size_t>(i)];
    if (n < 1 || n > k.rows()) {
      throw Error(ErrorCode::IndexOutOfRange, "visible key count " + std::to_string(n));
    }
    const auto row = s.row(i).head(n).array();
    const Scalar mx = row.maxCoeff();
    const ColVector<Scalar> e = (row - mx).exp().matrix().transpose();
    const ColVector<Scalar> p = e / e.sum();
    assert(std::abs(p.sum() - Scalar(1)) < Scalar(1e-4));
    out.row(i) = p.transpose() * vs.topRows(n);
  }
  return out;
}

}  // namespace pagedattn
