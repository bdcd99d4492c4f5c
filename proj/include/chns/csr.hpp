#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "chns/errors.hpp"
#include "chns/mesh.hpp"
#include "chns/parallel.hpp"

namespace chns {

/// Element-block sparsity pattern: per block row, the sorted set of coupled
/// block columns. DG couplings are the element itself plus its face neighbors;
/// `fields` block-duplicates the pattern for coupled multi-field systems
/// (block row f*nE + E couples to every field's copy of E's neighborhood).
struct BlockPattern {
    int n_modes = 0;
    int n_block_rows = 0;
    std::vector<std::size_t> brow_ptr;
    std::vector<int> bcols;

    static BlockPattern dg_scalar(const VoxelMesh& mesh, int n_modes, int fields = 1) {
        BlockPattern p;
        p.n_modes = n_modes;
        const int nE = mesh.n_elements();
        p.n_block_rows = fields * nE;
        p.brow_ptr.assign(static_cast<std::size_t>(p.n_block_rows) + 1, 0);
        std::vector<std::vector<int>> nbr(static_cast<std::size_t>(nE));
        for (int e = 0; e < nE; ++e) {
            nbr[static_cast<std::size_t>(e)].push_back(e);
            for (int s = 0; s < 2 * mesh.dim; ++s) {
                const int f = mesh.neighbors[static_cast<std::size_t>(e)][static_cast<std::size_t>(s)];
                if (f >= 0) nbr[static_cast<std::size_t>(e)].push_back(f);
            }
            std::sort(nbr[static_cast<std::size_t>(e)].begin(), nbr[static_cast<std::size_t>(e)].end());
        }
        for (int fr = 0; fr < fields; ++fr)
            for (int e = 0; e < nE; ++e) {
                const std::size_t row = static_cast<std::size_t>(fr) * static_cast<std::size_t>(nE) +
                                        static_cast<std::size_t>(e);
                p.brow_ptr[row + 1] = p.brow_ptr[row] +
                                      static_cast<std::size_t>(fields) * nbr[static_cast<std::size_t>(e)].size();
            }
        p.bcols.resize(p.brow_ptr.back());
        for (int fr = 0; fr < fields; ++fr)
            for (int e = 0; e < nE; ++e) {
                const std::size_t row = static_cast<std::size_t>(fr) * static_cast<std::size_t>(nE) +
                                        static_cast<std::size_t>(e);
                std::size_t at = p.brow_ptr[row];
                for (int fc = 0; fc < fields; ++fc)
                    for (int f : nbr[static_cast<std::size_t>(e)])
                        p.bcols[at++] = fc * nE + f;
            }
        return p;
    }
};

/// Square CSR matrix with dense element blocks on a fixed pattern.
/// Column indices are sorted within each row; no duplicates.
struct SparseOperator {
    std::size_t n = 0;
    int n_modes = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<int> cols;
    std::vector<double> vals;
    std::vector<std::size_t> brow_ptr;  // block pattern retained for add_block
    std::vector<int> bcols;

    static SparseOperator from_pattern(const BlockPattern& p) {
        SparseOperator a;
        a.n_modes = p.n_modes;
        const std::size_t nm = static_cast<std::size_t>(p.n_modes);
        a.n = static_cast<std::size_t>(p.n_block_rows) * nm;
        a.brow_ptr = p.brow_ptr;
        a.bcols = p.bcols;
        a.row_ptr.assign(a.n + 1, 0);
        for (int br = 0; br < p.n_block_rows; ++br) {
            const std::size_t nblocks = p.brow_ptr[static_cast<std::size_t>(br) + 1] -
                                        p.brow_ptr[static_cast<std::size_t>(br)];
            for (std::size_t i = 0; i < nm; ++i) {
                const std::size_t row = static_cast<std::size_t>(br) * nm + i;
                a.row_ptr[row + 1] = a.row_ptr[row] + nblocks * nm;
            }
        }
        a.cols.resize(a.row_ptr.back());
        a.vals.assign(a.row_ptr.back(), 0.0);
        for (int br = 0; br < p.n_block_rows; ++br)
            for (std::size_t i = 0; i < nm; ++i) {
                const std::size_t row = static_cast<std::size_t>(br) * nm + i;
                std::size_t at = a.row_ptr[row];
                for (std::size_t s = p.brow_ptr[static_cast<std::size_t>(br)];
                     s < p.brow_ptr[static_cast<std::size_t>(br) + 1]; ++s)
                    for (std::size_t j = 0; j < nm; ++j)
                        a.cols[at++] = p.bcols[s] * p.n_modes + static_cast<int>(j);
            }
        return a;
    }

    void zero() { std::fill(vals.begin(), vals.end(), 0.0); }

    /// Accumulates a dense n_modes x n_modes block (row-major) at block (br, bc).
    void add_block(int br, int bc, const double* dense) {
        const std::size_t nm = static_cast<std::size_t>(n_modes);
        const std::size_t lo = brow_ptr[static_cast<std::size_t>(br)];
        const std::size_t hi = brow_ptr[static_cast<std::size_t>(br) + 1];
        const auto it = std::lower_bound(bcols.begin() + static_cast<std::ptrdiff_t>(lo),
                                         bcols.begin() + static_cast<std::ptrdiff_t>(hi), bc);
        if (it == bcols.begin() + static_cast<std::ptrdiff_t>(hi) || *it != bc)
            throw Error("SparseOperator::add_block: block outside pattern");
        const std::size_t slot = static_cast<std::size_t>(it - (bcols.begin() + static_cast<std::ptrdiff_t>(lo)));
        const std::size_t nblocks = hi - lo;
        const std::size_t base = row_ptr[static_cast<std::size_t>(br) * nm];
        for (std::size_t i = 0; i < nm; ++i) {
            double* dst = vals.data() + base + i * nblocks * nm + slot * nm;
            const double* src = dense + i * nm;
            for (std::size_t j = 0; j < nm; ++j) dst[j] += src[j];
        }
    }

    std::size_t n_blocks(int br) const {
        return brow_ptr[static_cast<std::size_t>(br) + 1] - brow_ptr[static_cast<std::size_t>(br)];
    }

    /// Copies the dense block at local slot `slot` of block row `br` into out.
    void extract_block(int br, std::size_t slot, double* out) const {
        const std::size_t nm = static_cast<std::size_t>(n_modes);
        const std::size_t nblocks = n_blocks(br);
        const std::size_t base = row_ptr[static_cast<std::size_t>(br) * nm];
        for (std::size_t i = 0; i < nm; ++i) {
            const double* src = vals.data() + base + i * nblocks * nm + slot * nm;
            for (std::size_t j = 0; j < nm; ++j) out[i * nm + j] = src[j];
        }
    }

    /// Accumulates scale * src into the (field_row, field_col) block copy of this
    /// operator, assuming this was built with the same element pattern and
    /// `fields` >= max(field_row, field_col) + 1. n_elem is the element count.
    void add_scaled_from(const SparseOperator& src, int field_row, int field_col, double scale,
                         int n_elem, std::vector<double>& scratch) {
        const std::size_t nm2 = static_cast<std::size_t>(src.n_modes) * static_cast<std::size_t>(src.n_modes);
        if (scratch.size() < nm2) scratch.resize(nm2);
        for (int e = 0; e < n_elem; ++e) {
            const std::size_t lo = src.brow_ptr[static_cast<std::size_t>(e)];
            const std::size_t nb = src.n_blocks(e);
            for (std::size_t s = 0; s < nb; ++s) {
                src.extract_block(e, s, scratch.data());
                bool nonzero = false;
                for (std::size_t k = 0; k < nm2 && !nonzero; ++k) nonzero = scratch[k] != 0.0;
                if (!nonzero) continue;
                for (std::size_t k = 0; k < nm2; ++k) scratch[k] *= scale;
                add_block(field_row * n_elem + e, field_col * n_elem + src.bcols[lo + s],
                          scratch.data());
            }
        }
    }

    void apply(const double* x, double* y) const {
        parallel_for(n, [this, x, y](std::size_t lo, std::size_t hi) {
            for (std::size_t r = lo; r < hi; ++r) {
                double acc = 0.0;
                for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                    acc += vals[k] * x[static_cast<std::size_t>(cols[k])];
                y[r] = acc;
            }
        });
    }

    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> y(n);
        apply(x.data(), y.data());
        return y;
    }

    std::vector<double> diagonal() const {
        std::vector<double> d(n, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                if (static_cast<std::size_t>(cols[k]) == r) d[r] = vals[k];
        return d;
    }

    double entry(std::size_t r, std::size_t c) const {
        for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
            if (static_cast<std::size_t>(cols[k]) == c) return vals[k];
        return 0.0;
    }
};

} // namespace chns
