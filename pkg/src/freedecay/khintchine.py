"""Khintchine-type norm brackets for homogeneous word elements.

A length-l element of a free product decomposes over alternating words in
orthonormal complement letters; its coefficient tensor can be unfolded at a
cut position r either as a prefix-by-suffix matrix (s_r, with exact spectral
norm) or with a distinguished middle letter (t_r, whose ambient norm is
bracketed).  The functional kh(x) = max_r max(||s_r||, ||t_r||) controls the
reduced norm from above: ||x|| <= 2 (l+1) kh(x), the checkable direction of
the Ricard-Xu inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .algebra import AlgebraError, dn_norm, onb_complement
from .fock import (
    TruncatedFock,
    _represent_sparse,
    moment_norm_estimate,
    norm_lower_bound,
    shared_fock,
)
from .freeword import FreeElement, FreeProductAmbient, Letter

__all__ = [
    "HomogeneousWordElement",
    "sr_norm",
    "sr_hs_norm",
    "tr_bracket",
    "TrBounds",
    "kh_bracket",
    "rx_check",
    "RxReport",
    "layer_bound_check",
    "LayerReport",
    "assemble_rank_one_blocks",
    "weak_cs_bound",
]


def _alternating_patterns(m: int, length: int):
    if length == 0:
        yield ()
        return
    stack = [(j,) for j in range(m)]
    while stack:
        pat = stack.pop()
        if len(pat) == length:
            yield pat
            continue
        for j in range(m):
            if j != pat[-1]:
                stack.append(pat + (j,))


class HomogeneousWordElement:
    """Coefficient tensor over alternating words of one fixed length.

    Keys are (pattern, indices): the factor pattern and the per-slot
    orthonormal-complement indices.  The words indexed this way form an
    orthonormal family, so the l2 norm of the element is the l2 norm of the
    tensor.
    """

    def __init__(self, ambient: FreeProductAmbient, length: int, coeffs: dict):
        if length < 1:
            raise ValueError("homogeneous elements need length >= 1")
        self.ambient = ambient
        self.length = length
        self.onb = [onb_complement(f) for f in ambient.factors]
        clean = {}
        for (pattern, idx), c in coeffs.items():
            pattern, idx = tuple(pattern), tuple(idx)
            if len(pattern) != length or len(idx) != length:
                raise ValueError("key does not match the declared length")
            if any(a == b for a, b in zip(pattern, pattern[1:])):
                raise ValueError(f"pattern {pattern} is not alternating")
            for j, i in zip(pattern, idx):
                if not 0 <= i < len(self.onb[j]):
                    raise IndexError("letter index out of range")
            c = complex(c)
            if c != 0:
                clean[(pattern, idx)] = c
        self.coeffs = clean

    @classmethod
    def random(cls, ambient, length, rng, scale=1.0) -> "HomogeneousWordElement":
        onb = [onb_complement(f) for f in ambient.factors]
        coeffs = {}
        for pattern in _alternating_patterns(len(ambient.factors), length):
            dims = [len(onb[j]) for j in pattern]
            for idx in np.ndindex(*dims):
                coeffs[(pattern, tuple(int(i) for i in idx))] = scale * complex(
                    rng.standard_normal(), rng.standard_normal()
                )
        return cls(ambient, length, coeffs)

    def to_free_element(self) -> FreeElement:
        terms = {}
        for (pattern, idx), c in self.coeffs.items():
            word = tuple(Letter(j, self.onb[j][i]) for j, i in zip(pattern, idx))
            terms[word] = c
        return FreeElement(self.ambient, terms, _validated=True)

    def l2_norm(self) -> float:
        return math.sqrt(math.fsum(abs(c) ** 2 for c in self.coeffs.values()))

    def scaled(self, s) -> "HomogeneousWordElement":
        return HomogeneousWordElement(
            self.ambient,
            self.length,
            {k: s * c for k, c in self.coeffs.items()},
        )

    def __repr__(self):
        return f"HomogeneousWordElement(length={self.length}, support={len(self.coeffs)})"


# ---------------------------------------------------------------------------
# s_r: prefix x suffix unfolding
# ---------------------------------------------------------------------------


def _sr_matrix(x: HomogeneousWordElement, r: int):
    if not 0 <= r <= x.length:
        raise IndexError(f"cut position r={r} outside 0..{x.length}")
    rows: dict = {}
    cols: dict = {}
    entries = []
    for (pattern, idx), c in x.coeffs.items():
        pre = (pattern[:r], idx[:r])
        suf = (pattern[r:], idx[r:])
        ri = rows.setdefault(pre, len(rows))
        ci = cols.setdefault(suf, len(cols))
        entries.append((ri, ci, c))
    mat = np.zeros((max(len(rows), 1), max(len(cols), 1)), dtype=complex)
    for ri, ci, c in entries:
        mat[ri, ci] += c
    return mat


def sr_norm(x: HomogeneousWordElement, r: int) -> float:
    """Exact spectral norm of the prefix-by-suffix unfolding at cut r."""
    return float(np.linalg.norm(_sr_matrix(x, r), 2))


def sr_hs_norm(x: HomogeneousWordElement, r: int) -> float:
    """Hilbert-Schmidt norm of the unfolding; equals the l2 norm of x."""
    mat = _sr_matrix(x, r)
    return math.sqrt(math.fsum(abs(c) ** 2 for c in mat.ravel() if c != 0))


# ---------------------------------------------------------------------------
# t_r: middle-letter unfolding
# ---------------------------------------------------------------------------


@dataclass
class TrBounds:
    lower: float
    upper: float
    weak_cs: float
    single_factor: bool


def _tr_blocks(x: HomogeneousWordElement, r: int):
    """Group the tensor at middle position r: {(I, J): {j: AlgebraElement}}."""
    if not 1 <= r <= x.length:
        raise IndexError(f"middle position r={r} outside 1..{x.length}")
    blocks: dict = {}
    for (pattern, idx), c in x.coeffs.items():
        pre = (pattern[: r - 1], idx[: r - 1])
        suf = (pattern[r:], idx[r:])
        j, i = pattern[r - 1], idx[r - 1]
        cell = blocks.setdefault((pre, suf), {})
        letter = x.onb[j][i] * c
        cell[j] = letter if j not in cell else cell[j] + letter
    return blocks


def tr_bracket(x: HomogeneousWordElement, r: int, fock: TruncatedFock | None = None) -> TrBounds:
    """Bracket for the middle-letter block operator at position r.

    upper: sum over factors of the exact block-matrix norm of the factor
    part (exact when all middle letters come from one factor);
    lower: the same block operator realized through the compressed left
    representation; weak_cs: the sqrt(m) * Hilbert-Schmidt style bound that
    the upper must respect.
    """
    blocks = _tr_blocks(x, r)
    m = len(x.ambient.factors)
    rows: dict = {}
    cols: dict = {}
    for (pre, suf) in blocks:
        rows.setdefault(pre, len(rows))
        cols.setdefault(suf, len(cols))

    factors_used = sorted({j for cell in blocks.values() for j in cell})
    upper = 0.0
    for j in factors_used:
        algebra = x.ambient.factors[j]
        best = 0.0
        for b, nb in enumerate(algebra.block_dims):
            big = np.zeros((len(rows) * nb, len(cols) * nb), dtype=complex)
            for (pre, suf), cell in blocks.items():
                if j not in cell:
                    continue
                ri, ci = rows[pre], cols[suf]
                blk = cell[j].to_numpy()[b]
                big[ri * nb : (ri + 1) * nb, ci * nb : (ci + 1) * nb] = blk
            if big.size:
                best = max(best, float(np.linalg.norm(big, 2)))
        upper += best

    # weak Cauchy-Schwarz style bound on the assembled operator; the norm of
    # a cell entry over the direct sum is the max across matrix blocks
    per_entry_sq = []
    for cell in blocks.values():
        entry = math.fsum(
            max(float(np.linalg.norm(blk, 2)) for blk in el.to_numpy())
            for el in cell.values()
        )
        per_entry_sq.append(entry * entry)
    weak_cs = math.sqrt(m) * math.sqrt(math.fsum(per_entry_sq))

    if fock is None:
        fock = shared_fock(x.ambient.factors, 4)
    cells = {}
    for (pre, suf), cell in blocks.items():
        elem = FreeElement(x.ambient)
        for j, payload in cell.items():
            elem = elem + FreeElement.letter(x.ambient, j, payload)
        cells[(rows[pre], cols[suf])] = _represent_sparse(fock, elem)
    grid = [[None] * len(cols) for _ in range(len(rows))]
    dim = fock.dimension
    empty = sp.csr_matrix((dim, dim), dtype=complex)
    for (ri, ci), matrix in cells.items():
        grid[ri][ci] = matrix
    for ri in range(len(rows)):
        for ci in range(len(cols)):
            if grid[ri][ci] is None:
                grid[ri][ci] = empty
    assembled = sp.bmat(grid, format="csr")
    lower = _sparse_spectral_norm(assembled)

    single = len(factors_used) <= 1
    return TrBounds(lower=lower, upper=upper, weak_cs=weak_cs, single_factor=single)


def _sparse_spectral_norm(matrix) -> float:
    n = min(matrix.shape)
    if n == 0:
        return 0.0
    if n <= 2 or max(matrix.shape) <= 400:
        return float(np.linalg.norm(np.asarray(matrix.todense()), 2))
    v0 = np.ones(n, dtype=complex) / math.sqrt(n)
    vals = spla.svds(matrix, k=1, v0=v0, return_singular_vectors=False, maxiter=5000)
    return float(vals[0])


# ---------------------------------------------------------------------------
# the functional and the norm check
# ---------------------------------------------------------------------------


def kh_bracket(x: HomogeneousWordElement, fock: TruncatedFock | None = None):
    """(lower, upper) for kh(x) = max over cuts of the unfolding norms."""
    s_values = [sr_norm(x, r) for r in range(0, x.length + 1)]
    t_bounds = [tr_bracket(x, r, fock=fock) for r in range(1, x.length + 1)]
    lower = max(s_values + [t.lower for t in t_bounds])
    upper = max(s_values + [t.upper for t in t_bounds])
    return lower, upper


@dataclass
class RxReport:
    length: int
    l2: float
    kh_lower: float
    kh_upper: float
    norm_lb: float
    bound: float
    margin: float
    sr_ok: bool
    hs_identity_ok: bool
    weak_cs_ok: bool

    @property
    def ok(self) -> bool:
        return self.margin >= -1e-9 and self.sr_ok and self.hs_identity_ok and self.weak_cs_ok


def rx_check(
    x: HomogeneousWordElement,
    fock_depth: int | None = None,
    moment_rmax: int = 2,
) -> RxReport:
    """Check the upper Khintchine inequality on a homogeneous element.

    Asserts max(norm lower bounds) <= 2 (l+1) kh_upper, that every prefix
    unfolding norm stays below the l2 norm, and that the Hilbert-Schmidt
    norm of each unfolding reproduces the l2 norm on the nose.
    """
    ell = x.length
    elem = x.to_free_element()
    depth = fock_depth if fock_depth is not None else max(4, 2 * ell)
    fock = shared_fock(x.ambient.factors, depth)
    tr_fock = shared_fock(x.ambient.factors, 4)
    lb_fock = norm_lower_bound(fock, elem)
    lb_moment = moment_norm_estimate(elem, moment_rmax).max
    norm_lb = max(lb_fock, lb_moment)
    kh_lo, kh_up = kh_bracket(x, fock=tr_fock)
    bound = 2 * (ell + 1) * kh_up
    l2 = x.l2_norm()
    sr_ok = all(sr_norm(x, r) <= l2 * (1 + 1e-10) + 1e-12 for r in range(ell + 1))
    hs_ok = all(sr_hs_norm(x, r) == l2 for r in range(ell + 1))
    t_bounds = [tr_bracket(x, r, fock=tr_fock) for r in range(1, ell + 1)]
    weak_ok = all(t.upper <= t.weak_cs + 1e-9 for t in t_bounds)
    return RxReport(
        length=ell,
        l2=l2,
        kh_lower=kh_lo,
        kh_upper=kh_up,
        norm_lb=norm_lb,
        bound=bound,
        margin=bound - norm_lb,
        sr_ok=sr_ok,
        hs_identity_ok=hs_ok,
        weak_cs_ok=weak_ok,
    )


# ---------------------------------------------------------------------------
# layer estimate
# ---------------------------------------------------------------------------


@dataclass
class LayerReport:
    length: int
    l2: float
    norm_lb: float
    factor_constants: list
    bound: float
    margin: float

    @property
    def ok(self) -> bool:
        return self.margin >= -1e-9


def layer_bound_check(x: HomogeneousWordElement, fock_depth: int | None = None) -> LayerReport:
    """Layer estimate: lower bounds of ||x|| against
    2 sqrt(m) (l+1) (max_j C_j) ||x||_2 with C_j certified on the factor
    complements by dn_norm."""
    m = len(x.ambient.factors)
    ell = x.length
    constants = [dn_norm(onb) for onb in x.onb]
    elem = x.to_free_element()
    depth = fock_depth if fock_depth is not None else max(4, 2 * ell)
    fock = shared_fock(x.ambient.factors, depth)
    norm_lb = max(norm_lower_bound(fock, elem), moment_norm_estimate(elem, 2).max)
    l2 = x.l2_norm()
    bound = 2 * math.sqrt(m) * (ell + 1) * max(constants) * l2
    return LayerReport(
        length=ell,
        l2=l2,
        norm_lb=norm_lb,
        factor_constants=constants,
        bound=bound,
        margin=bound - norm_lb,
    )


# ---------------------------------------------------------------------------
# the rank-one-times-block inequality
# ---------------------------------------------------------------------------


def assemble_rank_one_blocks(n_rows: int, n_cols: int, blocks: dict) -> np.ndarray:
    """sum_{(i,j)} omega_{xi_i, eta_j} (x) T_ij as a dense matrix.

    ``blocks`` maps (i, j) with 0 <= i < n_rows, 0 <= j < n_cols to complex
    matrices of one shared shape; the xi and eta systems are standard basis
    vectors, so the result is the block matrix with T_ij in cell (i, j).
    """
    if not blocks:
        return np.zeros((0, 0), dtype=complex)
    shapes = {np.asarray(t).shape for t in blocks.values()}
    if len(shapes) != 1:
        raise AlgebraError("all blocks must share one shape")
    (p, q) = shapes.pop()
    out = np.zeros((n_rows * p, n_cols * q), dtype=complex)
    for (i, j), t in blocks.items():
        out[i * p : (i + 1) * p, j * q : (j + 1) * q] = np.asarray(t, dtype=complex)
    return out


def weak_cs_bound(blocks: dict) -> float:
    """(sum ||T_ij||^2)^(1/2): dominates the assembled operator norm."""
    return math.sqrt(
        math.fsum(float(np.linalg.norm(np.asarray(t), 2)) ** 2 for t in blocks.values())
    )
