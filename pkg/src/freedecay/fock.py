"""Truncated free-product Hilbert space and norm/moment estimators.

Two independent oracles live here:

* an exact vacuum-pairing engine (:func:`vacuum_expectation`) that applies
  the free-product left action to tensor words symbolically and reads off
  the vacuum coefficient -- exact in rational mode;
* a numeric compressed left representation (:func:`represent`,
  :func:`norm_lower_bound`) built from sparse letter operators on an
  orthonormal tensor basis, whose spectral data give certified lower bounds
  for the reduced norm.

Moment-power estimates sit on top: s_r = state((x*x)^r)^(1/2r) together
with the consecutive-moment ratio (state((x*x)^r)/state((x*x)^{r-1}))^(1/2);
both are lower bounds of the norm and nondecreasing in r.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .algebra import (
    AlgebraElement,
    AlgebraError,
    center,
    l2_inner,
    onb_complement,
    state,
)
from .freeword import FreeElement, FreeProductAmbient, Letter, normalize
from .scalars import QC, is_exact, scalar_is_zero, to_complex

__all__ = [
    "FockError",
    "ResourceCapError",
    "TruncatedFock",
    "build_fock",
    "fock_dimension",
    "represent",
    "norm_lower_bound",
    "vacuum_expectation",
    "moment_norm_estimate",
    "MomentEstimates",
    "moments_to_free_cumulants",
    "free_cumulants_to_moments",
    "default_depth",
]

_DIMENSION_CAP = 200_000
_DENSE_CAP = 4_000
_TERM_CAP = 400_000


class FockError(Exception):
    pass


class ResourceCapError(FockError):
    pass


# ---------------------------------------------------------------------------
# basis enumeration
# ---------------------------------------------------------------------------


def fock_dimension(factors, depth: int) -> int:
    """1 + sum over alternating patterns of products of complement dims."""
    dims = [f.dim - 1 for f in factors]
    m = len(dims)
    total = 1
    level = {j: dims[j] for j in range(m)}
    for _ in range(depth):
        total += sum(level.values())
        level = {
            j: dims[j] * sum(v for k, v in level.items() if k != j) for j in range(m)
        }
    return total


class TruncatedFock:
    """Length <= depth truncation of the free-product Hilbert space.

    Basis tensors are tuples of (factor, onb_index) pairs with alternating
    factors; slot vectors run over an orthonormal basis of each factor's
    complement of C1.  The empty tuple is the vacuum.
    """

    def __init__(self, factors, depth: int, cap: int = _DIMENSION_CAP):
        if depth < 0:
            raise FockError("depth must be >= 0")
        self.factors = tuple(factors)
        self.depth = depth
        dim = fock_dimension(self.factors, depth)
        if dim > cap:
            raise ResourceCapError(
                f"truncated Fock dimension {dim} exceeds the cap {cap}"
            )
        self.onb = [onb_complement(f) for f in self.factors]
        self.basis = list(_enumerate_basis(self.factors, depth, self.onb))
        self.index = {t: i for i, t in enumerate(self.basis)}
        self._letter_ops: dict = {}
        self._action_mats: dict = {}
        self._extended: dict = {}
        self._lock = threading.Lock()

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def ambient(self) -> FreeProductAmbient:
        return FreeProductAmbient(self.factors)

    def __repr__(self):
        return f"TruncatedFock(m={len(self.factors)}, depth={self.depth}, dim={self.dimension})"

    # -- letter action on C (+) H_j as a (1+d) x (1+d) complex matrix -------
    def _action_matrix(self, factor: int, payload: AlgebraElement):
        key = (factor, payload)
        mat = self._action_mats.get(key)
        if mat is not None:
            return mat
        basis_j = self.onb[factor]
        d = len(basis_j)
        owner = self.factors[factor]
        cols = [owner.identity()] + basis_j
        mat = np.zeros((d + 1, d + 1), dtype=complex)
        for c, vec in enumerate(cols):
            prod = payload * vec
            mat[0, c] = to_complex(state(prod))
            prod_c = center(prod)
            for r, xi in enumerate(basis_j):
                mat[r + 1, c] = to_complex(l2_inner(prod_c, xi))
        self._action_mats[key] = mat
        return mat

    def letter_operator(self, factor: int, payload: AlgebraElement):
        """Sparse matrix of P lambda(iota_factor(payload)) P on this basis.

        Cached per payload; cache fills are idempotent, so the lock only
        guards the dictionaries."""
        key = (factor, payload)
        op = self._letter_ops.get(key)
        if op is not None:
            return op
        if payload.owner != self.factors[factor]:
            raise AlgebraError("payload does not belong to the requested factor")
        act = self._action_matrix(factor, payload)
        rows, cols, vals = [], [], []
        for col, tensor in enumerate(self.basis):
            if tensor and tensor[0][0] == factor:
                # multiply into the leading slot, then split
                i1 = tensor[0][1]
                rest = tensor[1:]
                v = act[0, i1 + 1]
                if v != 0:
                    rows.append(self.index[rest])
                    cols.append(col)
                    vals.append(v)
                for k in range(len(self.onb[factor])):
                    v = act[k + 1, i1 + 1]
                    if v != 0:
                        new = ((factor, k),) + rest
                        rows.append(self.index[new])
                        cols.append(col)
                        vals.append(v)
            else:
                # scalar part keeps the tensor, centered part prepends
                v = act[0, 0]
                if v != 0:
                    rows.append(col)
                    cols.append(col)
                    vals.append(v)
                if len(tensor) < self.depth:
                    for k in range(len(self.onb[factor])):
                        v = act[k + 1, 0]
                        if v != 0:
                            new = ((factor, k),) + tensor
                            rows.append(self.index[new])
                            cols.append(col)
                            vals.append(v)
        n = self.dimension
        op = sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)
        with self._lock:
            self._letter_ops[key] = op
        return op


def _enumerate_basis(factors, depth, onb):
    yield ()
    m = len(factors)
    frontier = [()]
    for _ in range(depth):
        new = []
        for tensor in frontier:
            first = tensor[0][0] if tensor else None
            for j in range(m):
                if j == first:
                    continue
                for i in range(len(onb[j])):
                    new.append(((j, i),) + tensor)
        # deterministic order: sort by pattern then indices
        new.sort()
        for t in new:
            yield t
        frontier = new


def build_fock(factors, depth: int, cap: int = _DIMENSION_CAP) -> TruncatedFock:
    return TruncatedFock(factors, depth, cap=cap)


_shared_focks: dict = {}
_shared_focks_lock = threading.Lock()


def shared_fock(factors, depth: int) -> TruncatedFock:
    """Process-wide cache of truncated spaces; letter operators accumulate on
    the shared object, which makes repeated norm queries cheap."""
    key = (tuple(f._key() for f in factors), depth)
    with _shared_focks_lock:
        fock = _shared_focks.get(key)
        if fock is None:
            fock = TruncatedFock(factors, depth)
            _shared_focks[key] = fock
    return fock


def default_depth(x: FreeElement) -> int:
    return max(4, 2 * x.max_word_length())


# ---------------------------------------------------------------------------
# compressed representation
# ---------------------------------------------------------------------------


def _represent_sparse(fock: TruncatedFock, x: FreeElement):
    """P_L lambda(x) P_L as a sparse matrix, exact compression.

    Letter products run at an extended depth L + max word length so that no
    intermediate truncation corrupts the depth-L block.
    """
    if x.ambient != fock.ambient():
        raise AlgebraError("element ambient does not match the Fock factors")
    k = x.max_word_length()
    if k == 0:
        c = to_complex(x.terms.get((), QC(0)))
        return sp.identity(fock.dimension, dtype=complex, format="csr") * c
    with fock._lock:
        big = fock._extended.get(k)
        if big is None:
            big = TruncatedFock(fock.factors, fock.depth + k, cap=_DIMENSION_CAP * 4)
            fock._extended[k] = big
    n_small = fock.dimension
    n_big = big.dimension
    # basis order puts all length <= depth tensors first in the big space, in
    # the same order as the small space, so corner extraction is exact.
    selector = sp.eye(n_big, n_small, dtype=complex, format="csr")
    rows_acc, cols_acc, data_acc = [], [], []
    for word, coeff in x.terms.items():
        c = to_complex(coeff)
        if not word:
            idx = np.arange(n_small)
            rows_acc.append(idx)
            cols_acc.append(idx)
            data_acc.append(np.full(n_small, c))
            continue
        cols = selector
        for letter in reversed(word):
            cols = big.letter_operator(letter.factor, letter.payload) @ cols
        block = cols[:n_small, :].tocoo()
        rows_acc.append(block.row)
        cols_acc.append(block.col)
        data_acc.append(c * block.data)
    total = sp.csr_matrix(
        (np.concatenate(data_acc), (np.concatenate(rows_acc), np.concatenate(cols_acc))),
        shape=(n_small, n_small),
        dtype=complex,
    )
    return total


def represent(fock: TruncatedFock, x: FreeElement) -> np.ndarray:
    """Dense matrix of the compressed left action P_L lambda(x) P_L."""
    if fock.dimension > _DENSE_CAP:
        raise ResourceCapError(
            f"dense representation capped at dimension {_DENSE_CAP}; "
            "use norm_lower_bound for spectral data"
        )
    return np.asarray(_represent_sparse(fock, x).todense())


def norm_lower_bound(fock: TruncatedFock, x: FreeElement) -> float:
    """Largest singular value of the compressed action: a certified lower
    bound of the reduced free-product norm of x."""
    matrix = _represent_sparse(fock, x)
    n = matrix.shape[0]
    if n <= 400:
        dense = np.asarray(matrix.todense())
        return float(np.linalg.norm(dense, 2))
    v0 = np.ones(n) / math.sqrt(n)
    vals = spla.svds(
        matrix, k=1, v0=v0, return_singular_vectors=False, maxiter=5000
    )
    return float(vals[0])


def _basis_order_is_prefix(small: TruncatedFock, big: TruncatedFock) -> bool:
    return big.basis[: small.dimension] == small.basis


# ---------------------------------------------------------------------------
# exact vacuum pairing
# ---------------------------------------------------------------------------


def vacuum_expectation(x: FreeElement):
    """<lambda(x) Omega, Omega> computed by the symbolic tensor action.

    Exact in rational mode; equals free_state(x) for every x (independent
    recursion: prepend/split on tensors instead of merge/center on words).
    """
    acc = QC(0)
    for word, coeff in x.terms.items():
        acc = acc + coeff * _vacuum_of_word(x.ambient, word)
    return acc


def _vacuum_of_word(ambient, word):
    # states: dict mapping tensor (tuple of Letters with centered payloads)
    # to coefficient; apply letters right to left.
    states = {(): QC(1)}
    for letter in reversed(word):
        j = letter.factor
        payload = letter.payload
        new: dict = {}

        def _add(tensor, coeff):
            if scalar_is_zero(coeff):
                return
            acc = new.get(tensor)
            acc = coeff if acc is None else acc + coeff
            if scalar_is_zero(acc):
                new.pop(tensor, None)
            else:
                new[tensor] = acc

        for tensor, coeff in states.items():
            if tensor and tensor[0].factor == j:
                prod = payload * tensor[0].payload
                rest = tensor[1:]
                _add(rest, coeff * state(prod))
                centered = center(prod)
                if not _is_zero_element(centered):
                    _add((Letter(j, centered),) + rest, coeff)
            else:
                _add(tensor, coeff * state(payload))
                centered = center(payload)
                if not _is_zero_element(centered):
                    _add((Letter(j, centered),) + tensor, coeff)
        states = new
        if not states:
            return QC(0)
    return states.get((), QC(0))


def _is_zero_element(x: AlgebraElement) -> bool:
    if x.is_exact():
        return all(v == QC(0) for b in x.blocks for row in b for v in row)
    return all(abs(to_complex(v)) <= 1e-300 for b in x.blocks for row in b for v in row)


# ---------------------------------------------------------------------------
# free cumulants
# ---------------------------------------------------------------------------


def moments_to_free_cumulants(moments):
    """Free cumulants kappa_1..kappa_n from raw moments [m_0=1, m_1, ..., m_n].

    Uses m_n = sum_{s=1}^{n} kappa_s [z^{n-s}] M(z)^s with M(z) = sum m_k z^k.
    Exact over Fractions.
    """
    n = len(moments) - 1
    m = list(moments)
    if m[0] != 1:
        raise ValueError("m_0 must be 1")
    powers = {1: m[:]}

    def mpow(s):
        if s not in powers:
            prev = mpow(s - 1)
            out = [_zero_like(m[0])] * (n + 1)
            for a in range(n + 1):
                acc = _zero_like(m[0])
                for b in range(a + 1):
                    acc = acc + prev[b] * m[a - b]
                out[a] = acc
            powers[s] = out
        return powers[s]

    kappa = [_zero_like(m[0])] * (n + 1)
    for nn in range(1, n + 1):
        acc = m[nn]
        for s in range(1, nn):
            acc = acc - kappa[s] * mpow(s)[nn - s]
        kappa[nn] = acc
    return kappa[1:]


def free_cumulants_to_moments(kappa, n: int):
    """Raw moments m_0..m_n from free cumulants kappa_1..kappa_n."""
    one = _one_like(kappa[0]) if kappa else Fraction(1)
    m = [one] + [_zero_like(one)] * n
    for nn in range(1, n + 1):
        acc = _zero_like(one)
        for s in range(1, nn + 1):
            # [z^{nn-s}] M(z)^s using the moments found so far
            coef = [one] + [_zero_like(one)] * (nn - s)
            for _ in range(s):
                nxt = [_zero_like(one)] * (nn - s + 1)
                for a in range(nn - s + 1):
                    t = _zero_like(one)
                    for b in range(a + 1):
                        t = t + coef[b] * m[a - b]
                    nxt[a] = t
                coef = nxt
            acc = acc + kappa[s - 1] * coef[nn - s]
        m[nn] = acc
    return m


def _as_real_float(v) -> float:
    if isinstance(v, QC):
        return float(v.re)
    if isinstance(v, (int, Fraction, float)):
        return float(v)
    return complex(v).real


def _zero_like(v):
    return Fraction(0) if isinstance(v, (int, Fraction)) else 0.0


def _one_like(v):
    return Fraction(1) if isinstance(v, (int, Fraction)) else 1.0


# ---------------------------------------------------------------------------
# moment-power norm estimates
# ---------------------------------------------------------------------------


@dataclass
class MomentEstimates:
    """Rows (r, state((x*x)^r), power-root bound, ratio bound, best)."""

    rows: list
    method: str

    @property
    def max(self) -> float:
        return self.rows[-1][4] if self.rows else 0.0

    def best_at(self, r: int) -> float:
        return self.rows[r - 1][4]


def moment_norm_estimate(x: FreeElement, r_max: int, term_cap: int = _TERM_CAP) -> MomentEstimates:
    """Lower bounds of ||x|| from moments of x*x.

    For each r <= r_max the report carries q_r = state((x*x)^r), the power
    root q_r^(1/2r) and the consecutive ratio (q_r/q_{r-1})^(1/2); both are
    certified lower bounds of the reduced norm and nondecreasing in r, and
    the best column is their max.  Sums of single letters (one per factor)
    go through exact free-cumulant arithmetic; everything else multiplies
    words out, subject to a term cap.
    """
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    q, method = _even_moments(x, r_max, term_cap)
    rows = []
    prev = 1.0
    for r in range(1, r_max + 1):
        qr = _as_real_float(q[r])
        root = qr ** (1.0 / (2 * r)) if qr > 0 else 0.0
        ratio = math.sqrt(qr / prev) if prev > 0 else 0.0
        rows.append((r, q[r], root, ratio, max(root, ratio)))
        prev = qr
    return MomentEstimates(rows, method)


def _even_moments(x: FreeElement, r_max: int, term_cap: int):
    """[q_0..q_{r_max}] with q_r = free_state((x*x)^r)."""
    sa = x == x.adjoint()
    if sa and x.max_word_length() <= 1:
        m = _single_letter_moments(x, 2 * r_max)
        return [m[2 * r] for r in range(r_max + 1)], "free-cumulant"
    h = normalize(x.adjoint() * x)
    if h.max_word_length() <= 1:
        m = _single_letter_moments(h, r_max)
        return m, "free-cumulant"
    from .freeword import l2_inner_free

    # q_{2s} = <h^s, h^s> and q_{2s+1} = <h^{s+1}, h^s> (h self-adjoint), so
    # only powers up to ceil(r_max/2) are ever multiplied out.
    powers = {0: FreeElement.one(x.ambient), 1: h}

    def power(s):
        if s not in powers:
            prev = power(s - 1)
            if len(prev.terms) * len(h.terms) > term_cap:
                raise ResourceCapError(
                    f"moment expansion would exceed {term_cap} word products; "
                    "lower r_max"
                )
            powers[s] = normalize(prev * h)
        return powers[s]

    q = [QC(1)]
    for r in range(1, r_max + 1):
        s = r // 2
        if r % 2 == 0:
            hs = power(s)
            q.append(l2_inner_free(hs, hs))
        else:
            q.append(l2_inner_free(power(s + 1), power(s)))
    return q, "word-expansion"


def _single_letter_moments(x: FreeElement, n: int):
    """Moments of a self-adjoint x = c 1 + sum_j iota_j(y_j) via cumulant
    additivity of free summands."""
    c = x.terms.get((), QC(0))
    by_factor: dict[int, AlgebraElement] = {}
    for word, coeff in x.terms.items():
        if not word:
            continue
        (letter,) = word
        contrib = letter.payload * coeff
        acc = by_factor.get(letter.factor)
        by_factor[letter.factor] = contrib if acc is None else acc + contrib
    exact = is_exact(c) and all(y.is_exact() for y in by_factor.values())
    c_real = Fraction(c.re) if isinstance(c, QC) else complex(c).real
    if not exact:
        c_real = float(c_real)
    total_kappa = [c_real] + [_zero_like(c_real)] * (n - 1)
    for y in by_factor.values():
        m = _element_moments(y, n, exact)
        kap = moments_to_free_cumulants(m)
        total_kappa = [a + b for a, b in zip(total_kappa, kap)]
    # fold the scalar into kappa_1 (free cumulants of a scalar vanish beyond 1)
    m = free_cumulants_to_moments(total_kappa, n)
    return m


def _element_moments(y: AlgebraElement, n: int, exact: bool):
    """[rho(y^0), ..., rho(y^n)] with real outputs."""
    out = [Fraction(1) if exact else 1.0]
    p = y.owner.identity()
    for _ in range(n):
        p = p * y
        s = state(p)
        if exact:
            out.append(Fraction(s.re))
        else:
            out.append(complex(s).real)
    return out
