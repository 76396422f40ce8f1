"""Finite-dimensional C*-probability spaces.

A :class:`MatrixBlockAlgebra` is a direct sum of matrix blocks carrying a
faithful state given by one positive-definite density matrix per block; the
density traces sum to 1.  Elements are block tuples of matrices.  Entries are
kept as exact rational-complex scalars (:class:`freedecay.scalars.QC`)
whenever the inputs were rational; operator norms always run in doubles.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction

import numpy as np

from .scalars import QC, as_scalar, conj, exact_sqrt, is_exact, scalar_is_zero, to_complex

__all__ = [
    "AlgebraError",
    "MatrixBlockAlgebra",
    "AlgebraElement",
    "state",
    "l2_inner",
    "l2_norm",
    "op_norm",
    "center",
    "onb_complement",
    "dn_norm",
    "gram_schmidt",
]

# Block dimension above which op_norm switches from a full eigendecomposition
# of x*x to power iteration.
_EIG_DIM_LIMIT = 512
_GS_RESIDUAL_TOL = 1e-12


class AlgebraError(Exception):
    """Structural error: bad shapes, non-faithful state, owner mismatch."""


# ---------------------------------------------------------------------------
# matrices as tuples of tuples of scalars
# ---------------------------------------------------------------------------


def _as_matrix(rows, dim=None):
    mat = tuple(tuple(as_scalar(v) for v in row) for row in rows)
    n = len(mat)
    if n == 0 or any(len(row) != n for row in mat):
        raise AlgebraError("matrix must be square and nonempty")
    if dim is not None and n != dim:
        raise AlgebraError(f"expected a {dim}x{dim} block, got {n}x{n}")
    return mat


def _zero_matrix(n):
    return tuple((QC(0),) * n for _ in range(n))


def _eye_matrix(n):
    return tuple(tuple(QC(1 if i == j else 0) for j in range(n)) for i in range(n))


def _mat_add(a, b):
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def _mat_scale(s, a):
    return tuple(tuple(s * x for x in row) for row in a)


def _mat_mul(a, b):
    n = len(a)
    bt = tuple(zip(*b))
    return tuple(
        tuple(sum((x * y for x, y in zip(row, col)), QC(0)) for col in bt) for row in a
    )


def _mat_adjoint(a):
    return tuple(tuple(conj(a[j][i]) for j in range(len(a))) for i in range(len(a)))


def _mat_trace_product(a, b):
    """trace(a @ b) without forming the product."""
    acc = QC(0)
    n = len(a)
    for i in range(n):
        for k in range(n):
            acc = acc + a[i][k] * b[k][i]
    return acc


def _mat_to_numpy(a):
    return np.array([[to_complex(v) for v in row] for row in a], dtype=complex)


# ---------------------------------------------------------------------------
# algebras
# ---------------------------------------------------------------------------


class MatrixBlockAlgebra:
    """Direct sum of matrix blocks with a faithful state.

    Parameters
    ----------
    densities:
        One Hermitian positive-definite matrix per block.  Their traces are
        the block weights and must sum to 1.
    """

    __slots__ = ("block_dims", "densities", "_hash", "_chols")

    def __init__(self, densities):
        dens = tuple(_as_matrix(d) for d in densities)
        if not dens:
            raise AlgebraError("algebra needs at least one block")
        self.block_dims = tuple(len(d) for d in dens)
        self.densities = dens
        self._hash = None
        self._chols = None
        self._validate()

    def _validate(self):
        total = QC(0)
        for b, d in enumerate(self.densities):
            n = len(d)
            for i in range(n):
                for j in range(n):
                    diff = d[i][j] - conj(d[j][i])
                    if not scalar_is_zero(diff, tol=1e-12):
                        raise AlgebraError(f"density of block {b} is not Hermitian")
                total = total + d[i][i]
            try:
                np.linalg.cholesky(_mat_to_numpy(d))
            except np.linalg.LinAlgError:
                raise AlgebraError(
                    f"density of block {b} is not positive definite (state not faithful)"
                ) from None
        if isinstance(total, QC):
            if total != QC(1):
                raise AlgebraError(f"density traces sum to {total}, expected 1")
        elif abs(total - 1.0) > 1e-12:
            raise AlgebraError(f"density traces sum to {total}, expected 1")

    # -- constructors ---------------------------------------------------
    @classmethod
    def from_weights(cls, weights) -> "MatrixBlockAlgebra":
        """Abelian algebra: one 1x1 block per atom weight."""
        ws = [as_scalar(w) for w in weights]
        return cls([[[w]] for w in ws])

    @classmethod
    def matrix_with_trace(cls, n: int) -> "MatrixBlockAlgebra":
        """(M_n, tr) with the normalized trace."""
        return cls([[[QC(Fraction(1, n)) if i == j else QC(0) for j in range(n)] for i in range(n)]])

    @classmethod
    def matrix_with_state(cls, diagonal) -> "MatrixBlockAlgebra":
        """Single matrix block with a diagonal density."""
        diag = [as_scalar(v) for v in diagonal]
        n = len(diag)
        return cls([[[diag[i] if i == j else QC(0) for j in range(n)] for i in range(n)]])

    # -- basic data -------------------------------------------------------
    @property
    def dim(self) -> int:
        """Linear dimension sum(n_b^2)."""
        return sum(n * n for n in self.block_dims)

    def weights(self):
        """Trace weight of each block."""
        out = []
        for d in self.densities:
            w = QC(0)
            for i in range(len(d)):
                w = w + d[i][i]
            out.append(w)
        return out

    def identity(self) -> "AlgebraElement":
        return AlgebraElement(self, [_eye_matrix(n) for n in self.block_dims])

    def zero(self) -> "AlgebraElement":
        return AlgebraElement(self, [_zero_matrix(n) for n in self.block_dims])

    def element(self, blocks) -> "AlgebraElement":
        return AlgebraElement(self, blocks)

    def scalar(self, s) -> "AlgebraElement":
        s = as_scalar(s)
        return AlgebraElement(
            self, [_mat_scale(s, _eye_matrix(n)) for n in self.block_dims]
        )

    def basis(self):
        """Canonical matrix units across the blocks, block-major order."""
        out = []
        for b, n in enumerate(self.block_dims):
            for i in range(n):
                for j in range(n):
                    blocks = [_zero_matrix(m) for m in self.block_dims]
                    rows = [list(r) for r in blocks[b]]
                    rows[i][j] = QC(1)
                    blocks[b] = tuple(tuple(r) for r in rows)
                    out.append(AlgebraElement(self, blocks))
        return out

    def gns_embedding(self, x: "AlgebraElement") -> np.ndarray:
        """Flat complex vector phi(x) with <x, y>_rho = phi(y)^H phi(x).

        Stacks vec(x_b @ chol(density_b)) across blocks, so the GNS inner
        product turns into the plain Hermitian dot product."""
        if self._chols is None:
            chols = tuple(np.linalg.cholesky(_mat_to_numpy(d)) for d in self.densities)
            object.__setattr__(self, "_chols", chols)
        parts = [
            (blk @ ch).ravel() for blk, ch in zip(x.to_numpy(), self._chols)
        ]
        return np.concatenate(parts)

    def is_abelian(self) -> bool:
        return all(n == 1 for n in self.block_dims)

    def is_tracial(self, tol: float = 1e-12) -> bool:
        """Whether the state is a trace (density a multiple of 1 per block)."""
        for d in self.densities:
            n = len(d)
            w = d[0][0]
            for i in range(n):
                for j in range(n):
                    want = w if i == j else QC(0)
                    diff = d[i][j] - want
                    if isinstance(diff, QC):
                        if diff != QC(0):
                            return False
                    elif abs(diff) > tol:
                        return False
        return True

    # -- identity / hashing -----------------------------------------------
    def _key(self):
        return (self.block_dims, self.densities)

    def __eq__(self, other):
        return isinstance(other, MatrixBlockAlgebra) and self._key() == other._key()

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash(self._key()))
        return self._hash

    def __setattr__(self, name, value):
        if name in self.__slots__ and getattr(self, name, None) is not None and name != "_hash":
            raise AttributeError("MatrixBlockAlgebra is immutable")
        object.__setattr__(self, name, value)

    def __repr__(self):
        return f"MatrixBlockAlgebra(block_dims={list(self.block_dims)})"

    # -- JSON ---------------------------------------------------------------
    def to_json(self) -> dict:
        if self.is_abelian():
            return {"atoms": [_scalar_to_json(d[0][0]) for d in self.densities]}
        return {
            "blocks": [
                {"dim": n, "density": _matrix_to_json(d)}
                for n, d in zip(self.block_dims, self.densities)
            ]
        }

    @classmethod
    def from_json(cls, data) -> "MatrixBlockAlgebra":
        if isinstance(data, str):
            data = json.loads(data)
        if "atoms" in data:
            return cls.from_weights([_scalar_from_json(w) for w in data["atoms"]])
        if "blocks" not in data:
            raise AlgebraError("algebra JSON needs 'blocks' or 'atoms'")
        dens = []
        for blk in data["blocks"]:
            d = _matrix_from_json(blk["density"])
            if "dim" in blk and blk["dim"] != len(d):
                raise AlgebraError("declared block dim does not match density shape")
            dens.append(d)
        return cls(dens)


def _scalar_to_json(s):
    if isinstance(s, QC):
        if s.im == 0 and s.re.denominator == 1:
            return int(s.re)
        if s.im == 0:
            return str(s.re)
        return [str(s.re), str(s.im)]
    c = complex(s)
    if c.imag == 0:
        return c.real
    return [c.real, c.imag]


def _scalar_from_json(v):
    if isinstance(v, (int, str)):
        return QC(Fraction(v))
    if isinstance(v, float):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        re, im = v
        if isinstance(re, str) or isinstance(im, str) or (
            isinstance(re, int) and isinstance(im, int)
        ):
            return QC(Fraction(re), Fraction(im))
        return complex(float(re), float(im))
    raise AlgebraError(f"bad scalar in JSON: {v!r}")


def _matrix_to_json(m):
    return [[_scalar_to_json(v) for v in row] for row in m]


def _matrix_from_json(rows):
    return _as_matrix([[_scalar_from_json(v) for v in row] for row in rows])


# ---------------------------------------------------------------------------
# elements
# ---------------------------------------------------------------------------


class AlgebraElement:
    """Element of a MatrixBlockAlgebra: one matrix per block, immutable."""

    __slots__ = ("owner", "blocks", "_hash")

    def __init__(self, owner: MatrixBlockAlgebra, blocks):
        object.__setattr__(self, "owner", owner)
        blocks = tuple(blocks)
        if len(blocks) != len(owner.block_dims):
            raise AlgebraError(
                f"element has {len(blocks)} blocks, algebra has {len(owner.block_dims)}"
            )
        blocks = tuple(
            _as_matrix(b, dim=n) for b, n in zip(blocks, owner.block_dims)
        )
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("AlgebraElement is immutable")

    # -- arithmetic -------------------------------------------------------
    def _check_owner(self, other):
        if self.owner != other.owner:
            raise AlgebraError("elements belong to different algebras")

    def __add__(self, other):
        if not isinstance(other, AlgebraElement):
            return NotImplemented
        self._check_owner(other)
        return AlgebraElement(
            self.owner, [_mat_add(a, b) for a, b in zip(self.blocks, other.blocks)]
        )

    def __sub__(self, other):
        return self.__add__(-other)

    def __neg__(self):
        return AlgebraElement(self.owner, [_mat_scale(QC(-1), b) for b in self.blocks])

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            self._check_owner(other)
            return AlgebraElement(
                self.owner, [_mat_mul(a, b) for a, b in zip(self.blocks, other.blocks)]
            )
        s = as_scalar(other)
        return AlgebraElement(self.owner, [_mat_scale(s, b) for b in self.blocks])

    def __rmul__(self, other):
        s = as_scalar(other)
        return AlgebraElement(self.owner, [_mat_scale(s, b) for b in self.blocks])

    def adjoint(self) -> "AlgebraElement":
        return AlgebraElement(self.owner, [_mat_adjoint(b) for b in self.blocks])

    def is_exact(self) -> bool:
        return all(is_exact(v) for b in self.blocks for row in b for v in row)

    def to_numpy(self):
        """List of numpy blocks (complex128)."""
        return [_mat_to_numpy(b) for b in self.blocks]

    # -- identity -----------------------------------------------------------
    def _key(self):
        return (self.owner.block_dims, self.blocks)

    def __eq__(self, other):
        return (
            isinstance(other, AlgebraElement)
            and self.owner == other.owner
            and self.blocks == other.blocks
        )

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash(self._key()))
        return self._hash

    def __repr__(self):
        return f"AlgebraElement(blocks={[len(b) for b in self.blocks]})"

    # -- JSON ----------------------------------------------------------------
    def to_json(self):
        return [_matrix_to_json(b) for b in self.blocks]

    @classmethod
    def from_json(cls, owner: MatrixBlockAlgebra, data) -> "AlgebraElement":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(owner, [_matrix_from_json(b) for b in data])


# ---------------------------------------------------------------------------
# state, inner products, norms
# ---------------------------------------------------------------------------


def state(x: AlgebraElement):
    """rho(x) = sum_b trace(density_b . block_b)."""
    acc = QC(0)
    for d, b in zip(x.owner.densities, x.blocks):
        acc = acc + _mat_trace_product(d, b)
    return acc


def l2_inner(x: AlgebraElement, y: AlgebraElement):
    """GNS inner product <x, y> = rho(y* x)."""
    if x.owner != y.owner:
        raise AlgebraError("elements belong to different algebras")
    return state(y.adjoint() * x)


def l2_norm(x: AlgebraElement) -> float:
    v = l2_inner(x, x)
    if isinstance(v, QC):
        return math.sqrt(float(v.re))
    return math.sqrt(max(v.real, 0.0))


def op_norm(x: AlgebraElement) -> float:
    """Max over blocks of the spectral norm, via eigh of x*x (power iteration
    above dimension 512)."""
    best = 0.0
    for b in x.blocks:
        a = _mat_to_numpy(b)
        n = a.shape[0]
        h = a.conj().T @ a
        h = 0.5 * (h + h.conj().T)
        if n <= _EIG_DIM_LIMIT:
            ev = np.linalg.eigvalsh(h)
            lam = max(float(ev[-1]), 0.0)
        else:
            lam = _power_iteration_top(h)
        best = max(best, math.sqrt(lam))
    return best


def _power_iteration_top(h, rel_tol: float = 1e-12, max_iter: int = 10_000) -> float:
    n = h.shape[0]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = h @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(np.real(np.vdot(v, h @ v)))
        if abs(new - lam) <= rel_tol * max(abs(new), 1.0):
            return max(new, 0.0)
        lam = new
    return max(lam, 0.0)


def center(x: AlgebraElement) -> AlgebraElement:
    """x - rho(x) 1; has state zero."""
    return x - x.owner.scalar(state(x))


def gram_schmidt(vectors, inner=l2_inner, residual_tol: float = _GS_RESIDUAL_TOL):
    """Orthonormalize under ``inner``; residuals below ``residual_tol`` drop.

    Normalization constants stay exact when the squared norm is a perfect
    rational square, otherwise the vector degrades to floats.
    """
    basis = []
    for v in vectors:
        w = v
        for b in basis:
            w = w - b * inner(w, b)
        nn = inner(w, w)
        if isinstance(nn, QC):
            n2 = nn.re
            if n2 < 0:
                n2 = Fraction(0)
            if float(n2) ** 0.5 < residual_tol:
                continue
            root = exact_sqrt(n2)
            if root is not None:
                basis.append(w * QC(Fraction(1) / root))
            else:
                basis.append(w * (1.0 / math.sqrt(float(n2))))
        else:
            n2 = max(nn.real, 0.0)
            if math.sqrt(n2) < residual_tol:
                continue
            basis.append(w * (1.0 / math.sqrt(n2)))
    return basis


def onb_complement(algebra: MatrixBlockAlgebra):
    """Orthonormal basis of A (-) C1 under the GNS inner product.

    Gram-Schmidt over [1, canonical matrix units...]; the leading slot spans
    C1, the rest is the complement.  Length is dim(A) - 1 (state faithful).
    """
    seed = [algebra.identity()] + algebra.basis()
    basis = gram_schmidt(seed)
    return basis[1:]


def dn_norm(vectors) -> float:
    """Operator norm of (sum_i x_i x_i*)^(1/2).

    For an orthonormal basis of a subspace V this is the rapid-decay
    certificate constant: it always dominates sup {||a|| : a in V, ||a||_2=1},
    with equality whenever the algebra is abelian (and in the commutative
    function-algebra setting).  Empty input gives 0.
    """
    vectors = list(vectors)
    if not vectors:
        return 0.0
    owner = vectors[0].owner
    for v in vectors:
        if v.owner != owner:
            raise AlgebraError("dn_norm vectors must share one algebra")
    acc = [np.zeros((n, n), dtype=complex) for n in owner.block_dims]
    for v in vectors:
        for i, b in enumerate(v.to_numpy()):
            acc[i] += b @ b.conj().T
    best = 0.0
    for h in acc:
        h = 0.5 * (h + h.conj().T)
        ev = np.linalg.eigvalsh(h)
        best = max(best, max(float(ev[-1]), 0.0))
    return math.sqrt(best)
