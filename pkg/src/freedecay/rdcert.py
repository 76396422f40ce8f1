"""Filtrations as first-class objects and rapid-decay certificates.

A filtration assigns to every level n an orthonormal basis of the subspace
V_n (V_0 = C1, nested, *-stable, submultiplicative degrees).  The certified
constant C_n = ||(sum x_i x_i*)^(1/2)|| over a level basis bounds
sup{||a|| : a in V_n, ||a||_2 = 1}, exactly so on abelian and commutative
ambients; free-product levels get honest brackets instead of single numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .algebra import (
    AlgebraElement,
    AlgebraError,
    MatrixBlockAlgebra,
    dn_norm,
    gram_schmidt,
    l2_inner,
    l2_norm,
    onb_complement,
    op_norm,
    state,
)
from .freeword import FreeElement, FreeProductAmbient, Letter
from .scalars import QC, conj, to_complex

__all__ = [
    "Filtration",
    "ConstantFiltration",
    "FiniteDimFiltration",
    "MeasureDegreeFiltration",
    "FreeProductFiltration",
    "RdConstant",
    "RDReport",
    "rd_constant",
    "rd_report",
    "fit_exponent",
    "free_filtration",
    "derived_filtration",
    "DerivedFiltrationReport",
    "tensor_embed",
    "find_avitzour_triple",
    "verify_avitzour_triple",
    "AvitzourTriple",
    "orthogonality_hypotheses",
    "OrthogonalityReport",
    "classify_abelian",
    "Classification",
]


# ---------------------------------------------------------------------------
# filtration types
# ---------------------------------------------------------------------------


@dataclass
class RdConstant:
    lower: float
    upper: float
    method: str

    @property
    def value(self) -> float:
        """Certificate value (the upper endpoint)."""
        return self.upper


class Filtration:
    """Base class; subclasses provide level bases and a recipe tag."""

    recipe: str = "abstract"

    def level_onb(self, n: int):
        raise NotImplementedError

    def level_dim(self, n: int) -> int:
        return len(self.level_onb(n))

    def rd_constant(self, n: int) -> RdConstant:
        raise NotImplementedError

    def max_level(self) -> int | None:
        return None


class ConstantFiltration(Filtration):
    """V_0 = C1 and V_n = A for n >= 1: every finite-dimensional faithful
    C*-probability space has rapid decay along it."""

    recipe = "constant"

    def __init__(self, algebra: MatrixBlockAlgebra):
        self.algebra = algebra
        self._onb = [algebra.identity()] + onb_complement(algebra)

    def level_onb(self, n: int):
        if n == 0:
            return [self.algebra.identity()]
        return list(self._onb)

    def complement_onb(self, n: int):
        return [] if n == 0 else list(self._onb[1:])

    def rd_constant(self, n: int) -> RdConstant:
        if n == 0:
            return RdConstant(1.0, 1.0, "exact")
        c = dn_norm(self._onb)
        return RdConstant(c, c, "dn-certificate")


class FiniteDimFiltration(Filtration):
    """Generic finite-dimensional filtration from cumulative spanning sets.

    ``spans[n]`` lists elements generating V_n together with all lower
    levels and the identity.  Nesting is by construction; *-stability is
    validated on the resulting bases.  Levels continue constantly beyond
    the last provided span (the union is already everything they reach).
    """

    recipe = "finite-dim"

    def __init__(self, algebra: MatrixBlockAlgebra, spans, validate: bool = True):
        self.algebra = algebra
        self.spans = [list(level) for level in spans]
        self._onb_cache: dict[int, list] = {}
        if validate:
            for n in range(len(self.spans)):
                self._check_star_stable(n)

    def max_level(self):
        return len(self.spans) - 1

    def _seed(self, n: int):
        seed = [self.algebra.identity()]
        for level in self.spans[: n + 1]:
            seed.extend(level)
        return seed

    def level_onb(self, n: int):
        n = min(n, len(self.spans) - 1)
        if n not in self._onb_cache:
            self._onb_cache[n] = gram_schmidt(self._seed(n))
        return list(self._onb_cache[n])

    def complement_onb(self, n: int):
        return self.level_onb(n)[1:]

    def _check_star_stable(self, n: int):
        basis = self.level_onb(n)
        for x in basis:
            adj = x.adjoint()
            residual = adj
            for b in basis:
                residual = residual - b * l2_inner(adj, b)
            if l2_norm(residual) > 1e-9:
                raise AlgebraError(f"level {n} is not stable under adjoints")

    def check_product_containment(self, n: int, k: int, rng, samples: int = 5) -> bool:
        """Spot check V_n V_k inside V_{n+k} on random spanning products."""
        top = self.level_onb(min(n + k, len(self.spans) - 1))
        bn, bk = self.level_onb(n), self.level_onb(k)
        for _ in range(samples):
            x = bn[rng.integers(0, len(bn))] * bk[rng.integers(0, len(bk))]
            residual = x
            for b in top:
                residual = residual - b * l2_inner(x, b)
            if l2_norm(residual) > 1e-9:
                return False
        return True

    def rd_constant(self, n: int) -> RdConstant:
        c = dn_norm(self.level_onb(n))
        return RdConstant(c, c, "dn-certificate")


class MeasureDegreeFiltration(Filtration):
    """Polynomials of degree <= n inside (C[a,b], integral against mu)."""

    recipe = "degree"

    def __init__(self, measure, max_n: int):
        from .measure import ortho_polys

        self.measure = measure
        self.max_n = max_n
        self.seq = ortho_polys(measure, max_n + 1)

    def max_level(self):
        return self.max_n

    def level_dim(self, n: int) -> int:
        return n + 1

    def level_onb(self, n: int):
        return [self.seq.orthonormal_coefficients(k) for k in range(n + 1)]

    def rd_constant(self, n: int) -> RdConstant:
        from .measure import christoffel_sup

        if n == 0:
            return RdConstant(1.0, 1.0, "exact")
        c = float(christoffel_sup(self.seq, n))
        return RdConstant(c, c, "christoffel-grid")


class FreeProductFiltration(Filtration):
    """Alternating centered words of length <= n with letters from the
    level-n factor complements."""

    recipe = "free-product"

    def __init__(self, factor_filtrations, probe_seed: int = 0):
        self.factors = []
        for f in factor_filtrations:
            if not isinstance(f, (ConstantFiltration, FiniteDimFiltration)):
                raise AlgebraError(
                    "free-product levels need finite-dimensional factor filtrations"
                )
            self.factors.append(f)
        self.ambient = FreeProductAmbient([f.algebra for f in self.factors])
        self.probe_seed = probe_seed

    def level_onb(self, n: int):
        out = [FreeElement.one(self.ambient)]
        comps = [f.complement_onb(n) for f in self.factors]
        frontier = [((), None)]
        for _ in range(n):
            new = []
            for word, last in frontier:
                for j in range(len(self.factors)):
                    if j == last:
                        continue
                    for xi in comps[j]:
                        new.append((word + (Letter(j, xi),), j))
            for word, _ in new:
                out.append(FreeElement.word(self.ambient, word))
            frontier = new
        return out

    def level_dim(self, n: int) -> int:
        dims = [len(f.complement_onb(n)) for f in self.factors]
        total = 1
        level = dict(enumerate(dims))
        for _ in range(n):
            total += sum(level.values())
            level = {
                j: dims[j] * sum(v for k, v in level.items() if k != j)
                for j in range(len(dims))
            }
        return total

    def rd_constant(self, n: int) -> RdConstant:
        """Bracket: certified analytic upper endpoint vs realized lower bounds.

        upper: layer estimate 2 sqrt(m) (l+1) max_j C_j summed in quadrature
        over layers l <= n; lower: compressed-representation norms of probe
        elements of unit l2 norm.
        """
        if n == 0:
            return RdConstant(1.0, 1.0, "exact")
        m = len(self.factors)
        cjs = [
            dn_norm(f.complement_onb(n)) if f.complement_onb(n) else 0.0
            for f in self.factors
        ]
        cmax = max(max(cjs), 1.0)
        quad = math.sqrt(sum((ell + 1) ** 2 for ell in range(n + 1)))
        upper = 2 * math.sqrt(m) * cmax * quad
        lower = self._probe_lower(n)
        return RdConstant(lower, upper, "bracket")

    def _probe_lower(self, n: int) -> float:
        from .fock import fock_dimension, norm_lower_bound, shared_fock

        basis = self.level_onb(n)
        rng = np.random.default_rng(self.probe_seed + n)
        probes = []
        flat = sum(
            (b * (1.0 / math.sqrt(len(basis))) for b in basis[1:]),
            basis[0] * (1.0 / math.sqrt(len(basis))),
        )
        probes.append(flat)
        for _ in range(2):
            coeffs = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
            coeffs /= np.linalg.norm(coeffs)
            probes.append(
                sum((b * complex(c) for b, c in zip(basis[1:], coeffs[1:])),
                    basis[0] * complex(coeffs[0]))
            )
        depth = max(4, n + 1)
        while depth > 1 and fock_dimension(self.ambient.factors, depth + n) > 200_000:
            depth -= 1
        fock = shared_fock(self.ambient.factors, depth)
        best = 0.0
        for probe in probes:
            best = max(best, norm_lower_bound(fock, probe))
        return best


# ---------------------------------------------------------------------------
# reports and exponent fits
# ---------------------------------------------------------------------------


@dataclass
class RDReport:
    rows: list  # (n, lower, upper, dim)
    alpha_hat: float
    intercept: float
    recipe: str

    def to_json(self):
        return {
            "recipe": self.recipe,
            "alpha_hat": self.alpha_hat,
            "intercept": self.intercept,
            "rows": [
                {"n": n, "C_lower": lo, "C_upper": up, "dim": d}
                for (n, lo, up, d) in self.rows
            ],
        }


def rd_constant(filtration: Filtration, n: int):
    """(certificate value, method) at level n."""
    c = filtration.rd_constant(n)
    return c.value, c.method


def fit_exponent(rows):
    """Least-squares slope of log C_n against log(n+1), rows with n >= 1.

    Monotone clamping (C_n := max(C_n, C_{n-1})) removes numerical dips
    before fitting.  Needs at least 3 usable rows.
    """
    pts = [(n, c) for (n, c, *_rest) in _normalize_rows(rows) if n >= 1]
    if len(pts) < 3:
        raise ValueError("need at least 3 rows with n >= 1 to fit an exponent")
    clamped = []
    prev = 0.0
    for n, c in pts:
        prev = max(prev, c)
        clamped.append((n, prev))
    xs = np.log([n + 1.0 for n, _ in clamped])
    ys = np.log([c for _, c in clamped])
    design = np.vstack([xs, np.ones_like(xs)]).T
    (slope, intercept), *_ = np.linalg.lstsq(design, ys, rcond=None)
    return float(slope), float(intercept)


def _normalize_rows(rows):
    out = []
    for row in rows:
        if len(row) >= 2:
            out.append((row[0], float(row[1])) + tuple(row[2:]))
    return out


def rd_report(filtration: Filtration, max_n: int, threads: int = 1) -> RDReport:
    levels = range(max_n + 1)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            constants = list(pool.map(filtration.rd_constant, levels))
    else:
        constants = [filtration.rd_constant(n) for n in levels]
    rows = [
        (n, c.lower, c.upper, filtration.level_dim(n)) for n, c in zip(levels, constants)
    ]
    # clamp the certificate column monotone, then fit
    alpha, intercept = fit_exponent([(n, up) for (n, _lo, up, _d) in rows])
    return RDReport(rows=rows, alpha_hat=alpha, intercept=intercept, recipe=filtration.recipe)


def free_filtration(factor_filtrations, probe_seed: int = 0) -> FreeProductFiltration:
    return FreeProductFiltration(factor_filtrations, probe_seed=probe_seed)


# ---------------------------------------------------------------------------
# derived filtrations
# ---------------------------------------------------------------------------


@dataclass
class DerivedFiltrationReport:
    mode: str
    filtration: Filtration
    predicted_bound: list  # per level n: certified bound from the inputs
    realized: list  # per level n: recomputed certificate
    ok: bool


def tensor_embed(a1: MatrixBlockAlgebra, a2: MatrixBlockAlgebra):
    """(tensor algebra, embed) with embed(x, y) the Kronecker element."""
    densities = []
    for d1 in a1.densities:
        for d2 in a2.densities:
            densities.append(np.kron(_to_np(d1), _to_np(d2)))
    tensor = MatrixBlockAlgebra([[[complex(v) for v in row] for row in d] for d in densities])

    def embed(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
        blocks = []
        for b1 in x.to_numpy():
            for b2 in y.to_numpy():
                blocks.append(np.kron(b1, b2))
        return tensor.element([[[complex(v) for v in row] for row in b] for b in blocks])

    return tensor, embed


def _to_np(mat):
    return np.array([[to_complex(v) for v in row] for row in mat], dtype=complex)


def derived_filtration(mode: str, *, first: Filtration = None, second: Filtration = None,
                       weight=None, projection: AlgebraElement = None,
                       max_n: int = 4) -> DerivedFiltrationReport:
    """Direct-sum, corner, and tensor constructions with bound checks.

    direct_sum: levels V_{n,1} (+) V_{n,2}; certificate below
        max(C_1 w^{-1/2}, C_2 (1-w)^{-1/2}).
    corner:     levels p A p intersect V_n under the normalized corner state;
        certificate below C_n state(p)^{1/2} (hence also below
        C_n state(p)^{-1/2}).
    tensor:     levels V_{n,1} (x) V_{n,2}; certificate below
        C_1 C_2 dim(V_{n,1})^{1/2}.
    """
    if mode == "direct_sum":
        return _derived_direct_sum(first, second, weight, max_n)
    if mode == "corner":
        return _derived_corner(first, projection, max_n)
    if mode == "tensor":
        return _derived_tensor(first, second, max_n)
    raise ValueError(f"unknown derived filtration mode {mode!r}")


class _LevelFiltration(FiniteDimFiltration):
    """Finite-dim filtration with explicit per-level orthonormal bases."""

    def __init__(self, algebra, onbs, recipe):
        self.algebra = algebra
        self._levels = onbs
        self.recipe = recipe
        self._onb_cache = {}
        self.spans = [list(b) for b in onbs]

    def max_level(self):
        return len(self._levels) - 1

    def level_onb(self, n: int):
        return list(self._levels[min(n, len(self._levels) - 1)])

    def complement_onb(self, n: int):
        return self.level_onb(n)[1:]


def _derived_direct_sum(f1: Filtration, f2: Filtration, weight, max_n: int):
    w = weight if weight is not None else Fraction(1, 2)
    wf = float(w)
    if not 0 < wf < 1:
        raise AlgebraError("direct-sum weight must lie strictly between 0 and 1")
    a1, a2 = f1.algebra, f2.algebra
    densities = [
        [[_scale_scalar(v, w) for v in row] for row in d] for d in a1.densities
    ] + [
        [[_scale_scalar(v, 1 - w if isinstance(w, Fraction) else 1.0 - wf) for v in row] for row in d]
        for d in a2.densities
    ]
    algebra = MatrixBlockAlgebra(densities)
    nb1 = len(a1.block_dims)

    def embed(x: AlgebraElement | None, y: AlgebraElement | None) -> AlgebraElement:
        blocks = []
        for i, n in enumerate(algebra.block_dims):
            if i < nb1 and x is not None:
                blocks.append(x.blocks[i])
            elif i >= nb1 and y is not None:
                blocks.append(y.blocks[i - nb1])
            else:
                blocks.append(tuple((QC(0),) * n for _ in range(n)))
        return AlgebraElement(algebra, blocks)

    s1, s2 = 1.0 / math.sqrt(wf), 1.0 / math.sqrt(1.0 - wf)
    onbs = [[algebra.identity()]]
    for n in range(1, max_n + 1):
        level = [embed(x, None) * s1 for x in f1.level_onb(n)]
        level += [embed(None, y) * s2 for y in f2.level_onb(n)]
        onbs.append(gram_schmidt(level))
    filt = _LevelFiltration(algebra, onbs, "direct-sum")
    predicted, realized = [1.0], [filt.rd_constant(0).value]
    for n in range(1, max_n + 1):
        predicted.append(
            max(f1.rd_constant(n).value * s1, f2.rd_constant(n).value * s2)
        )
        realized.append(filt.rd_constant(n).value)
    ok = all(r <= p + 1e-9 for r, p in zip(realized, predicted))
    return DerivedFiltrationReport("direct_sum", filt, predicted, realized, ok)


def _scale_scalar(v, s):
    if isinstance(v, QC) and isinstance(s, Fraction):
        return v * QC(s)
    return to_complex(v) * float(s)


def _derived_corner(f: Filtration, p: AlgebraElement, max_n: int):
    algebra = f.algebra
    if p.owner != algebra:
        raise AlgebraError("projection lives in the wrong algebra")
    if op_norm(p * p - p) > 1e-10 or op_norm(p.adjoint() - p) > 1e-10:
        raise AlgebraError("corner needs a self-adjoint idempotent")
    wp = to_complex(state(p)).real
    if wp <= 1e-12:
        raise AlgebraError("corner projection has zero weight")
    # per-block isometries onto the range of p
    isometries = []
    new_densities = []
    keep = []
    for b, (pb, db) in enumerate(zip(p.to_numpy(), (_to_np(d) for d in algebra.densities))):
        evals, evecs = np.linalg.eigh(0.5 * (pb + pb.conj().T))
        cols = evecs[:, evals > 0.5]
        if cols.shape[1] == 0:
            isometries.append(None)
            continue
        keep.append(b)
        isometries.append(cols)
        new_densities.append(cols.conj().T @ db @ cols / wp)
    corner_algebra = MatrixBlockAlgebra(
        [[[complex(v) for v in row] for row in d] for d in new_densities]
    )

    def compress(x: AlgebraElement) -> AlgebraElement:
        blocks = []
        for b in keep:
            u = isometries[b]
            xb = x.to_numpy()[b]
            blocks.append(u.conj().T @ xb @ u)
        return corner_algebra.element(
            [[[complex(v) for v in row] for row in blk] for blk in blocks]
        )

    max_available = f.max_level()
    top = max_n if max_available is None else min(max_n, max_available)
    onbs = [[corner_algebra.identity()]]
    for n in range(1, top + 1):
        level_basis = f.level_onb(n)
        corner_span = _intersect_with_corner(algebra, level_basis, p)
        compressed = [compress(x) for x in corner_span]
        onbs.append(gram_schmidt([corner_algebra.identity()] + compressed))
    filt = _LevelFiltration(corner_algebra, onbs, "corner")
    predicted, realized = [1.0], [filt.rd_constant(0).value]
    for n in range(1, top + 1):
        predicted.append(f.rd_constant(n).value * math.sqrt(wp))
        realized.append(filt.rd_constant(n).value)
    ok = all(r <= pr + 1e-9 for r, pr in zip(realized, predicted))
    return DerivedFiltrationReport("corner", filt, predicted, realized, ok)


def _intersect_with_corner(algebra, level_basis, p):
    """Basis of span(level) intersect pAp, as elements of the big algebra."""
    units = algebra.basis()
    corner_span = [p * e * p for e in units]

    def vec(x):
        return np.concatenate([b.ravel() for b in x.to_numpy()])

    def proj(vectors):
        stack = np.array([vec(v) for v in vectors]).T
        q, _ = np.linalg.qr(stack)
        return q @ q.conj().T, q

    pv, _ = proj(level_basis)
    pc, _ = proj(corner_span)
    prod = pv @ pc @ pv
    evals, evecs = np.linalg.eigh(0.5 * (prod + prod.conj().T))
    out = []
    dims = algebra.block_dims
    for i in range(len(evals)):
        if evals[i] > 1 - 1e-9:
            flat = evecs[:, i]
            blocks, at = [], 0
            for n in dims:
                blocks.append(flat[at : at + n * n].reshape(n, n))
                at += n * n
            out.append(
                algebra.element([[[complex(v) for v in row] for row in b] for b in blocks])
            )
    return out


def _derived_tensor(f1: Filtration, f2: Filtration, max_n: int):
    algebra, embed = tensor_embed(f1.algebra, f2.algebra)
    onbs = [[algebra.identity()]]
    for n in range(1, max_n + 1):
        level = [
            embed(x, y) for x in f1.level_onb(n) for y in f2.level_onb(n)
        ]
        onbs.append(gram_schmidt(level))
    filt = _LevelFiltration(algebra, onbs, "tensor")
    predicted, realized = [1.0], [filt.rd_constant(0).value]
    for n in range(1, max_n + 1):
        k_n = len(f1.level_onb(n))
        predicted.append(
            f1.rd_constant(n).value * f2.rd_constant(n).value * math.sqrt(k_n)
        )
        realized.append(filt.rd_constant(n).value)
    ok = all(r <= pr + 1e-9 for r, pr in zip(realized, predicted))
    return DerivedFiltrationReport("tensor", filt, predicted, realized, ok)


# ---------------------------------------------------------------------------
# unitaries with prescribed vanishing moments
# ---------------------------------------------------------------------------


@dataclass
class AvitzourTriple:
    u: AlgebraElement
    v: AlgebraElement
    w: AlgebraElement

    def to_json(self):
        return {"u": self.u.to_json(), "v": self.v.to_json(), "w": self.w.to_json()}


def verify_avitzour_triple(u, v, w) -> dict:
    """Residuals of the five moment/unitarity conditions plus centralizer."""
    out = {}
    for name, x in (("u", u), ("v", v), ("w", w)):
        out[f"{name} unitary"] = op_norm(x.adjoint() * x - x.owner.identity())
    out["rho(u)"] = abs(to_complex(state(u)))
    out["tau(v)"] = abs(to_complex(state(v)))
    out["tau(w)"] = abs(to_complex(state(w)))
    out["tau(v*w)"] = abs(to_complex(state(v.adjoint() * w)))
    worst = 0.0
    for y in v.owner.basis():
        worst = max(worst, abs(to_complex(state(v * y) - state(y * v))))
    out["v centralizer"] = worst
    return out


def _diagonal_weights(algebra: MatrixBlockAlgebra):
    """Diagonal entries of the densities, exact when rational; None if any
    density is not diagonal."""
    weights = []
    for d in algebra.densities:
        n = len(d)
        for i in range(n):
            for j in range(n):
                if i != j:
                    v = d[i][j]
                    if (isinstance(v, QC) and bool(v)) or (
                        not isinstance(v, QC) and abs(to_complex(v)) > 1e-14
                    ):
                        return None
        weights.append([d[i][i] for i in range(n)])
    return weights


def _phase_vector_with_zero_mean(weights, rng):
    """Unit phases z_k with sum w_k z_k = 0, exact when possible.

    Tries an exact half-weight split (+1/-1), then uniform roots of unity,
    then the three-group law-of-cosines construction.  Returns None when
    max w > 1/2 (no solution exists) or no pattern is found.
    """
    fw = [float(w) for w in weights]
    total = sum(fw)
    if max(fw) > total / 2 + 1e-15:
        return None
    m = len(weights)
    exact = all(isinstance(w, (int, Fraction)) or (isinstance(w, QC) and w.im == 0) for w in weights)
    if exact:
        fr = [Fraction(w.re) if isinstance(w, QC) else Fraction(w) for w in weights]
        if len(set(fr)) == 1 and m % 2 == 0:
            return [QC(1) if k % 2 == 0 else QC(-1) for k in range(m)]
        half = sum(fr) / 2
        # subset-sum search for an exact +-1 split (small m only)
        if m <= 16:
            found = _subset_with_sum(fr, half)
            if found is not None:
                return [QC(-1) if k in found else QC(1) for k in range(m)]
    if len(set(fw)) == 1:
        return [complex(np.exp(2j * np.pi * k / m)) for k in range(m)]
    # three groups with balanced sums, phases from the triangle construction
    order = sorted(range(m), key=lambda k: -fw[k])
    groups = [[], [], []]
    sums = [0.0, 0.0, 0.0]
    for k in order:
        i = int(np.argmin(sums))
        groups[i].append(k)
        sums[i] += fw[k]
    a, b, c = sums
    if a > b + c + 1e-15 or b > a + c + 1e-15 or c > a + b + 1e-15:
        return None
    if c <= 1e-18:
        # two balanced groups: a +-1 split
        if abs(a - b) > 1e-12:
            return None
        phases = [0j] * m
        for k in groups[0]:
            phases[k] = 1.0 + 0j
        for k in groups[1]:
            phases[k] = -1.0 + 0j
        return phases
    cos_c = (a * a + b * b - c * c) / (2 * a * b) if a > 0 and b > 0 else 0.0
    theta = math.pi - math.acos(min(1.0, max(-1.0, cos_c)))
    zb = complex(np.exp(1j * theta))
    rem = -(a + b * zb)
    zc = rem / c
    zc /= abs(zc)
    phases = [0j] * m
    for k in groups[0]:
        phases[k] = 1.0 + 0j
    for k in groups[1]:
        phases[k] = zb
    for k in groups[2]:
        phases[k] = zc
    # polish: exact zero is generally impossible in floats; one Newton step
    # on the third group scale keeps the residual at machine precision
    resid = sum(w * z for w, z in zip(fw, phases))
    if abs(resid) > 1e-9:
        return None
    return phases


def _subset_with_sum(fractions_list, target):
    reachable = {Fraction(0): frozenset()}
    for k, w in enumerate(fractions_list):
        new = dict(reachable)
        for s, idx in reachable.items():
            t = s + w
            if t not in new and t <= target:
                new[t] = idx | {k}
        reachable = new
        if target in reachable:
            return reachable[target]
    return reachable.get(target)


def _diag_element(algebra, phases):
    blocks = []
    at = 0
    for n in algebra.block_dims:
        rows = [[phases[at + i] if i == j else _zero_for(phases[0]) for j in range(n)] for i in range(n)]
        blocks.append(rows)
        at += n
    return algebra.element(blocks)


def _zero_for(v):
    return QC(0) if isinstance(v, QC) else 0j


def _cyclic_permutation(algebra, block: int):
    """Unitary with a zero-diagonal cyclic shift in one block, a balanced
    +-1 pattern elsewhere when possible, identity otherwise."""
    blocks = []
    for b, n in enumerate(algebra.block_dims):
        if b == block:
            rows = [[QC(1) if i == (j + 1) % n else QC(0) for j in range(n)] for i in range(n)]
        else:
            rows = [[QC(1) if i == j else QC(0) for j in range(n)] for i in range(n)]
        blocks.append(rows)
    return algebra.element(blocks)


def _state_zero_unitary(algebra: MatrixBlockAlgebra, rng):
    """A unitary with state zero, or None."""
    weights = _diagonal_weights(algebra)
    if weights is not None and all(n >= 2 for n in algebra.block_dims):
        # zero-diagonal permutations per block: every contribution vanishes
        blocks = []
        for n in algebra.block_dims:
            rows = [[QC(1) if i == (j + 1) % n else QC(0) for j in range(n)] for i in range(n)]
            blocks.append(rows)
        return algebra.element(blocks)
    if weights is not None:
        flat = [w for ws in weights for w in ws]
        phases = _phase_vector_with_zero_mean(flat, rng)
        if phases is not None:
            return _diag_element(algebra, phases)
        return None
    # non-diagonal density: diagonalize first (float)
    return _state_zero_unitary_float(algebra, rng)


def _state_zero_unitary_float(algebra, rng):
    blocks = []
    diag_weights = []
    basis_changes = []
    for d in algebra.densities:
        dn = _to_np(d)
        evals, evecs = np.linalg.eigh(0.5 * (dn + dn.conj().T))
        diag_weights.extend(evals.tolist())
        basis_changes.append(evecs)
    phases = _phase_vector_with_zero_mean(diag_weights, rng)
    if phases is None:
        return None
    at = 0
    for (n, u) in zip(algebra.block_dims, basis_changes):
        z = np.diag([to_complex(p) for p in phases[at : at + n]])
        blocks.append(u @ z @ u.conj().T)
        at += n
    return algebra.element([[[complex(v) for v in row] for row in b] for b in blocks])


def _centralizer_pair(algebra: MatrixBlockAlgebra, rng, trials: int):
    """(v, w) with tau(v) = tau(w) = tau(v*w) = 0, v in the centralizer."""
    weights = _diagonal_weights(algebra)
    if weights is not None and all(n >= 2 for n in algebra.block_dims):
        flat = [w for ws in weights for w in ws]
        phases = _phase_vector_with_zero_mean(flat, rng)
        if phases is None:
            return None
        v = _diag_element(algebra, phases)
        # zero-diagonal permutations: tau(w) = 0 and tau(v* w) = 0 since the
        # product keeps a zero diagonal against any diagonal density
        blocks = []
        for n in algebra.block_dims:
            rows = [[QC(1) if i == (j + 1) % n else QC(0) for j in range(n)] for i in range(n)]
            blocks.append(rows)
        w = algebra.element(blocks)
        return v, w
    if weights is not None and algebra.is_abelian():
        flat = [w for ws in weights for w in ws]
        m = len(flat)
        if len(set(float(x) for x in flat)) == 1 and m >= 3:
            if m % 4 == 0:
                # exact rational-complex characters of orders 2 and 4
                sign = [QC(1) if k % 2 == 0 else QC(-1) for k in range(m)]
                quarter = [QC(0, 1) ** (k % 4) for k in range(m)]
                return _diag_element(algebra, sign), _diag_element(algebra, quarter)
            # two distinct nontrivial characters of the cyclic group
            v = _diag_element(
                algebra, [complex(np.exp(2j * np.pi * k / m)) for k in range(m)]
            )
            w = _diag_element(
                algebra, [complex(np.exp(4j * np.pi * k / m)) for k in range(m)]
            )
            return v, w
        return _abelian_pair_search(algebra, flat, rng, trials)
    return _random_pair_search(algebra, rng, trials)


def _abelian_pair_search(algebra, weights, rng, trials):
    m = len(weights)
    fw = np.array([float(w) for w in weights])
    # the rows (1, v, w) scaled by sqrt(weights) form a row-orthonormal
    # 3 x m matrix, so 3 w_k <= 1 for every atom: a proven obstruction
    if max(fw) > 1.0 / 3.0 + 1e-12:
        return None
    # strategy 1: phases with sum(w z) = sum(w z^2) = 0, then w = v^2
    z = _newton_phases(
        fw,
        rng,
        trials=min(trials, 60),
        constraints=lambda z: (np.dot(fw, z), np.dot(fw, z * z)),
        jacobian=lambda z: np.vstack([1j * fw * z, 2j * fw * z * z]),
        unknowns=m,
        to_phases=lambda ang: np.exp(1j * ang),
    )
    if z is not None:
        v = _diag_element(algebra, [complex(x) for x in z])
        return v, v * v
    # strategy 2: joint Newton over both phase vectors
    def joint_constraints(zz):
        v, w = zz[:m], zz[m:]
        return (np.dot(fw, v), np.dot(fw, w), np.dot(fw, v.conj() * w))

    def joint_jacobian(zz):
        v, w = zz[:m], zz[m:]
        zero = np.zeros(m)
        return np.vstack(
            [
                np.hstack([1j * fw * v, zero]),
                np.hstack([zero, 1j * fw * w]),
                np.hstack([-1j * fw * v.conj() * w, 1j * fw * v.conj() * w]),
            ]
        )

    zz = _newton_phases(
        fw,
        rng,
        trials=min(trials, 200),
        constraints=joint_constraints,
        jacobian=joint_jacobian,
        unknowns=2 * m,
        to_phases=lambda ang: np.exp(1j * ang),
    )
    if zz is not None:
        v = _diag_element(algebra, [complex(x) for x in zz[:m]])
        w = _diag_element(algebra, [complex(x) for x in zz[m:]])
        return v, w
    return None


def _newton_phases(fw, rng, trials, constraints, jacobian, unknowns, to_phases):
    for _ in range(trials):
        ang = rng.uniform(0, 2 * np.pi, size=unknowns)
        for _ in range(250):
            z = to_phases(ang)
            f = np.array(constraints(z))
            if np.all(np.abs(f) < 1e-14):
                return z
            jac = jacobian(z)
            real_jac = np.vstack([jac.real, jac.imag])
            rhs = np.concatenate([(-f).real, (-f).imag])
            step, *_ = np.linalg.lstsq(real_jac, rhs, rcond=None)
            norm = np.linalg.norm(step)
            if norm > np.pi:
                step *= np.pi / norm
            ang = ang + step
        z = to_phases(ang)
        if np.all(np.abs(np.array(constraints(z))) < 1e-12):
            return z
    return None


def _random_pair_search(algebra, rng, trials):
    for _ in range(trials):
        v = _state_zero_unitary_float(algebra, rng)
        if v is None:
            return None
        # random unitary conjugation of a second state-zero candidate
        w = _state_zero_unitary_float(algebra, rng)
        if w is None:
            return None
        res = verify_avitzour_triple(algebra.identity(), v, w)
        if res["tau(v*w)"] < 1e-10 and res["v centralizer"] < 1e-10:
            return v, w
    return None


def find_avitzour_triple(f1: Filtration, f2: Filtration, seed: int = 0,
                         trials: int = 10_000):
    """(u, v, w) with rho(u) = tau(v) = tau(w) = tau(v*w) = 0, unitary, and
    v in the centralizer; structured constructions first, randomized search
    second, None when nothing qualifies."""
    a1 = f1.algebra if isinstance(f1, Filtration) else f1
    a2 = f2.algebra if isinstance(f2, Filtration) else f2
    rng = np.random.default_rng(seed)
    u = _state_zero_unitary(a1, rng)
    if u is None:
        return None
    pair = _centralizer_pair(a2, rng, trials)
    if pair is None:
        return None
    v, w = pair
    triple = AvitzourTriple(u, v, w)
    residuals = verify_avitzour_triple(u, v, w)
    if max(residuals.values()) > 1e-9:
        return None
    return triple


# ---------------------------------------------------------------------------
# almost-orthogonality / containment hypothesis report
# ---------------------------------------------------------------------------


@dataclass
class OrthogonalityReport:
    sup_conjugated: float
    sup_mixed: float
    inflated_constant: float
    containment_l2: float
    containment_op: float
    level_dim: int
    fhat_dim: int

    def to_json(self):
        return {
            "sup_conjugated": self.sup_conjugated,
            "sup_mixed": self.sup_mixed,
            "inflated_constant": self.inflated_constant,
            "containment_l2": self.containment_l2,
            "containment_op": self.containment_op,
            "level_dim": self.level_dim,
            "fhat_dim": self.fhat_dim,
        }


def orthogonality_hypotheses(v_span, u: AlgebraElement, fhat_span) -> OrthogonalityReport:
    """Finite-level hypothesis numbers for a candidate conjugating unitary.

    Computes, for V = span(v_span) and Fhat = span(fhat_span) inside one
    finite-dimensional C*-probability space:
    * sup over unit l2 balls of |tau(a u b u)|, a, b in V;
    * sup over unit l2 balls of |tau(a u c)|, a in V, c in Fhat;
    * the certificate constant of Fhat (norm-vs-l2 inflation);
    * l2 and operator-norm distances of y and u* y u to Fhat, maximized over
      an orthonormal basis y of V with the scalars removed.
    Only the numbers for this (V, u, Fhat) are reported; no limit statement.
    """
    algebra = u.owner
    diff = op_norm(u.adjoint() * u - algebra.identity())
    if diff > 1e-10:
        raise AlgebraError("u must be unitary")
    v_onb = gram_schmidt([algebra.identity()] + list(v_span))
    f_onb = gram_schmidt([algebra.identity()] + list(fhat_span))
    m1 = np.array(
        [[to_complex(state(a * u * b * u)) for b in v_onb] for a in v_onb]
    )
    m2 = np.array([[to_complex(state(a * u * c)) for c in f_onb] for a in v_onb])
    sup1 = float(np.linalg.norm(m1, 2)) if m1.size else 0.0
    sup2 = float(np.linalg.norm(m2, 2)) if m2.size else 0.0
    inflated = dn_norm(f_onb)
    d2_max, dop_max = 0.0, 0.0
    u_adj = u.adjoint()
    for y in v_onb[1:]:
        for target in (y, u_adj * y * u):
            residual = target
            for c in f_onb:
                residual = residual - c * l2_inner(target, c)
            d2_max = max(d2_max, l2_norm(residual))
            dop_max = max(dop_max, op_norm(residual))
    return OrthogonalityReport(
        sup_conjugated=sup1,
        sup_mixed=sup2,
        inflated_constant=inflated,
        containment_l2=d2_max,
        containment_op=dop_max,
        level_dim=len(v_onb),
        fhat_dim=len(f_onb),
    )


# ---------------------------------------------------------------------------
# abelian classification
# ---------------------------------------------------------------------------


@dataclass
class Classification:
    selfless: bool
    reasons: list = field(default_factory=list)
    witnesses: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "selfless" if self.selfless else "not_selfless"

    def to_json(self):
        return {
            "verdict": self.verdict,
            "reasons": self.reasons,
            "witnesses": {k: str(v) for k, v in self.witnesses.items()},
        }


def classify_abelian(weights_a, weights_b) -> Classification:
    """Verdict for the free product of two finite abelian probability spaces.

    Selfless exactly when dim(A) + dim(B) >= 5 and the two heaviest atoms
    together weigh strictly less than 1; otherwise the failing clauses are
    reported with witnesses.
    """
    wa = _validated_weights(weights_a, "A")
    wb = _validated_weights(weights_b, "B")
    m, n = len(wa), len(wb)
    max_a, max_b = max(wa), max(wb)
    reasons = []
    witnesses = {}
    if m + n < 5:
        reasons.append(f"dim(A)+dim(B) = {m + n} < 5")
        witnesses["dims"] = (m, n)
    heavy = max_a + max_b
    heavy_fail = (heavy >= 1) if isinstance(heavy, Fraction) else heavy >= 1 - 1e-12
    if heavy_fail:
        reasons.append(
            f"max atom weights {max_a} + {max_b} = {heavy} >= 1"
        )
        witnesses["atoms"] = (wa.index(max_a), wb.index(max_b))
        witnesses["heavy_sum"] = heavy
    return Classification(selfless=not reasons, reasons=reasons, witnesses=witnesses)


def _validated_weights(weights, side):
    out = []
    for w in weights:
        if isinstance(w, (int, Fraction)):
            w = Fraction(w)
        elif isinstance(w, QC):
            if w.im != 0:
                raise AlgebraError(f"weights of {side} must be real")
            w = w.re
        else:
            w = float(w)
        if (isinstance(w, Fraction) and w <= 0) or (isinstance(w, float) and w <= 0):
            raise AlgebraError(f"weights of {side} must be positive")
        out.append(w)
    if not out:
        raise AlgebraError(f"{side} needs at least one atom")
    total = sum(out)
    if isinstance(total, Fraction):
        if total != 1:
            raise AlgebraError(f"weights of {side} sum to {total}, expected 1")
    elif abs(total - 1.0) > 1e-9:
        raise AlgebraError(f"weights of {side} sum to {total}, expected 1")
    return out
