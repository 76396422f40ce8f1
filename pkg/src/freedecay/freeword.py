"""Algebraic free products over finite-dimensional factors.

Elements are finite linear combinations of words whose letters carry a
factor index and a concrete matrix payload.  Words are kept *merged*
(no two adjacent letters from the same factor, no scalar letters); the
centered alternating normal form and the free-product state come out of a
memoized centering recursion.  Everything is exact whenever payloads and
coefficients are rational.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .algebra import AlgebraElement, AlgebraError, MatrixBlockAlgebra, center, l2_inner, op_norm, state
from .scalars import QC, as_scalar, conj, is_exact, scalar_is_zero, to_complex

__all__ = [
    "FreeProductAmbient",
    "Letter",
    "FreeElement",
    "normalize",
    "free_state",
    "l2_inner_free",
    "l2_norm_free",
    "phi_conjugation",
    "avitzour_phi",
    "avitzour_shape_check",
    "AvitzourConditionError",
    "ShapeReport",
]

_FLOAT_TOL = 1e-12


class AvitzourConditionError(ValueError):
    """A required unitarity/moment condition fails; names the condition."""

    def __init__(self, condition: str, value):
        self.condition = condition
        self.value = value
        super().__init__(f"condition {condition} = 0 violated: got {value}")


class FreeProductAmbient:
    """Ordered tuple of factor algebras defining an algebraic free product."""

    __slots__ = ("factors", "_hash")

    def __init__(self, factors):
        object.__setattr__(self, "factors", tuple(factors))
        if not self.factors:
            raise AlgebraError("free product needs at least one factor")
        object.__setattr__(self, "_hash", hash(tuple(f._key() for f in self.factors)))

    def __setattr__(self, name, value):
        raise AttributeError("FreeProductAmbient is immutable")

    def __eq__(self, other):
        return isinstance(other, FreeProductAmbient) and self.factors == other.factors

    def __hash__(self):
        return self._hash

    def __len__(self):
        return len(self.factors)

    def __repr__(self):
        return f"FreeProductAmbient({len(self.factors)} factors)"

    def to_json(self):
        return {"factors": [f.to_json() for f in self.factors]}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        return cls([MatrixBlockAlgebra.from_json(f) for f in data["factors"]])


class Letter:
    """A factor-tagged algebra element."""

    __slots__ = ("factor", "payload", "_hash")

    def __init__(self, factor: int, payload: AlgebraElement):
        object.__setattr__(self, "factor", int(factor))
        object.__setattr__(self, "payload", payload)
        object.__setattr__(self, "_hash", hash((self.factor, payload)))

    def __setattr__(self, name, value):
        raise AttributeError("Letter is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, Letter)
            and self.factor == other.factor
            and self.payload == other.payload
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Letter({self.factor})"


def _scalar_part(x: AlgebraElement):
    """If x == c*1 return c, else None."""
    c = x.blocks[0][0][0]
    if x == x.owner.scalar(c):
        return c
    return None


def _merge_word(ambient: FreeProductAmbient, letters):
    """Multiply out adjacent same-factor letters and absorb scalar letters.

    Returns (coefficient, merged word) where the word has no adjacent
    same-factor letters and no scalar-multiple-of-1 letters; coefficient 0
    means the whole word vanished.
    """
    coeff = QC(1)
    stack: list[Letter] = []
    for letter in letters:
        current = letter
        while True:
            s = _scalar_part(current.payload)
            if s is not None:
                coeff = coeff * s
                if scalar_is_zero(coeff):
                    return QC(0), ()
                current = None
                break
            if stack and stack[-1].factor == current.factor:
                prev = stack.pop()
                current = Letter(current.factor, prev.payload * current.payload)
                continue
            break
        if current is not None:
            stack.append(current)
    # scalar drops can leave same-factor neighbors separated during the scan;
    # run a fixpoint pass to be safe.
    changed = True
    while changed:
        changed = False
        out: list[Letter] = []
        for letter in stack:
            if out and out[-1].factor == letter.factor:
                merged = Letter(letter.factor, out[-1].payload * letter.payload)
                out.pop()
                s = _scalar_part(merged.payload)
                if s is not None:
                    coeff = coeff * s
                    if scalar_is_zero(coeff):
                        return QC(0), ()
                else:
                    out.append(merged)
                changed = True
            else:
                out.append(letter)
        stack = out
    return coeff, tuple(stack)


class FreeElement:
    """Finite linear combination of merged words."""

    __slots__ = ("ambient", "terms")

    def __init__(self, ambient: FreeProductAmbient, terms=None, _validated=False):
        object.__setattr__(self, "ambient", ambient)
        clean: dict = {}
        if terms:
            for word, coeff in terms.items():
                coeff = as_scalar(coeff)
                if scalar_is_zero(coeff):
                    continue
                if not _validated:
                    for letter in word:
                        owner = ambient.factors[letter.factor]
                        if letter.payload.owner != owner:
                            raise AlgebraError(
                                f"letter in factor {letter.factor} has a foreign payload"
                            )
                    c2, word = _merge_word(ambient, word)
                    coeff = coeff * c2
                    if scalar_is_zero(coeff):
                        continue
                prev = clean.get(word)
                coeff = coeff if prev is None else prev + coeff
                if scalar_is_zero(coeff):
                    clean.pop(word, None)
                else:
                    clean[word] = coeff
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, name, value):
        raise AttributeError("FreeElement is immutable")

    # -- constructors -----------------------------------------------------
    @classmethod
    def scalar(cls, ambient, value) -> "FreeElement":
        return cls(ambient, {(): as_scalar(value)}, _validated=True)

    @classmethod
    def one(cls, ambient) -> "FreeElement":
        return cls.scalar(ambient, 1)

    @classmethod
    def letter(cls, ambient, factor: int, payload: AlgebraElement) -> "FreeElement":
        return cls(ambient, {(Letter(factor, payload),): QC(1)})

    @classmethod
    def word(cls, ambient, letters, coeff=1) -> "FreeElement":
        return cls(ambient, {tuple(letters): as_scalar(coeff)})

    # -- algebra ------------------------------------------------------------
    def _check(self, other):
        if self.ambient != other.ambient:
            raise AlgebraError("free elements live in different ambients")

    def __add__(self, other):
        if not isinstance(other, FreeElement):
            other = FreeElement.scalar(self.ambient, other)
        self._check(other)
        out = dict(self.terms)
        for w, c in other.terms.items():
            acc = out.get(w)
            acc = c if acc is None else acc + c
            if scalar_is_zero(acc):
                out.pop(w, None)
            else:
                out[w] = acc
        return FreeElement(self.ambient, out, _validated=True)

    def __sub__(self, other):
        if not isinstance(other, FreeElement):
            other = FreeElement.scalar(self.ambient, other)
        return self + (-other)

    def __neg__(self):
        return FreeElement(
            self.ambient, {w: -c for w, c in self.terms.items()}, _validated=True
        )

    def __mul__(self, other):
        if not isinstance(other, FreeElement):
            s = as_scalar(other)
            return FreeElement(
                self.ambient, {w: c * s for w, c in self.terms.items()}, _validated=True
            )
        self._check(other)
        out: dict = {}
        for w1, c1 in self.terms.items():
            for w2, c2 in other.terms.items():
                c3, word = _merge_word(self.ambient, w1 + w2)
                coeff = c1 * c2 * c3
                if scalar_is_zero(coeff):
                    continue
                acc = out.get(word)
                acc = coeff if acc is None else acc + coeff
                if scalar_is_zero(acc):
                    out.pop(word, None)
                else:
                    out[word] = acc
        return FreeElement(self.ambient, out, _validated=True)

    def __rmul__(self, other):
        s = as_scalar(other)
        return FreeElement(
            self.ambient, {w: s * c for w, c in self.terms.items()}, _validated=True
        )

    def adjoint(self) -> "FreeElement":
        out = {}
        for w, c in self.terms.items():
            new = tuple(Letter(l.factor, l.payload.adjoint()) for l in reversed(w))
            out[new] = conj(c)
        return FreeElement(self.ambient, out, _validated=True)

    # -- inspection -----------------------------------------------------------
    def max_word_length(self) -> int:
        return max((len(w) for w in self.terms), default=0)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(scalar_is_zero(c, tol) for c in self.terms.values())

    def is_exact(self) -> bool:
        return all(is_exact(c) for c in self.terms.values()) and all(
            l.payload.is_exact() for w in self.terms for l in w
        )

    def __eq__(self, other):
        return (
            isinstance(other, FreeElement)
            and self.ambient == other.ambient
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.ambient, frozenset(self.terms.items())))

    def __repr__(self):
        return f"FreeElement({len(self.terms)} terms, max length {self.max_word_length()})"

    # -- JSON -------------------------------------------------------------------
    def to_json(self):
        items = []
        for w, c in sorted(self.terms.items(), key=_word_sort_key):
            items.append(
                {
                    "coeff": _coeff_to_json(c),
                    "word": [
                        {"factor": l.factor, "elem": l.payload.to_json()} for l in w
                    ],
                }
            )
        return {"terms": items}

    @classmethod
    def from_json(cls, ambient: FreeProductAmbient, data) -> "FreeElement":
        if isinstance(data, str):
            data = json.loads(data)
        terms: dict = {}
        for item in data["terms"]:
            word = tuple(
                Letter(
                    int(l["factor"]),
                    AlgebraElement.from_json(ambient.factors[int(l["factor"])], l["elem"]),
                )
                for l in item["word"]
            )
            c = _coeff_from_json(item["coeff"])
            terms[word] = terms.get(word, QC(0)) + c
        return cls(ambient, terms)


def _coeff_to_json(c):
    if isinstance(c, QC):
        return [str(c.re), str(c.im)]
    c = complex(c)
    return [c.real, c.imag]


def _coeff_from_json(v):
    from fractions import Fraction

    re, im = v
    if isinstance(re, str):
        return QC(Fraction(re), Fraction(im))
    return complex(float(re), float(im))


def _word_sort_key(item):
    word, _ = item
    return (
        len(word),
        tuple(l.factor for l in word),
        tuple(
            (to_complex(v).real, to_complex(v).imag)
            for l in word
            for block in l.payload.blocks
            for row in block
            for v in row
        ),
    )


# ---------------------------------------------------------------------------
# centered alternating normal form
# ---------------------------------------------------------------------------


def _decompose_word(ambient, word, memo):
    """Decompose a merged word into alternating *centered* words.

    Returns dict {word: coeff}; the empty word carries the scalar part.
    """
    if word in memo:
        return memo[word]
    split_at = None
    for i, letter in enumerate(word):
        s = state(letter.payload)
        if not scalar_is_zero(s, _FLOAT_TOL if not is_exact(s) else 0.0):
            split_at = (i, s)
            break
    if split_at is None:
        result = {word: QC(1)}
        memo[word] = result
        return result
    i, s = split_at
    letter = word[i]
    centered_letter = Letter(letter.factor, center(letter.payload))
    result: dict = {}
    # branch 1: replace the letter by its centered part (may vanish)
    if _scalar_part(centered_letter.payload) is None:
        branch = word[:i] + (centered_letter,) + word[i + 1 :]
        for w, c in _decompose_word(ambient, branch, memo).items():
            acc = result.get(w)
            acc = c if acc is None else acc + c
            result[w] = acc
    # branch 2: scalar part times the word with the letter removed
    c2, reduced = _merge_word(ambient, word[:i] + word[i + 1 :])
    factor = s * c2
    if not scalar_is_zero(factor):
        for w, c in _decompose_word(ambient, reduced, memo).items():
            acc = result.get(w)
            add = factor * c
            acc = add if acc is None else acc + add
            result[w] = acc
    result = {w: c for w, c in result.items() if not scalar_is_zero(c)}
    memo[word] = result
    return result


def normalize(x: FreeElement) -> FreeElement:
    """Equal element written as c*1 + sum of alternating centered words."""
    memo: dict = {}
    out: dict = {}
    for word, coeff in x.terms.items():
        for w, c in _decompose_word(x.ambient, word, memo).items():
            acc = out.get(w)
            add = coeff * c
            acc = add if acc is None else acc + add
            if scalar_is_zero(acc):
                out.pop(w, None)
            else:
                out[w] = acc
    return FreeElement(x.ambient, out, _validated=True)


def is_normalized_word(word) -> bool:
    """Alternating (guaranteed by merging) with every letter centered."""
    for letter in word:
        s = state(letter.payload)
        if not scalar_is_zero(s, _FLOAT_TOL if not is_exact(s) else 0.0):
            return False
    return True


def free_state(x: FreeElement):
    """The free-product state: 1 on the empty word, 0 on every nonempty
    alternating centered word, extended by the centering recursion."""
    memo: dict = {}
    acc = QC(0)
    for word, coeff in x.terms.items():
        if not word:
            acc = acc + coeff
            continue
        val = _state_of_word(x.ambient, word, memo)
        if val is not None:
            acc = acc + coeff * val
    return acc


def _state_of_word(ambient, word, memo):
    """Scalar part of a merged word under the free-product state."""
    if not word:
        return QC(1)
    if word in memo:
        return memo[word]
    cached = _persistent_cache_get(ambient, word)
    if cached is not None:
        memo[word] = cached
        return cached
    split_at = None
    for i, letter in enumerate(word):
        s = state(letter.payload)
        if not scalar_is_zero(s, _FLOAT_TOL if not is_exact(s) else 0.0):
            split_at = (i, s)
            break
    if split_at is None:
        val = QC(0)  # alternating centered, positive length
    else:
        i, s = split_at
        letter = word[i]
        val = QC(0)
        centered_payload = center(letter.payload)
        if _scalar_part(centered_payload) is None:
            branch = word[:i] + (Letter(letter.factor, centered_payload),) + word[i + 1 :]
            sub = _state_of_word(ambient, branch, memo)
            val = val + sub
        c2, reduced = _merge_word(ambient, word[:i] + word[i + 1 :])
        factor = s * c2
        if not scalar_is_zero(factor):
            val = val + factor * _state_of_word(ambient, reduced, memo)
    memo[word] = val
    _persistent_cache_put(ambient, word, val)
    return val


# ---------------------------------------------------------------------------
# optional content-addressed persistent cache (FREEDECAY_CACHE_DIR)
# ---------------------------------------------------------------------------

_cache_state = {"dir": None, "checked": False, "mem": {}}


def _cache_dir():
    if not _cache_state["checked"]:
        import os

        d = os.environ.get("FREEDECAY_CACHE_DIR")
        if d:
            os.makedirs(d, exist_ok=True)
        _cache_state["dir"] = d or None
        _cache_state["checked"] = True
    return _cache_state["dir"]


def reset_cache_probe():
    """Re-read FREEDECAY_CACHE_DIR on the next cache access (used by the CLI)."""
    _cache_state["checked"] = False
    _cache_state["mem"].clear()


def _cache_key(ambient, word):
    import hashlib

    payload = json.dumps(
        {
            "ambient": ambient.to_json(),
            "word": [
                {"factor": l.factor, "elem": l.payload.to_json()} for l in word
            ],
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def _persistent_cache_get(ambient, word):
    d = _cache_dir()
    if d is None or not word:
        return None
    key = _cache_key(ambient, word)
    if key in _cache_state["mem"]:
        return _cache_state["mem"][key]
    import os

    path = os.path.join(d, key[:2], key + ".json")
    if not os.path.exists(path):
        return None
    try:
        with open(path) as fh:
            val = _coeff_from_json(json.load(fh)["value"])
        _cache_state["mem"][key] = val
        return val
    except (OSError, ValueError, KeyError):
        return None


def _persistent_cache_put(ambient, word, value):
    d = _cache_dir()
    if d is None or not word:
        return
    import os
    import tempfile

    key = _cache_key(ambient, word)
    _cache_state["mem"][key] = value
    sub = os.path.join(d, key[:2])
    os.makedirs(sub, exist_ok=True)
    path = os.path.join(sub, key + ".json")
    if os.path.exists(path):
        return
    fd, tmp = tempfile.mkstemp(dir=sub, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump({"value": _coeff_to_json(value)}, fh)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# inner products
# ---------------------------------------------------------------------------


def _pair_normalized_words(w1, w2):
    """<w1, w2> for alternating centered words: factorwise slot pairing."""
    if len(w1) != len(w2):
        return QC(0)
    acc = QC(1)
    for l1, l2 in zip(w1, w2):
        if l1.factor != l2.factor:
            return QC(0)
        acc = acc * l2_inner(l1.payload, l2.payload)
        if scalar_is_zero(acc):
            return QC(0)
    return acc


def l2_inner_free(x: FreeElement, y: FreeElement):
    """<x, y> = free_state(y* x), via normal forms and slotwise pairing.

    Exact when both sides are rational; large float inputs go through a
    vectorized Gram computation per factor pattern.
    """
    if x.ambient != y.ambient:
        raise AlgebraError("free elements live in different ambients")
    nx, ny = normalize(x), normalize(y)
    exact = nx.is_exact() and ny.is_exact()
    bx = _bucket_by_pattern(nx)
    by = _bucket_by_pattern(ny)
    if exact and len(nx.terms) * len(ny.terms) <= 250_000:
        acc = QC(0)
        for key, terms_x in bx.items():
            terms_y = by.get(key)
            if not terms_y:
                continue
            for w1, c1 in terms_x:
                for w2, c2 in terms_y:
                    p = _pair_normalized_words(w1, w2)
                    if not scalar_is_zero(p):
                        acc = acc + c1 * conj(c2) * p
        return acc
    import numpy as np

    total = 0.0 + 0.0j
    for key, terms_x in bx.items():
        terms_y = by.get(key)
        if not terms_y:
            continue
        pattern = key
        if not pattern:
            total += sum(to_complex(c) for _, c in terms_x) * sum(
                to_complex(c) for _, c in terms_y
            ).conjugate()
            continue
        cx = np.array([to_complex(c) for _, c in terms_x])
        cy = np.array([to_complex(c) for _, c in terms_y])
        gram = np.ones((len(terms_x), len(terms_y)), dtype=complex)
        factors = x.ambient.factors
        for slot, j in enumerate(pattern):
            alg = factors[j]
            phi_x = np.array([alg.gns_embedding(w[slot].payload) for w, _ in terms_x])
            phi_y = np.array([alg.gns_embedding(w[slot].payload) for w, _ in terms_y])
            gram *= phi_x @ phi_y.conj().T
        total += cx @ gram @ cy.conj()
    return total


def _bucket_by_pattern(x: FreeElement):
    buckets: dict = {}
    for w, c in x.terms.items():
        buckets.setdefault(tuple(l.factor for l in w), []).append((w, c))
    return buckets


def l2_norm_free(x: FreeElement) -> float:
    import math

    v = l2_inner_free(x, x)
    if isinstance(v, QC):
        return math.sqrt(max(float(v.re), 0.0))
    return math.sqrt(max(v.real, 0.0))


# ---------------------------------------------------------------------------
# conjugation homomorphisms
# ---------------------------------------------------------------------------


def _require_unitary(p: AlgebraElement, name: str):
    diff = p.adjoint() * p - p.owner.identity()
    if p.is_exact():
        if any(v != QC(0) for b in diff.blocks for row in b for v in row):
            raise AvitzourConditionError(f"{name}*{name} - 1", "nonzero")
    elif op_norm(diff) > _FLOAT_TOL:
        raise AvitzourConditionError(f"{name}*{name} - 1", op_norm(diff))


def _require_state_zero(p: AlgebraElement, name: str):
    s = state(p)
    if not scalar_is_zero(s, 0.0 if is_exact(s) else _FLOAT_TOL):
        raise AvitzourConditionError(name, s)


def _require_centralizer(v: AlgebraElement, name: str = "v"):
    """v must satisfy rho(vy) = rho(yv) for all y; checked on matrix units."""
    owner = v.owner
    if owner.is_tracial():
        return
    for y in owner.basis():
        diff = state(v * y) - state(y * v)
        if not scalar_is_zero(diff, 0.0 if is_exact(diff) else _FLOAT_TOL):
            raise AvitzourConditionError(f"{name} in centralizer", diff)


def three_factor_ambient(a1: MatrixBlockAlgebra, a2: MatrixBlockAlgebra) -> FreeProductAmbient:
    """Ambient for A1 * A2 * A1 with the parity convention (factors 0 and 2
    are the same algebra)."""
    return FreeProductAmbient((a1, a2, a1))


def phi_conjugation(v: AlgebraElement, x: FreeElement) -> FreeElement:
    """The homomorphism A1*A2*A1 -> A1*A2 fixing the first two factors and
    sending a third-factor letter c to v* c v (v a unitary of A2)."""
    ambient = x.ambient
    if len(ambient.factors) != 3 or ambient.factors[0] != ambient.factors[2]:
        raise AlgebraError("phi_conjugation expects an A1*A2*A1 ambient")
    if v.owner != ambient.factors[1]:
        raise AlgebraError("conjugating unitary must live in the middle factor")
    _require_unitary(v, "v")
    target = FreeProductAmbient((ambient.factors[0], ambient.factors[1]))
    v_adj = v.adjoint()
    out: dict = {}
    for word, coeff in x.terms.items():
        letters: list[Letter] = []
        for letter in word:
            if letter.factor == 0:
                letters.append(Letter(0, letter.payload))
            elif letter.factor == 1:
                letters.append(Letter(1, letter.payload))
            else:
                letters.append(Letter(1, v_adj))
                letters.append(Letter(0, letter.payload))
                letters.append(Letter(1, v))
        c2, merged = _merge_word(target, letters)
        c = coeff * c2
        if scalar_is_zero(c):
            continue
        acc = out.get(merged)
        acc = c if acc is None else acc + c
        if scalar_is_zero(acc):
            out.pop(merged, None)
        else:
            out[merged] = acc
    return FreeElement(target, out, _validated=True)


def conjugation_word_shape(v: AlgebraElement, x: FreeElement):
    """Merged single-word image of a single alternating centered word under
    phi_conjugation; returns (word, length)."""
    if len(x.terms) != 1:
        raise AlgebraError("shape inspection expects a single word")
    img = phi_conjugation(v, x)
    if len(img.terms) != 1:
        raise AlgebraError("conjugation image did not stay a single word")
    (word,) = img.terms.keys()
    return word, len(word)


def check_avitzour_conditions(u: AlgebraElement, v: AlgebraElement, w: AlgebraElement):
    """Unitarity and moment conditions for the conjugation construction:
    rho(u) = tau(v) = tau(w) = tau(v*w) = 0 with v in the centralizer."""
    _require_unitary(u, "u")
    _require_unitary(v, "v")
    _require_unitary(w, "w")
    _require_state_zero(u, "rho(u)")
    _require_state_zero(v, "tau(v)")
    _require_state_zero(w, "tau(w)")
    _require_state_zero(v.adjoint() * w, "tau(v*w)")
    _require_centralizer(v)


def _conjugator_word(ambient2: FreeProductAmbient, n: int, u, v, w) -> FreeElement:
    """x_n = (w u w)(u v)^n as a free element of A1*A2."""
    letters = [Letter(1, w), Letter(0, u), Letter(1, w)]
    for _ in range(n):
        letters.extend((Letter(0, u), Letter(1, v)))
    return FreeElement.word(ambient2, letters)


def avitzour_phi(n: int, u: AlgebraElement, v: AlgebraElement, w: AlgebraElement,
                 x: FreeElement) -> FreeElement:
    """Conjugation map on A1*A2*A1 driven by x_n = (w u w)(u v)^n.

    Fixes the first two factors and sends a third-factor letter c to
    x_n* c x_n.  Requires the unitarity and moment conditions of
    :func:`check_avitzour_conditions`.
    """
    if n < 1:
        raise ValueError("n must be positive")
    ambient = x.ambient
    if len(ambient.factors) != 3 or ambient.factors[0] != ambient.factors[2]:
        raise AlgebraError("avitzour_phi expects an A1*A2*A1 ambient")
    if u.owner != ambient.factors[0]:
        raise AlgebraError("u must live in the first factor")
    if v.owner != ambient.factors[1] or w.owner != ambient.factors[1]:
        raise AlgebraError("v, w must live in the second factor")
    check_avitzour_conditions(u, v, w)
    target = FreeProductAmbient((ambient.factors[0], ambient.factors[1]))
    xn = _conjugator_word(target, n, u, v, w)
    xn_adj = xn.adjoint()
    out = FreeElement(target)
    for word, coeff in x.terms.items():
        piece = FreeElement.scalar(target, coeff)
        for letter in word:
            if letter.factor == 0:
                nxt = FreeElement.letter(target, 0, letter.payload)
            elif letter.factor == 1:
                nxt = FreeElement.letter(target, 1, letter.payload)
            else:
                nxt = xn_adj * FreeElement.letter(target, 0, letter.payload) * xn
            piece = piece * nxt
        out = out + piece
    return out


# ---------------------------------------------------------------------------
# shape checks for the conjugated words
# ---------------------------------------------------------------------------


@dataclass
class ShapeReport:
    mode: str
    n: int
    ell: int
    ok: bool
    words_checked: int
    offending_word: tuple | None
    reason: str | None

    def to_json(self):
        return {
            "mode": self.mode,
            "n": self.n,
            "ell": self.ell,
            "ok": self.ok,
            "words_checked": self.words_checked,
            "reason": self.reason,
            "offending_word": None
            if self.offending_word is None
            else [
                {"factor": l.factor, "elem": l.payload.to_json()}
                for l in self.offending_word
            ],
        }


def avitzour_shape_check(n: int, u, v, w, a: FreeElement, mode: str) -> ShapeReport:
    """Expand the guarded products around an alternating centered word a and
    verify the surviving normal-form words.

    mode "i":   (w u w)(u v)^n a            -- words start at w
    mode "ii":  a (v* u*)^n (w* u* w*)      -- words end at w*
    mode "iii": two-sided product           -- both
    Requires n > ell/2 > 0.
    """
    if mode not in ("i", "ii", "iii"):
        raise ValueError(f"unknown mode {mode!r}")
    ambient = a.ambient
    if len(ambient.factors) != 2:
        raise AlgebraError("shape check expects an A1*A2 ambient")
    check_avitzour_conditions(u, v, w)
    ell = a.max_word_length()
    if not (n > ell / 2 and ell > 0):
        raise ValueError(f"need n > ell/2 > 0, got n={n}, ell={ell}")
    for word in a.terms:
        if not is_normalized_word(word):
            raise AlgebraError("input must combine alternating centered words")
    xn = _conjugator_word(ambient, n, u, v, w)
    if mode == "i":
        prod = xn * a
    elif mode == "ii":
        prod = a * xn.adjoint()
    else:
        prod = xn * a * xn.adjoint()
    nf = normalize(prod)
    w_adj = w.adjoint()
    checked = 0
    for word, coeff in nf.terms.items():
        checked += 1
        if len(word) == 0:
            return ShapeReport(mode, n, ell, False, checked, word, "scalar part survived")
        if not is_normalized_word(word):
            return ShapeReport(mode, n, ell, False, checked, word, "word not centered")
        if mode in ("i", "iii"):
            first = word[0]
            if first.factor != 1:
                return ShapeReport(mode, n, ell, False, checked, word,
                                   "leading letter not in the second factor")
            overlap = l2_inner(first.payload, w)
            if scalar_is_zero(overlap, _FLOAT_TOL):
                return ShapeReport(mode, n, ell, False, checked, word,
                                   "leading letter orthogonal to w")
        if mode in ("ii", "iii"):
            last = word[-1]
            if last.factor != 1:
                return ShapeReport(mode, n, ell, False, checked, word,
                                   "trailing letter not in the second factor")
            overlap = l2_inner(last.payload, w_adj)
            if scalar_is_zero(overlap, _FLOAT_TOL):
                return ShapeReport(mode, n, ell, False, checked, word,
                                   "trailing letter orthogonal to w*")
    return ShapeReport(mode, n, ell, True, checked, None, None)
