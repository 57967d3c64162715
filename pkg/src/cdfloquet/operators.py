"""Exact algebra of Pauli-string linear combinations.

Conventions used throughout the package:

* A Pauli string on ``L`` sites is stored as a pair of bitmasks ``(x, z)``.
  Site ``i`` (1-based, as in the model definitions) lives on bit ``L - i``,
  so site 1 is the most significant bit and the letters string reads
  left-to-right.  The single-site operator encoded by bits ``(x, z)`` is
  ``i^(x*z) X^x Z^z``, i.e. ``(0,0)=I``, ``(1,0)=X``, ``(0,1)=Z``,
  ``(1,1)=Y``.
* Basis states are indexed by the integer whose bit ``L - i`` holds site
  ``i``, with bit value 0 meaning spin up (``sigma^z = +1``).
* The Hilbert-Schmidt inner product is normalised, ``<A, B> =
  Tr[A^dag B] / 2^L``, under which distinct Pauli strings are orthonormal.

Dense matrices are plain complex ``numpy`` arrays; they are only used on
small systems (guarded at ``L <= DENSE_GUARD``) as an oracle path, while
everything else stays matrix-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

DENSE_GUARD = 14
DEFAULT_PRUNE_TOL = 1e-14

_LETTER_TO_XZ = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_XZ_TO_LETTER = {v: k for k, v in _LETTER_TO_XZ.items()}
_PHASES = np.array([1.0, 1.0j, -1.0, -1.0j])


class SiteCountMismatchError(ValueError):
    """Operands act on different numbers of sites."""


class CapacityError(ValueError):
    """Requested dense-matrix work beyond the small-system guard."""


def ensure_dense_ok(n_sites: int) -> None:
    if n_sites > DENSE_GUARD:
        raise CapacityError(
            f"dense path limited to L <= {DENSE_GUARD}, got L = {n_sites}"
        )


def _popcount(v):
    return np.bitwise_count(v.astype(np.uint64)).astype(np.int64)


@dataclass(frozen=True)
class PauliString:
    """A single Pauli string, e.g. ``XIZY`` on four sites."""

    x: int
    z: int
    n_sites: int

    @classmethod
    def from_letters(cls, letters: str) -> "PauliString":
        x = z = 0
        for i, letter in enumerate(letters):
            try:
                bx, bz = _LETTER_TO_XZ[letter]
            except KeyError:
                raise ValueError(f"invalid Pauli letter {letter!r}") from None
            bit = len(letters) - 1 - i
            x |= bx << bit
            z |= bz << bit
        return cls(x, z, len(letters))

    @property
    def letters(self) -> str:
        out = []
        for i in range(self.n_sites):
            bit = self.n_sites - 1 - i
            out.append(_XZ_TO_LETTER[((self.x >> bit) & 1, (self.z >> bit) & 1)])
        return "".join(out)

    @property
    def weight(self) -> int:
        """Number of non-identity sites (operator support size)."""
        return (self.x | self.z).bit_count()

    def __repr__(self) -> str:
        return f"PauliString({self.letters!r})"


def _product_phase_exponent(xa: int, za: int, xb: int, zb: int) -> int:
    # i-exponent of (a * b) relative to the canonical string of the product,
    # for the encoding P(x, z) = i^(x.z) X^x Z^z.
    xc, zc = xa ^ xb, za ^ zb
    k = (xa & za).bit_count() + (xb & zb).bit_count() - (xc & zc).bit_count()
    k += 2 * (za & xb).bit_count()
    return k % 4


def multiply(a: PauliString, b: PauliString) -> tuple[complex, PauliString]:
    """Sitewise product ``a · b = phase · s`` with ``phase`` in {1, i, -1, -i}."""
    if a.n_sites != b.n_sites:
        raise SiteCountMismatchError(
            f"cannot multiply strings on {a.n_sites} and {b.n_sites} sites"
        )
    k = _product_phase_exponent(a.x, a.z, b.x, b.z)
    return complex(_PHASES[k]), PauliString(a.x ^ b.x, a.z ^ b.z, a.n_sites)


def commutes(a: PauliString, b: PauliString) -> bool:
    return ((a.x & b.z).bit_count() + (a.z & b.x).bit_count()) % 2 == 0


class PauliSum:
    """Linear combination of Pauli strings with complex coefficients.

    Instances are immutable after construction and safe to share between
    threads.  Term storage is a dict keyed by ``(x, z)`` masks; the numpy
    views used by the vectorised kernels are built lazily and cached.
    """

    __slots__ = ("n_sites", "_terms", "_arrays")

    def __init__(self, n_sites: int, terms: Mapping[tuple[int, int], complex] | None = None):
        self.n_sites = int(n_sites)
        self._terms: dict[tuple[int, int], complex] = {}
        if terms:
            for key, coeff in terms.items():
                c = complex(coeff)
                if c != 0.0:
                    self._terms[key] = self._terms.get(key, 0.0) + c
        self._arrays = None

    # ---------------------------------------------------------------- build
    @classmethod
    def zero(cls, n_sites: int) -> "PauliSum":
        return cls(n_sites)

    @classmethod
    def from_label_terms(cls, terms: Mapping[str, complex]) -> "PauliSum":
        """Build from a mapping of letter strings, e.g. ``{"ZZ": 1.0, "XI": 0.5}``."""
        n_sites = None
        out: dict[tuple[int, int], complex] = {}
        for letters, coeff in terms.items():
            s = PauliString.from_letters(letters)
            if n_sites is None:
                n_sites = s.n_sites
            elif s.n_sites != n_sites:
                raise SiteCountMismatchError("mixed string lengths")
            key = (s.x, s.z)
            out[key] = out.get(key, 0.0) + complex(coeff)
        if n_sites is None:
            raise ValueError("empty term mapping; use PauliSum.zero(n_sites)")
        return cls(n_sites, out)

    @classmethod
    def single_site(cls, n_sites: int, site: int, letter: str, coeff: complex = 1.0) -> "PauliSum":
        """One-letter string at 1-based ``site``."""
        if not 1 <= site <= n_sites:
            raise ValueError(f"site {site} outside 1..{n_sites}")
        bx, bz = _LETTER_TO_XZ[letter]
        bit = n_sites - site
        return cls(n_sites, {(bx << bit, bz << bit): coeff})

    @classmethod
    def two_site(
        cls, n_sites: int, site_a: int, letter_a: str, site_b: int, letter_b: str, coeff: complex = 1.0
    ) -> "PauliSum":
        if site_a == site_b:
            raise ValueError("sites must differ")
        for site in (site_a, site_b):
            if not 1 <= site <= n_sites:
                raise ValueError(f"site {site} outside 1..{n_sites}")
        xa, za = _LETTER_TO_XZ[letter_a]
        xb, zb = _LETTER_TO_XZ[letter_b]
        ba, bb = n_sites - site_a, n_sites - site_b
        return cls(n_sites, {((xa << ba) | (xb << bb), (za << ba) | (zb << bb)): coeff})

    # ------------------------------------------------------------ inspection
    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[tuple[PauliString, complex]]:
        for (x, z), c in self._terms.items():
            yield PauliString(x, z, self.n_sites), c

    @property
    def terms(self) -> Mapping[tuple[int, int], complex]:
        return dict(self._terms)

    def coefficient(self, letters: str) -> complex:
        s = PauliString.from_letters(letters)
        if s.n_sites != self.n_sites:
            raise SiteCountMismatchError("string length differs from n_sites")
        return self._terms.get((s.x, s.z), 0.0)

    def sorted_terms(self) -> list[tuple[PauliString, complex]]:
        """Terms in canonical order: lexicographic over the letters string."""
        items = [(PauliString(x, z, self.n_sites), c) for (x, z), c in self._terms.items()]
        items.sort(key=lambda item: item[0].letters)
        return items

    def dump_lines(self) -> list[str]:
        """Debug dump, one term per line: ``<coeff_re> <coeff_im> <letters>``."""
        return [
            f"{c.real:.17g} {c.imag:.17g} {s.letters}" for s, c in self.sorted_terms()
        ]

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        scale = max((abs(c) for c in self._terms.values()), default=0.0)
        return all(abs(c.imag) <= tol * max(scale, 1.0) for c in self._terms.values())

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def norm(self) -> float:
        """Hilbert-Schmidt norm, sqrt(<A, A>)."""
        return float(np.sqrt(sum(abs(c) ** 2 for c in self._terms.values())))

    def _term_arrays(self):
        if self._arrays is None:
            n = len(self._terms)
            xs = np.empty(n, dtype=np.int64)
            zs = np.empty(n, dtype=np.int64)
            cs = np.empty(n, dtype=np.complex128)
            for i, ((x, z), c) in enumerate(self._terms.items()):
                xs[i], zs[i], cs[i] = x, z, c
            self._arrays = (xs, zs, cs)
        return self._arrays

    # -------------------------------------------------------------- algebra
    def _check_compatible(self, other: "PauliSum") -> None:
        if self.n_sites != other.n_sites:
            raise SiteCountMismatchError(
                f"operands act on {self.n_sites} and {other.n_sites} sites"
            )

    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._check_compatible(other)
        out = dict(self._terms)
        for key, c in other._terms.items():
            out[key] = out.get(key, 0.0) + c
        return PauliSum(self.n_sites, out)

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-1.0) * other

    def __mul__(self, scalar: complex) -> "PauliSum":
        s = complex(scalar)
        return PauliSum(self.n_sites, {k: c * s for k, c in self._terms.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "PauliSum":
        return self * -1.0

    def prune(self, tol: float = DEFAULT_PRUNE_TOL) -> tuple["PauliSum", float]:
        """Drop terms with ``|c| < tol * max|c|``; returns (sum, dropped HS weight)."""
        if tol < 0:
            raise ValueError("prune tolerance must be >= 0")
        cut = tol * self.max_abs_coeff()
        kept: dict[tuple[int, int], complex] = {}
        dropped = 0.0
        for key, c in self._terms.items():
            if abs(c) < cut:
                dropped += abs(c) ** 2
            else:
                kept[key] = c
        return PauliSum(self.n_sites, kept), float(np.sqrt(dropped))


def hs_inner(a: PauliSum, b: PauliSum) -> complex:
    """Normalised Hilbert-Schmidt product Tr[A^dag B] / 2^L, matrix-free.

    Pauli strings are orthonormal under this product, so only coefficient
    pairs on matching strings contribute.
    """
    a._check_compatible(b)
    small, big, conj_small = (a, b, True) if len(a) < len(b) else (b, a, False)
    acc = 0.0 + 0.0j
    big_terms = big._terms
    for key, c in small._terms.items():
        other = big_terms.get(key)
        if other is not None:
            acc += (np.conj(c) * other) if conj_small else (np.conj(other) * c)
    return complex(acc)


def commutator(
    a: PauliSum, b: PauliSum, prune_tol: float = DEFAULT_PRUNE_TOL
) -> PauliSum:
    """[A, B] = AB - BA with exactly-cancelled terms removed.

    Only anticommuting string pairs contribute (each with a doubled
    coefficient); accumulation is vectorised over term pairs and reduced in
    sorted-key order, so the result is deterministic.
    """
    a._check_compatible(b)
    if not len(a) or not len(b):
        return PauliSum.zero(a.n_sites)
    xa, za, ca = a._term_arrays()
    xb, zb, cb = b._term_arrays()

    keys_parts: list[np.ndarray] = []
    coef_parts: list[np.ndarray] = []
    # chunk the pairwise tables to bound peak memory on deep towers
    chunk = max(1, int(4_000_000 // max(len(b), 1)))
    for lo in range(0, len(a), chunk):
        hi = min(lo + chunk, len(a))
        XA, ZA, CA = xa[lo:hi, None], za[lo:hi, None], ca[lo:hi, None]
        anti = ((_popcount(XA & zb[None, :]) + _popcount(ZA & xb[None, :])) & 1) == 1
        if not anti.any():
            continue
        ia, ib = np.nonzero(anti)
        sxa, sza = XA[ia, 0], ZA[ia, 0]
        sxb, szb = xb[ib], zb[ib]
        xc, zc = sxa ^ sxb, sza ^ szb
        k = (
            _popcount(sxa & sza)
            + _popcount(sxb & szb)
            - _popcount(xc & zc)
            + 2 * _popcount(sza & sxb)
        ) % 4
        coeff = 2.0 * CA[ia, 0] * cb[ib] * _PHASES[k]
        keys_parts.append((xc.astype(np.uint64) << np.uint64(a.n_sites)) | zc.astype(np.uint64))
        coef_parts.append(coeff)

    if not keys_parts:
        return PauliSum.zero(a.n_sites)
    keys = np.concatenate(keys_parts)
    coeffs = np.concatenate(coef_parts)
    uniq, inverse = np.unique(keys, return_inverse=True)
    acc = np.zeros(len(uniq), dtype=np.complex128)
    np.add.at(acc, inverse, coeffs)

    # cancelled terms leave roundoff at the pair-product scale; cut there,
    # not at the (possibly all-roundoff) scale of the result itself
    cancel_cut = prune_tol * 2.0 * a.max_abs_coeff() * b.max_abs_coeff()
    mask = np.abs(acc) > cancel_cut
    site_mask = (1 << a.n_sites) - 1
    terms = {
        (int(key >> np.uint64(a.n_sites)), int(key) & site_mask): c
        for key, c in zip(uniq[mask], acc[mask])
    }
    out = PauliSum(a.n_sites, terms)
    if prune_tol > 0:
        out, _ = out.prune(prune_tol)
    return out


def nested_tower(
    h: PauliSum, dh: PauliSum, depth: int, prune_tol: float = DEFAULT_PRUNE_TOL
) -> list[PauliSum]:
    """Nested commutators C_1 = [H, dH], C_{j+1} = [H, C_j], j = 1..depth."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    h._check_compatible(dh)
    tower = []
    current = dh
    for _ in range(depth):
        current = commutator(h, current, prune_tol=prune_tol)
        tower.append(current)
    return tower


def tower_term_counts(tower: Sequence[PauliSum]) -> list[int]:
    """Term counts per tower level, for growth diagnostics."""
    return [len(c) for c in tower]


# ------------------------------------------------------------------- dense
@dataclass
class SpectralData:
    """Eigendecomposition of a Hermitian operator, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # orthonormal columns

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)


def to_matrix(a: PauliSum) -> np.ndarray:
    """Dense 2^L x 2^L rendering (guarded; small systems only)."""
    ensure_dense_ok(a.n_sites)
    dim = 1 << a.n_sites
    mat = np.zeros((dim, dim), dtype=np.complex128)
    basis = np.arange(dim, dtype=np.int64)
    for (x, z), c in a._terms.items():
        phase = 1.0j ** ((x & z).bit_count() % 4)
        signs = 1.0 - 2.0 * (_popcount(basis & z) & 1)
        mat[basis ^ x, basis] += c * phase * signs
    return mat


def diagonalize(mat: np.ndarray) -> SpectralData:
    """Hermitian eigensolve, eigenvalues ascending."""
    dim = mat.shape[0]
    if dim > (1 << DENSE_GUARD):
        raise CapacityError(f"matrix dimension {dim} beyond dense guard")
    eigenvalues, eigenvectors = np.linalg.eigh(mat)
    return SpectralData(eigenvalues, eigenvectors)


def apply(a: PauliSum, psi: np.ndarray) -> np.ndarray:
    """Matrix-free matvec; equals ``to_matrix(a) @ psi`` on small systems."""
    dim = 1 << a.n_sites
    if psi.shape != (dim,):
        raise ValueError(f"state dimension {psi.shape} incompatible with 2^{a.n_sites}")
    out = np.zeros(dim, dtype=np.complex128)
    basis = np.arange(dim, dtype=np.int64)
    for (x, z), c in a._terms.items():
        phase = c * (1.0j ** ((x & z).bit_count() % 4))
        src = basis ^ x
        signs = 1.0 - 2.0 * (_popcount(basis & z) & 1)
        # out[j] = sum_b M[j, b] psi[b] with b = j ^ x and the sign taken at b
        out += phase * (signs * psi)[src]
    return out


class PauliKernel:
    """Compiled matvec over a fixed string set with swappable coefficients.

    Strings are grouped by their X-mask; per group a single weight vector
    ``w_g(b) = sum_s c_s i^(y_s) (-1)^(z_s . b)`` is contracted once per
    coefficient update, after which each matvec is one gather, one multiply
    and one add per group.  This is the hot path of the time evolution.
    """

    def __init__(self, strings: Sequence[tuple[int, int]], n_sites: int):
        self.n_sites = n_sites
        self.dim = 1 << n_sites
        self.strings = list(strings)
        self.index = {key: i for i, key in enumerate(self.strings)}
        basis = np.arange(self.dim, dtype=np.int64)

        groups: dict[int, list[int]] = {}
        for i, (x, _z) in enumerate(self.strings):
            groups.setdefault(x, []).append(i)
        self._groups = []
        for x, members in sorted(groups.items()):
            signs = np.empty((len(members), self.dim), dtype=np.float32)
            prefactor = np.empty(len(members), dtype=np.complex128)
            for row, i in enumerate(members):
                _x, z = self.strings[i]
                signs[row] = 1.0 - 2.0 * (_popcount(basis & z) & 1)
                prefactor[row] = 1.0j ** ((_x & z).bit_count() % 4)
            self._groups.append(
                (x, np.array(members, dtype=np.int64), signs, prefactor, basis ^ x)
            )
        self._weights: list[np.ndarray] | None = None

    def set_coefficients(self, coeffs: np.ndarray) -> None:
        """Load per-string coefficients (ordered as ``self.strings``)."""
        if coeffs.shape != (len(self.strings),):
            raise ValueError("coefficient vector length mismatch")
        weights = []
        for _x, members, signs, prefactor, _src in self._groups:
            cf = coeffs[members] * prefactor
            w = cf.real @ signs
            if np.any(cf.imag):
                w = w + 1j * (cf.imag @ signs)
            weights.append(w)
        self._weights = weights

    def coefficients_from(self, op: PauliSum) -> np.ndarray:
        """Align a PauliSum's coefficients onto this kernel's string order."""
        coeffs = np.zeros(len(self.strings), dtype=np.complex128)
        for key, c in op._terms.items():
            idx = self.index.get(key)
            if idx is None:
                raise KeyError(f"string {key} not in kernel set")
            coeffs[idx] = c
        return coeffs

    def apply(self, psi: np.ndarray) -> np.ndarray:
        if self._weights is None:
            raise RuntimeError("set_coefficients must be called before apply")
        out = np.zeros(self.dim, dtype=np.complex128)
        for (_x, _members, _signs, _pref, src), w in zip(self._groups, self._weights):
            out += (w * psi)[src]
        return out

    def accumulate(self, psi: np.ndarray, out: np.ndarray, scale: complex = 1.0) -> None:
        """out += scale * K psi, reusing the caller's accumulator."""
        if self._weights is None:
            raise RuntimeError("set_coefficients must be called before apply")
        for (_x, _members, _signs, _pref, src), w in zip(self._groups, self._weights):
            out += scale * (w * psi)[src]


def union_strings(ops: Iterable[PauliSum]) -> list[tuple[int, int]]:
    """Sorted union of the string sets of several operators."""
    keys: set[tuple[int, int]] = set()
    n_sites = None
    for op in ops:
        if n_sites is None:
            n_sites = op.n_sites
        elif op.n_sites != n_sites:
            raise SiteCountMismatchError("mixed n_sites in union")
        keys.update(op._terms.keys())
    return sorted(keys)
