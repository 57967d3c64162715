"""Variational adiabatic gauge potentials from nested-commutator series.

The approximate gauge potential at expansion order ``ell`` is

    A = i * sum_k alpha_k C_{2k-1},      C_j = [H, [H, ... [H, dH]]] (j nested),

with the coefficients fixed by minimizing the action
``S = || dH - i [H, A] ||_HS^2``.  Expanding the commutator turns this into a
positive-semidefinite linear (Gram) system over the even tower members:

    sum_k M_{lk} alpha_k = -b_l,  M_{lk} = <C_{2l}, C_{2k}>,  b_l = <C_{2l}, dH>.

Everything here is matrix-free except the explicitly dense oracle paths.
Response-function moments follow the same normalisation as ``hs_inner``
(trace over 2^L), so the matrix-free and spectral routes agree directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .models import HamiltonianFamily
from .operators import (
    DEFAULT_PRUNE_TOL,
    PauliSum,
    commutator,
    diagonalize,
    ensure_dense_ok,
    hs_inner,
    nested_tower,
    to_matrix,
)

GRAM_CONDITION_LIMIT = 1e12
DEGENERACY_FRACTION = 1e-10  # of the spectral range, for the exact-AGP oracle


class InternalConsistencyError(RuntimeError):
    """An internally assembled operator violated a structural guarantee."""


@dataclass
class VariationalCoefficients:
    """Solved expansion coefficients alpha_1..alpha_ell at a given lambda."""

    order: int
    alpha: np.ndarray
    lam: float
    normalized_action: float
    degenerate: bool = False

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.alpha.shape != (self.order,):
            raise ValueError("coefficient count must equal the expansion order")


@dataclass
class ResponseMoments:
    """Moments Gamma^(k) of the response function of dH, k = 0..kmax.

    ``gamma[0]`` requires the spectral oracle and is NaN when the system is
    too large for dense work; the matrix-free entries start at k = 1.
    """

    gamma: np.ndarray


@dataclass(frozen=True)
class GappedSpec:
    delta: float
    order: int

    def validate(self) -> None:
        if self.delta <= 0:
            raise ValueError("gap must be positive")
        if self.order < 1:
            raise ValueError("order must be >= 1")


def towers_for(
    family: HamiltonianFamily,
    lam: float,
    depth: int,
    prune_tol: float = DEFAULT_PRUNE_TOL,
) -> list[PauliSum]:
    return nested_tower(family.h(lam), family.dh(lam), depth, prune_tol=prune_tol)


def gram_system(
    towers: list[PauliSum], dh: PauliSum, ell: int
) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrix and right-hand side over the even tower members."""
    if len(towers) < 2 * ell:
        raise ValueError(f"need towers to depth {2 * ell}, got {len(towers)}")
    m = np.empty((ell, ell))
    b = np.empty(ell)
    for l in range(1, ell + 1):
        b[l - 1] = hs_inner(towers[2 * l - 1], dh).real
        for k in range(l, ell + 1):
            v = hs_inner(towers[2 * l - 1], towers[2 * k - 1]).real
            m[l - 1, k - 1] = v
            m[k - 1, l - 1] = v
    return m, b


def _solve_gram(m: np.ndarray, b: np.ndarray, dh_norm_sq: float, lam: float) -> VariationalCoefficients:
    ell = len(b)
    diag = np.diag(m).copy()
    if float(np.trace(m)) <= 0.0 or np.any(diag <= 0.0):
        # commuting H and dH: every tower member vanishes
        return VariationalCoefficients(ell, np.zeros(ell), lam, 1.0, degenerate=True)
    # moments span many decades (Gamma^(2)..Gamma^(2 ell)); equilibrate so the
    # condition estimate and the ridge are scale-free
    d = 1.0 / np.sqrt(diag)
    ms = m * d[:, None] * d[None, :]
    bs = b * d
    evals = np.linalg.eigvalsh(ms)
    degenerate = evals[0] <= evals[-1] / GRAM_CONDITION_LIMIT
    if degenerate:
        # proportional towers make the Gram matrix rank-deficient by
        # construction (e.g. effective two-level families); ridge it
        ms = ms + (1e-12 * float(np.trace(ms)) / ell) * np.eye(ell)
    alpha = np.linalg.solve(ms, -bs) * d
    action = 1.0 + float(b @ alpha) / dh_norm_sq
    action = min(max(action, 0.0), 1.0)
    return VariationalCoefficients(ell, alpha, lam, action, degenerate=degenerate)


def solve_alpha(
    family: HamiltonianFamily,
    lam: float,
    ell: int,
    towers: list[PauliSum] | None = None,
    prune_tol: float = DEFAULT_PRUNE_TOL,
) -> VariationalCoefficients:
    """Minimize the truncated action at ``lam``; see module docstring."""
    if ell < 1:
        raise ValueError("expansion order must be >= 1")
    dh = family.dh(lam)
    if towers is None:
        towers = towers_for(family, lam, 2 * ell, prune_tol=prune_tol)
    m, b = gram_system(towers, dh, ell)
    dh_norm_sq = hs_inner(dh, dh).real
    if dh_norm_sq == 0.0:
        raise ValueError("dH vanishes; variational problem undefined")
    return _solve_gram(m, b, dh_norm_sq, lam)


def build_agp(
    family: HamiltonianFamily,
    lam: float,
    coeffs: VariationalCoefficients,
    towers: list[PauliSum] | None = None,
    prune_tol: float = DEFAULT_PRUNE_TOL,
) -> PauliSum:
    """Assemble A = i sum_k alpha_k C_{2k-1}; the result must be Hermitian."""
    if towers is None:
        towers = towers_for(family, lam, 2 * coeffs.order - 1, prune_tol=prune_tol)
    out = PauliSum.zero(family.n_sites)
    for k in range(1, coeffs.order + 1):
        a_k = coeffs.alpha[k - 1]
        if a_k != 0.0:
            out = out + (1j * a_k) * towers[2 * k - 2]
    if not out.is_hermitian(tol=1e-10):
        raise InternalConsistencyError("assembled gauge potential is not Hermitian")
    # odd towers of Hermitian inputs carry purely imaginary coefficients, so
    # i * (...) is real up to roundoff; keep it exactly real
    return PauliSum(out.n_sites, {k: complex(c.real, 0.0) for k, c in out.terms.items()})


def exact_agp(family: HamiltonianFamily, lam: float) -> np.ndarray:
    """Dense oracle: off-diagonals -i <m|dH|n> / (e_m - e_n), diagonal zero.

    Pairs closer than ``DEGENERACY_FRACTION`` of the spectral range are
    zeroed; the exact potential is ill-defined on degenerate pairs.
    """
    ensure_dense_ok(family.n_sites)
    spectral = diagonalize(to_matrix(family.h(lam)))
    v = spectral.eigenvectors
    dh_eig = v.conj().T @ to_matrix(family.dh(lam)) @ v
    e = spectral.eigenvalues
    omega = e[:, None] - e[None, :]
    span = float(e[-1] - e[0])
    guard = DEGENERACY_FRACTION * max(span, 1.0)
    safe = np.abs(omega) >= guard
    a_eig = np.zeros_like(dh_eig)
    a_eig[safe] = -1j * dh_eig[safe] / omega[safe]
    np.fill_diagonal(a_eig, 0.0)
    return v @ a_eig @ v.conj().T


def response_moments_commutator(
    family: HamiltonianFamily,
    lam: float,
    kmax: int,
    towers: list[PauliSum] | None = None,
) -> ResponseMoments:
    """Moments Gamma^(k) computed matrix-free via balanced tower splits.

    Gamma^(k) = <C_a, C_b> for any split a + b = 2k; the balanced split
    a = b = k keeps the tower depth (and term count) minimal.  Gamma^(0)
    needs the off-diagonal projection and hence the spectral oracle; it is
    NaN beyond the dense guard.
    """
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    if towers is None:
        towers = towers_for(family, lam, kmax)
    gamma = np.empty(kmax + 1)
    gamma[0] = np.nan
    for k in range(1, kmax + 1):
        gamma[k] = hs_inner(towers[k - 1], towers[k - 1]).real
    try:
        gamma[0] = response_moments_spectral(family, lam, 0).gamma[0]
    except Exception:
        pass
    return ResponseMoments(gamma)


def moment_split(
    towers: list[PauliSum], a: int, b: int
) -> float:
    """<C_a, C_b> for one split a + b = 2k of a moment; all splits agree."""
    return hs_inner(towers[a - 1], towers[b - 1]).real


def response_moments_spectral(
    family: HamiltonianFamily, lam: float, kmax: int
) -> ResponseMoments:
    """Dense oracle for the moments, same 2^-L normalisation as hs_inner."""
    ensure_dense_ok(family.n_sites)
    spectral = diagonalize(to_matrix(family.h(lam)))
    v = spectral.eigenvectors
    dh_eig = v.conj().T @ to_matrix(family.dh(lam)) @ v
    e = spectral.eigenvalues
    omega = e[:, None] - e[None, :]
    weight = np.abs(dh_eig) ** 2
    np.fill_diagonal(weight, 0.0)  # off-diagonal response only
    dim = len(e)
    gamma = np.array(
        [np.sum(weight * omega ** (2 * k)) / dim for k in range(kmax + 1)]
    )
    return ResponseMoments(gamma)


def gapped_alpha(spec: GappedSpec) -> VariationalCoefficients:
    """Closed-form coefficients alpha_k = (-1)^k / (k! Delta^{2k}).

    The resulting prefactor converges to -(1 - exp(-w^2/Delta^2)) / w,
    suppressing transitions above the gap while leaving the low-frequency
    sector untouched.
    """
    spec.validate()
    alpha = np.array(
        [(-1.0) ** k / (math.factorial(k) * spec.delta ** (2 * k)) for k in range(1, spec.order + 1)]
    )
    return VariationalCoefficients(spec.order, alpha, math.nan, math.nan)


def prefactor_curve(coeffs, omega_grid) -> np.ndarray:
    """Power-series prefactor a(w) = sum_k alpha_k w^(2k-1) on a grid.

    The solved coefficients make a(w) approximate -1/w over the relevant
    excitation window (the sign follows the exact gauge potential).
    """
    alpha = np.asarray(getattr(coeffs, "alpha", coeffs), dtype=float)
    w = np.asarray(omega_grid, dtype=float)
    w2 = w * w
    # Horner in w^2, times one leading w
    acc = np.zeros_like(w)
    for a_k in alpha[::-1]:
        acc = acc * w2 + a_k
    return acc * w


@dataclass
class LocalBasisResult:
    """Least-squares gauge potential over a translated local-string basis."""

    coefficients: dict[str, float]
    operator: PauliSum
    dense: np.ndarray
    normalized_action: float


def _window_strings(n_sites: int, support: int, periodic: bool) -> list[str]:
    letters = "IXYZ"
    seen: set[str] = set()
    out: list[str] = []
    starts = range(n_sites) if periodic else range(n_sites - support + 1)
    for start in starts:
        for code in range(4**support):
            word = []
            c = code
            for _ in range(support):
                word.append(letters[c & 3])
                c >>= 2
            if all(ch == "I" for ch in word):
                continue
            full = ["I"] * n_sites
            for offset, ch in enumerate(word):
                full[(start + offset) % n_sites] = ch
            label = "".join(full)
            if label not in seen:
                seen.add(label)
                out.append(label)
    out.sort()
    return out


def local_basis_agp(
    family: HamiltonianFamily, lam: float, support: int
) -> LocalBasisResult:
    """Minimize the action over all translated Pauli strings of support <= d.

    This is the brute-force local variational ansatz; it bounds what any
    range-limited expansion can achieve and serves as the comparison line
    for the nested-commutator results.
    """
    if support < 1 or support > 4:
        raise ValueError("support must be between 1 and 4")
    ensure_dense_ok(family.n_sites)
    h = family.h(lam)
    dh = family.dh(lam)
    dh_norm_sq = hs_inner(dh, dh).real
    if dh_norm_sq == 0.0:
        raise ValueError("dH vanishes; variational problem undefined")
    periodic = bool(family.params.get("periodic", False))
    labels = _window_strings(family.n_sites, support, periodic)

    # W_b = -i [H, P_b]; G = dH + sum_b x_b W_b, minimized in least squares
    columns: list[dict[tuple[int, int], float]] = []
    for label in labels:
        p = PauliSum.from_label_terms({label: 1.0})
        w = (-1j) * commutator(h, p, prune_tol=0.0)
        columns.append({key: c.real for key, c in w.terms.items()})
    union = sorted({key for col in columns for key in col})
    key_index = {key: i for i, key in enumerate(union)}

    rows, cols, vals = [], [], []
    for b, col in enumerate(columns):
        for key, val in col.items():
            rows.append(b)
            cols.append(key_index[key])
            vals.append(val)
    w_mat = scipy.sparse.csr_matrix(
        (vals, (rows, cols)), shape=(len(labels), len(union))
    )
    dh_vec = np.zeros(len(union))
    for key, c in dh.terms.items():
        idx = key_index.get(key)
        if idx is not None:
            dh_vec[idx] = c.real
    gram = (w_mat @ w_mat.T).toarray()
    rhs = w_mat @ dh_vec
    x, *_ = np.linalg.lstsq(gram, -rhs, rcond=1e-12)

    residual_sq = dh_norm_sq + 2.0 * float(rhs @ x) + float(x @ gram @ x)
    action = min(max(residual_sq / dh_norm_sq, 0.0), 1.0)

    coeffs = {label: float(v) for label, v in zip(labels, x) if v != 0.0}
    operator = PauliSum.from_label_terms(coeffs) if coeffs else PauliSum.zero(family.n_sites)
    return LocalBasisResult(coeffs, operator, to_matrix(operator), action)


def offdiagonal_action(
    family: HamiltonianFamily, lam: float, agp_operator: PauliSum
) -> float:
    """Off-diagonal residual ||P_off(dH - i[H, A])||^2 / ||P_off(dH)||^2.

    The eigenbasis-diagonal part of dH cannot be cancelled by any commutator
    and is independent of A, so the trace-normalised action has a floor.
    Projecting it out gives the measure that vanishes exactly when A matches
    the exact gauge potential on every transition (dense-guarded).
    """
    ensure_dense_ok(family.n_sites)
    spectral = diagonalize(to_matrix(family.h(lam)))
    v = spectral.eigenvectors
    g = family.dh(lam) + (-1j) * commutator(family.h(lam), agp_operator, prune_tol=0.0)
    g_eig = v.conj().T @ to_matrix(g) @ v
    dh_eig = v.conj().T @ to_matrix(family.dh(lam)) @ v
    np.fill_diagonal(g_eig, 0.0)
    np.fill_diagonal(dh_eig, 0.0)
    denom = float(np.sum(np.abs(dh_eig) ** 2))
    if denom == 0.0:
        raise ValueError("dH has no off-diagonal response; measure undefined")
    return float(np.sum(np.abs(g_eig) ** 2)) / denom


def action_value(family: HamiltonianFamily, lam: float, agp_operator: PauliSum) -> float:
    """Normalized action ||dH - i[H, A]||^2 / ||dH||^2 for a candidate A."""
    if not agp_operator.is_hermitian(tol=1e-9):
        raise ValueError("gauge-potential candidate must be Hermitian")
    h = family.h(lam)
    dh = family.dh(lam)
    dh_norm_sq = hs_inner(dh, dh).real
    if dh_norm_sq == 0.0:
        raise ValueError("dH vanishes; action undefined")
    g = dh + (-1j) * commutator(h, agp_operator, prune_tol=0.0)
    return hs_inner(g, g).real / dh_norm_sq


# ----------------------------------------------------------------- lambda grid
@dataclass
class AgpGrid:
    """Per-lambda solved coefficients and assembled gauge-potential terms.

    ``coeffs[i]`` holds the (real) Pauli coefficients of A(lams[i]) over the
    shared string union, ready for cubic interpolation during evolution.
    """

    ell: int
    lams: np.ndarray
    alphas: np.ndarray  # (n, ell)
    actions: np.ndarray  # (n,)
    strings: list[tuple[int, int]]
    coeffs: np.ndarray  # (n, n_strings)
    degenerate: np.ndarray  # (n,) bool


def variational_grids(
    family: HamiltonianFamily,
    ells: list[int],
    n_grid: int = 201,
    lams: np.ndarray | None = None,
    prune_tol: float = DEFAULT_PRUNE_TOL,
) -> dict[int, AgpGrid]:
    """Solve the variational problem on a lambda grid for several orders.

    Towers are shared across orders at each grid point; order ``ell`` uses
    the leading ``ell x ell`` block of the common Gram matrix.
    """
    if lams is None:
        lams = np.linspace(0.0, 1.0, n_grid)
    lams = np.asarray(lams, dtype=float)
    ell_max = max(ells)
    n = len(lams)

    per_ell_ops: dict[int, list[dict[tuple[int, int], float]]] = {l: [] for l in ells}
    alphas = {l: np.zeros((n, l)) for l in ells}
    actions = {l: np.zeros(n) for l in ells}
    degenerate = {l: np.zeros(n, dtype=bool) for l in ells}

    for i, lam in enumerate(lams):
        dh = family.dh(lam)
        towers = towers_for(family, lam, 2 * ell_max, prune_tol=prune_tol)
        dh_norm_sq = hs_inner(dh, dh).real
        m_full, b_full = gram_system(towers, dh, ell_max)
        for ell in ells:
            if dh_norm_sq == 0.0:
                solved = VariationalCoefficients(ell, np.zeros(ell), lam, 1.0, True)
            else:
                solved = _solve_gram(
                    m_full[:ell, :ell].copy(), b_full[:ell].copy(), dh_norm_sq, lam
                )
            alphas[ell][i] = solved.alpha
            actions[ell][i] = solved.normalized_action
            degenerate[ell][i] = solved.degenerate
            a_op = build_agp(family, lam, solved, towers=towers)
            per_ell_ops[ell].append({k: c.real for k, c in a_op.terms.items()})

    grids: dict[int, AgpGrid] = {}
    for ell in ells:
        union = sorted({key for op in per_ell_ops[ell] for key in op})
        index = {key: j for j, key in enumerate(union)}
        coeff_table = np.zeros((n, len(union)))
        for i, op in enumerate(per_ell_ops[ell]):
            for key, val in op.items():
                coeff_table[i, index[key]] = val
        grids[ell] = AgpGrid(
            ell, lams, alphas[ell], actions[ell], union, coeff_table, degenerate[ell]
        )
    return grids


def alpha_table_rows(grid: AgpGrid) -> list[tuple[float, int, int, float, float]]:
    """Rows (lambda, ell, k, alpha_k, normalized_action) for CSV export."""
    rows = []
    for i, lam in enumerate(grid.lams):
        for k in range(1, grid.ell + 1):
            rows.append(
                (float(lam), grid.ell, k, float(grid.alphas[i, k - 1]), float(grid.actions[i]))
            )
    return rows
