"""Hamiltonian families: lambda-parameterized pairs (H(lambda), dH/dlambda).

Each factory returns a :class:`HamiltonianFamily` whose builders produce
fresh :class:`~cdfloquet.operators.PauliSum` instances.  Site indices are
1-based in all parameter records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .operators import PauliSum


@dataclass(frozen=True)
class TrapSpec:
    """Gaussian magnetic trap dragged from site ``i0`` to ``i_f``."""

    h_t: float
    w_t: float
    i0: int
    i_f: int

    def validate(self, n_sites: int) -> None:
        if self.w_t <= 0:
            raise ValueError("trap width w_t must be positive")
        for name, site in (("i0", self.i0), ("i_f", self.i_f)):
            if not 1 <= site <= n_sites:
                raise ValueError(f"trap site {name}={site} outside 1..{n_sites}")

    def center(self, lam: float) -> float:
        return (1.0 - lam) * self.i0 + lam * self.i_f


@dataclass(frozen=True)
class HamiltonianFamily:
    """The control problem: lambda -> (H(lambda), dH(lambda))."""

    n_sites: int
    name: str
    params: dict
    h: Callable[[float], PauliSum] = field(repr=False)
    dh: Callable[[float], PauliSum] = field(repr=False)

    def descriptor(self) -> dict:
        return {"model": self.name, "n_sites": self.n_sites, **self.params}


def two_qubit_xxzz(J: float, h_z: float) -> HamiltonianFamily:
    """Two qubits with XX+ZZ exchange and a ramped uniform z field.

    H(lambda) = J (X1 X2 + Z1 Z2) + h_z (lambda - 1)(Z1 + Z2).  Any
    instantaneous Hamiltonian only couples the two aligned basis states, so
    the family behaves as an effective two-level system.
    """

    def build(lam: float) -> PauliSum:
        f = h_z * (lam - 1.0)
        return PauliSum.from_label_terms({"XX": J, "ZZ": J, "ZI": f, "IZ": f})

    def build_dh(lam: float) -> PauliSum:
        return PauliSum.from_label_terms({"ZI": h_z, "IZ": h_z})

    return HamiltonianFamily(2, "two_qubit_xxzz", {"J": J, "h_z": h_z}, build, build_dh)


def three_level(J: float, h: float) -> HamiltonianFamily:
    """Two qubits behaving as a three-level system under a transverse ramp.

    H(lambda) = -2J Z1 Z2 - h (Z1 + Z2) + 2 h lambda (X1 + X2); the singlet
    decouples for every lambda.
    """

    def build(lam: float) -> PauliSum:
        t = 2.0 * h * lam
        return PauliSum.from_label_terms(
            {"ZZ": -2.0 * J, "ZI": -h, "IZ": -h, "XI": t, "IX": t}
        )

    def build_dh(lam: float) -> PauliSum:
        return PauliSum.from_label_terms({"XI": 2.0 * h, "IX": 2.0 * h})

    return HamiltonianFamily(2, "three_level", {"J": J, "h": h}, build, build_dh)


def ising_uniform(
    L: int, J: float, h_x: float, h_z: float, periodic: bool = True
) -> HamiltonianFamily:
    """Non-integrable Ising chain with uniformly ramped fields.

    H(lambda) = J sum_i Z_i Z_{i+1} + lambda (h_z sum_i Z_i + h_x sum_i X_i),
    periodic by default (``periodic=False`` drops the wrap-around bond).
    """
    if L < 2:
        raise ValueError("ising_uniform needs L >= 2")
    n_bonds = L if periodic else L - 1

    def bonds() -> PauliSum:
        out = PauliSum.zero(L)
        for i in range(1, n_bonds + 1):
            j = i % L + 1
            out = out + PauliSum.two_site(L, i, "Z", j, "Z", J)
        return out

    def fields() -> PauliSum:
        out = PauliSum.zero(L)
        for i in range(1, L + 1):
            out = out + PauliSum.single_site(L, i, "Z", h_z)
            out = out + PauliSum.single_site(L, i, "X", h_x)
        return out

    def build(lam: float) -> PauliSum:
        return bonds() + lam * fields()

    def build_dh(lam: float) -> PauliSum:
        return fields()

    return HamiltonianFamily(
        L,
        "ising_uniform",
        {"J": J, "h_x": h_x, "h_z": h_z, "periodic": periodic},
        build,
        build_dh,
    )


def trap_ising(
    L: int, J: float, h_x: float, h_z: float, trap: TrapSpec
) -> HamiltonianFamily:
    """Open Ising chain with a Gaussian magnetic trap dragged across it.

    H(lambda) = H0 - h_t sum_i exp[-(i - c(lambda))^2 / w_t^2] Z_i with
    c(lambda) = (1 - lambda) i0 + lambda i_f and H0 the open-boundary chain
    plus uniform fields.  dH is the analytic lambda-derivative of the
    Gaussian profile (it feeds the drive, so it must be smooth).
    """
    if L < 2:
        raise ValueError("trap_ising needs L >= 2")
    trap.validate(L)

    def h0() -> PauliSum:
        out = PauliSum.zero(L)
        for i in range(1, L):
            out = out + PauliSum.two_site(L, i, "Z", i + 1, "Z", J)
        for i in range(1, L + 1):
            out = out + PauliSum.single_site(L, i, "Z", h_z)
            out = out + PauliSum.single_site(L, i, "X", h_x)
        return out

    def build(lam: float) -> PauliSum:
        c = trap.center(lam)
        out = h0()
        for i in range(1, L + 1):
            g = math.exp(-((i - c) ** 2) / trap.w_t**2)
            out = out + PauliSum.single_site(L, i, "Z", -trap.h_t * g)
        return out

    def build_dh(lam: float) -> PauliSum:
        c = trap.center(lam)
        drag = trap.i_f - trap.i0
        out = PauliSum.zero(L)
        for i in range(1, L + 1):
            g = math.exp(-((i - c) ** 2) / trap.w_t**2)
            coeff = -trap.h_t * drag * 2.0 * (i - c) / trap.w_t**2 * g
            if coeff != 0.0:
                out = out + PauliSum.single_site(L, i, "Z", coeff)
        return out

    return HamiltonianFamily(
        L,
        "trap_ising",
        {
            "J": J,
            "h_x": h_x,
            "h_z": h_z,
            "h_t": trap.h_t,
            "w_t": trap.w_t,
            "i0": trap.i0,
            "i_f": trap.i_f,
        },
        build,
        build_dh,
    )


_FACTORIES = {
    "two_qubit_xxzz": two_qubit_xxzz,
    "three_level": three_level,
    "ising_uniform": ising_uniform,
    "trap_ising": trap_ising,
}


def from_descriptor(desc: dict) -> HamiltonianFamily:
    """Rebuild a family from its serialized descriptor."""
    d = dict(desc)
    name = d.pop("model")
    if name == "two_qubit_xxzz":
        return two_qubit_xxzz(d["J"], d["h_z"])
    if name == "three_level":
        return three_level(d["J"], d["h"])
    if name == "ising_uniform":
        return ising_uniform(
            d["n_sites"], d["J"], d["h_x"], d["h_z"], d.get("periodic", True)
        )
    if name == "trap_ising":
        trap = TrapSpec(d["h_t"], d["w_t"], d["i0"], d["i_f"])
        return trap_ising(d["n_sites"], d["J"], d["h_x"], d["h_z"], trap)
    raise ValueError(f"unknown model {name!r}")
