"""Render cdfloquet experiment outputs (manifest.json + CSVs) as figures.

Consumes only the documented CSV schemas:

  prefactor:  omega,ell,prefactor
  trajectory: t,lambda,fidelity_sq,energy,ground_energy,absorbed[,sz_i...]

Rendering is read-only and reproducible: identical inputs give
byte-identical SVG output (fixed style, no timestamps, fixed hash salt).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import matplotlib
import numpy as np

matplotlib.use("Agg")
matplotlib.rcParams.update(
    {
        "svg.hashsalt": "figplot",
        "svg.fonttype": "none",
        "figure.dpi": 120,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 9,
    }
)

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

FIGURE_KINDS = ("fig1", "fig2", "fig3", "fig4")


class SchemaError(ValueError):
    """Input CSV or manifest does not match the documented schema."""


@dataclass(frozen=True)
class FigureJob:
    manifest_path: str
    kind: str
    out_path: str

    def validate(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        if not os.path.exists(self.manifest_path):
            raise SchemaError(f"manifest not found: {self.manifest_path}")


def _load_manifest(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _read_csv(path: str, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if len(lines) < 2:
        raise SchemaError(f"{os.path.basename(path)}: no data rows")
    header = lines[0].split(",")
    for column in required:
        if column not in header:
            raise SchemaError(f"{os.path.basename(path)}: missing column {column!r}")
    table = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    if table.shape[1] != len(header):
        raise SchemaError(f"{os.path.basename(path)}: ragged rows")
    return {name: table[:, i] for i, name in enumerate(header)}


def _save(fig, out_path: str) -> None:
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _protocol_entries(manifest: dict, base: str) -> list[dict]:
    entries = manifest.get("protocols")
    if not entries:
        raise SchemaError("manifest has no protocol entries")
    for entry in entries:
        entry["path"] = os.path.join(base, entry["file"])
    return entries


def render(job: FigureJob) -> str:
    """Render one figure; returns the output path (nothing written on error)."""
    job.validate()
    manifest = _load_manifest(job.manifest_path)
    base = os.path.dirname(os.path.abspath(job.manifest_path))
    if job.kind == "fig1":
        fig = _render_prefactor(manifest, base)
    elif job.kind in ("fig2", "fig3"):
        fig = _render_fidelity(manifest, base)
    else:
        fig = _render_trap(manifest, base)
    _save(fig, job.out_path)
    return job.out_path


def _render_prefactor(manifest: dict, base: str):
    data = _read_csv(os.path.join(base, manifest["file"]), ("omega", "ell", "prefactor"))
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    for ell in sorted(set(int(v) for v in data["ell"])):
        mask = data["ell"] == ell
        # the solved series tracks -1/omega; plot its magnitude
        ax.plot(data["omega"][mask], np.abs(data["prefactor"][mask]), label=f"order {ell}")
    omega = np.sort(np.unique(data["omega"]))
    ax.plot(omega, 1.0 / omega, "k:", label="1/omega")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("excitation frequency")
    ax.set_ylabel("|series prefactor|")
    ax.set_ylim(1e-3, 30.0)
    ax.legend(loc="lower left")
    fig.tight_layout()
    return fig


def _render_fidelity(manifest: dict, base: str):
    entries = _protocol_entries(manifest, base)
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    tau = manifest["config"]["tau"]
    for entry in entries:
        data = _read_csv(entry["path"], ("t", "fidelity_sq"))
        infidelity = np.clip(1.0 - data["fidelity_sq"], 1e-16, None)
        ax.plot(data["t"] / tau, infidelity, label=entry["label"])
    ax.set_yscale("log")
    ax.set_xlabel("t / tau")
    ax.set_ylabel("1 - F^2")
    ax.legend(loc="lower left", fontsize=7)
    fig.tight_layout()
    return fig


def _trap_parts(manifest: dict, base: str) -> list[tuple[dict, str]]:
    if "parts" in manifest:
        parts = []
        for part in manifest["parts"]:
            sub_path = os.path.join(base, part["manifest"])
            parts.append((_load_manifest(sub_path), os.path.dirname(sub_path)))
        return parts
    return [(manifest, base)]


def _render_trap(manifest: dict, base: str):
    parts = _trap_parts(manifest, base)
    fig, (ax_e, ax_s) = plt.subplots(2, 1, figsize=(4.2, 5.4))
    main_manifest, main_base = parts[0]
    for manifest_part, part_base in parts:
        reduced = manifest_part is not main_manifest
        tau = manifest_part["config"]["tau"]
        for entry in _protocol_entries(manifest_part, part_base):
            data = _read_csv(entry["path"], ("t", "absorbed"))
            label = entry["label"] + (" (reduced)" if reduced else "")
            style = "--" if reduced else "-"
            ax_e.plot(data["t"] / tau, data["absorbed"], style, label=label)
    ax_e.set_xlabel("t / tau")
    ax_e.set_ylabel("absorbed energy")
    ax_e.legend(loc="upper left", fontsize=6)

    for entry in _protocol_entries(main_manifest, main_base):
        data = _read_csv(entry["path"], ("t", "absorbed"))
        sz_cols = sorted(
            (k for k in data if k.startswith("sz_")), key=lambda k: int(k[3:])
        )
        if not sz_cols:
            raise SchemaError(f"{entry['file']}: missing column 'sz_1'")
        sites = np.arange(1, len(sz_cols) + 1)
        profile = np.array([data[c][-1] for c in sz_cols])
        ax_s.plot(sites, profile, "o-", ms=3, label=entry["label"])
    exact = main_manifest.get("exact_final_profile")
    if exact is not None:
        ax_s.plot(np.arange(1, len(exact) + 1), exact, "k--", label="exact")
    ax_s.set_xlabel("site")
    ax_s.set_ylabel("final <sigma^z>")
    ax_s.legend(loc="lower left", fontsize=6)
    fig.tight_layout()
    return fig
