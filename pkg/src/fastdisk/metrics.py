"""Conformality quality metrics and their serialisation."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .beltrami import as_complex, inverse_beltrami, signed_area

N_BINS = 100


@dataclass
class QualityReport:
    mean_mu: float
    sd_mu: float
    max_mu: float
    maximal_dilation: float  # inf when max_mu >= 1
    boundary_circularity: float
    flipped_faces: list
    energy_trace: list
    histogram_edges: list
    histogram_counts: list
    histogram_overflow: int
    timings: dict
    n_vertices: int = 0
    n_faces: int = 0
    iterations: int = 0
    stop_reason: str = ""
    stage_names: list = field(default_factory=list)
    pre_projection_deviation: list = field(default_factory=list)
    area_weighted_mean_mu: float = 0.0
    area_weighted_sd_mu: float = 0.0

    @property
    def bijective(self):
        return not self.flipped_faces

    def to_dict(self):
        d = asdict(self)
        if not np.isfinite(d["maximal_dilation"]):
            d["maximal_dilation"] = None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("maximal_dilation") is None:
            d["maximal_dilation"] = float("inf")
        return cls(**d)

    def summary(self):
        return (
            f"mean|mu|={self.mean_mu:.6g} sd={self.sd_mu:.6g} max={self.max_mu:.6g} "
            f"circularity={self.boundary_circularity:.3g} flipped={len(self.flipped_faces)} "
            f"iterations={self.iterations} time={self.timings.get('total', 0.0):.3f}s"
        )


def mu_histogram(abs_mu, bins=N_BINS):
    """Uniform bins on [0, 1]; values >= 1 are counted apart as overflow."""
    abs_mu = np.asarray(abs_mu, dtype=float)
    edges = np.linspace(0.0, 1.0, bins + 1)
    inside = abs_mu < 1
    counts, _ = np.histogram(abs_mu[inside], bins=edges)
    return edges, counts, int(np.sum(~inside))


def boundary_circularity(z, loop):
    """``sum over boundary vertices of |1 - |z|^2|``."""
    zb = as_complex(z)[loop]
    return float(np.sum(np.abs(1 - np.abs(zb) ** 2)))


def flipped_faces(z, faces):
    """Faces whose image has non-positive signed area."""
    return np.flatnonzero(~(signed_area(as_complex(z)[faces]) > 0))


def compute_report(mesh, phi, trace=(), timings=None, **extra):
    """Statistics of ``|mu|`` for ``phi: M -> D`` plus boundary and flip checks.

    Mean and standard deviation are unweighted over faces; area-weighted
    versions are reported under their own names.
    """
    phi = as_complex(phi)
    faces = mesh.faces
    try:
        mu = inverse_beltrami(phi, faces, mesh.vertices, strict=False)
        abs_mu = np.abs(mu)
    except Exception:
        abs_mu = np.full(len(faces), np.inf)
    finite = np.isfinite(abs_mu)
    vals = abs_mu[finite]
    mean = float(np.mean(vals)) if len(vals) else float("nan")
    sd = float(np.std(vals)) if len(vals) else float("nan")
    mx = float(np.max(abs_mu)) if len(abs_mu) else 0.0
    dil = (1 + mx) / (1 - mx) if mx < 1 else float("inf")
    w = mesh.face_areas[finite]
    wmean = float(np.sum(w * vals) / np.sum(w)) if len(vals) else float("nan")
    wsd = float(np.sqrt(np.sum(w * (vals - wmean) ** 2) / np.sum(w))) if len(vals) else float("nan")
    edges, counts, overflow = mu_histogram(abs_mu)
    return QualityReport(
        mean_mu=mean,
        sd_mu=sd,
        max_mu=mx,
        maximal_dilation=dil,
        boundary_circularity=boundary_circularity(phi, mesh.boundary),
        flipped_faces=flipped_faces(phi, faces).tolist(),
        energy_trace=[float(x) for x in trace],
        histogram_edges=edges.tolist(),
        histogram_counts=counts.tolist(),
        histogram_overflow=overflow,
        timings=dict(timings or {}),
        n_vertices=mesh.n_vertices,
        n_faces=mesh.n_faces,
        area_weighted_mean_mu=wmean,
        area_weighted_sd_mu=wsd,
        **extra,
    )


class _Float17(json.JSONEncoder):
    def iterencode(self, o, _one_shot=False):
        return super().iterencode(_round17(o), _one_shot)


def _round17(o):
    # repr() already round-trips doubles; this only normalises numpy scalars
    if isinstance(o, dict):
        return {k: _round17(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_round17(v) for v in o]
    if isinstance(o, np.generic):
        return o.item()
    return o


def export_report(report, path, format="JSON"):
    """Write ``report`` as JSON, or the histogram as CSV ``edge,count`` rows."""
    fmt = format.upper()
    if fmt == "JSON":
        with open(path, "w") as fh:
            json.dump(report.to_dict(), fh, cls=_Float17, indent=2, sort_keys=True)
            fh.write("\n")
    elif fmt == "CSV":
        export_histogram_csv(report, path)
    else:
        raise ValueError(f"unknown report format {format!r}")


def export_histogram_csv(report, path):
    """One row per bin edge; the count column is empty on the last edge."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["edge", "count"])
        counts = report.histogram_counts
        for i, e in enumerate(report.histogram_edges):
            out.writerow([f"{e:.17g}", counts[i] if i < len(counts) else ""])
        out.writerow(["overflow", report.histogram_overflow])


def load_report(path):
    with open(path) as fh:
        return QualityReport.from_dict(json.load(fh))
