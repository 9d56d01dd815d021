"""Artifact files: JSON for solved objects, CSV for sampled reports.

All JSON is written with sorted keys and no timestamps, so identical
configurations reproduce identical bytes; wall-clock data belongs to the
run report, never to artifacts.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .homological import ClassSolveRecord, OrderSolveRecord, SemiconjugacyJet
from .model import MapModel, SplitChoice
from .remainder import FoliationSolution, ScalingCertificate
from .spectral import DecayEstimate
from .tensor_poly import Splitting, jet_from_dict, jet_to_dict

__all__ = [
    "write_json",
    "read_json",
    "semiconjugacy_to_dict",
    "semiconjugacy_from_dict",
    "split_to_dict",
    "split_from_dict",
    "foliation_to_dict",
    "foliation_from_dict",
    "eigenfunction_to_dict",
    "write_residuals_csv",
    "write_samples_csv",
]


def write_json(path, data: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _complex_list(values) -> list[list[float]]:
    return [[complex(z).real, complex(z).imag] for z in values]


def _matrix(M) -> list[list[float]]:
    return [[float(v) for v in row] for row in np.atleast_2d(M)]


def semiconjugacy_to_dict(sol: SemiconjugacyJet) -> dict:
    return {
        "kind": "semiconjugacy_jet",
        "reduced_degree": sol.reduced_degree,
        "N": sol.N,
        "mode": sol.mode,
        "residuals": [float(r) for r in sol.residuals],
        "records": [r.to_dict() for r in sol.records],
        "submersion": jet_to_dict(sol.submersion),
        "reduced": jet_to_dict(sol.reduced),
    }


def semiconjugacy_from_dict(data: dict) -> SemiconjugacyJet:
    records = []
    for r in data["records"]:
        classes = tuple(
            ClassSolveRecord(c["weight"], c["size"], c["min_divisor"], c["condition_estimate"])
            for c in r["classes"]
        )
        records.append(OrderSolveRecord(r["degree"], r["g_mode"], classes,
                                        r["residual"], r["scale"]))
    return SemiconjugacyJet(
        submersion=jet_from_dict(data["submersion"]),
        reduced=jet_from_dict(data["reduced"]),
        reduced_degree=int(data["reduced_degree"]),
        N=int(data["N"]),
        mode=data["mode"],
        records=tuple(records),
        residuals=tuple(float(r) for r in data["residuals"]),
    )


def split_to_dict(split: SplitChoice) -> dict:
    return {
        "subset": _complex_list(split.subset),
        "to_adapted": _matrix(split.to_adapted),
        "from_adapted": _matrix(split.from_adapted),
        "dim0": split.dim0,
        "dim": split.dim,
        "block0": _matrix(split.block0),
        "block1": _matrix(split.block1) if split.dim > split.dim0 else [],
        "coupling": _matrix(split.coupling) if split.dim > split.dim0 else [],
        "triangular_defect": split.triangular_defect,
        "is_flow": split.is_flow,
    }


def split_from_dict(data: dict) -> SplitChoice:
    d0 = int(data["dim0"])
    d = int(data["dim"])
    return SplitChoice(
        subset=tuple(complex(re, im) for re, im in data["subset"]),
        to_adapted=np.array(data["to_adapted"], dtype=float),
        from_adapted=np.array(data["from_adapted"], dtype=float),
        splitting=Splitting(d, tuple(range(d0))),
        block0=np.array(data["block0"], dtype=float),
        block1=np.array(data["block1"], dtype=float) if data["block1"] else np.zeros((0, 0)),
        coupling=np.array(data["coupling"], dtype=float) if data["coupling"] else np.zeros((0, d0)),
        triangular_defect=float(data["triangular_defect"]),
        is_flow=bool(data["is_flow"]),
    )


def certificate_to_dict(cert: ScalingCertificate) -> dict:
    return cert.to_dict()


def certificate_from_dict(data: dict) -> ScalingCertificate:
    return ScalingCertificate(
        delta=float(data["delta"]),
        nonlinearity_norm=float(data["nonlinearity_norm"]),
        ball_invariance=bool(data["ball_invariance"]),
        contraction_estimate=float(data["contraction_estimate"]),
        series_ratio=float(data["series_ratio"]),
        vanishing_order=int(data["vanishing_order"]),
        orbit_cap=float(data["orbit_cap"]),
        decay=DecayEstimate(float(data["decay_prefactor"]), float(data["decay_rate"]), tuple()),
        samples=int(data["samples"]),
        seed=int(data["seed"]),
        trail=tuple((float(d), float(n), bool(i)) for d, n, i in data.get("trail", [])),
    )


def foliation_to_dict(sol: FoliationSolution, tau: float | None = None) -> dict:
    out = {
        "kind": "foliation_solution",
        "jet": semiconjugacy_to_dict(sol.jet),
        "split": split_to_dict(sol.split),
        "delta": sol.delta,
        "certificate": certificate_to_dict(sol.certificate),
        "inner_radius": sol.inner_radius,
        "extension_kmax": sol.extension_kmax,
    }
    if tau is not None:
        out["tau"] = float(tau)
    return out


def foliation_from_dict(data: dict, model: MapModel) -> FoliationSolution:
    """Rebind a stored foliation to a live map model (the adapted-coordinate
    map it was solved against, rebuilt from the run configuration)."""
    return FoliationSolution(
        jet=semiconjugacy_from_dict(data["jet"]),
        split=split_from_dict(data["split"]),
        model=model,
        delta=float(data["delta"]),
        certificate=certificate_from_dict(data["certificate"]),
        inner_radius=float(data["inner_radius"]),
        extension_kmax=int(data["extension_kmax"]),
    )


def eigenfunction_to_dict(psi) -> dict:
    gauge = np.asarray(psi.gauge_vector)
    return {
        "kind": "koopman_eigenfunction",
        "lambda": [psi.lam.real, psi.lam.imag],
        "tau": psi.tau,
        "is_real": psi.is_real,
        "domain_radius": psi.domain_radius,
        "gauge_vector": _complex_list(gauge),
        "admissibility": psi.admissibility.to_dict(),
        "warnings": list(psi.warnings),
        "n_alternates": len(psi.alternates),
        "foliation": foliation_to_dict(psi.foliation, tau=psi.tau),
    }


def write_residuals_csv(path, sol: SemiconjugacyJet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["degree", "residual", "g_mode", "min_divisor", "condition_estimate"])
        by_degree = {r.degree: r for r in sol.records}
        for n, res in enumerate(sol.residuals):
            rec = by_degree.get(n)
            writer.writerow([
                n, repr(float(res)),
                rec.g_mode if rec else "",
                repr(float(rec.min_divisor)) if rec else "",
                repr(float(max(c.condition_estimate for c in rec.classes))) if rec and rec.classes else "",
            ])


def write_samples_csv(path, rows: np.ndarray, header: list[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in np.atleast_2d(rows):
            writer.writerow([repr(float(v)) for v in row])
