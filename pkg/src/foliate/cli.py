"""Command-line harness: configuration, pipelines and verification.

Subcommands
    check-spectrum   spectral report plus all nonresonance checks
    solve-foliation  full foliation solve with residual artifacts
    solve-koopman    principal eigenfunction construction
    verify           re-verify stored artifacts against a model
    demo             the two built-in Galerkin demonstrations

Exit codes: 0 success, 2 resonance/verification failure, 1 error.
Configuration is TOML; artifacts are JSON; sampled reports are CSV.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import artifacts
from .homological import ResonantDivisorError, solve_semiconjugacy
from .koopman import build_eigenfunction, verify_eigenfunction
from .model import (
    FlowModel,
    MapModel,
    build_chafee_infante,
    build_ns_kolmogorov,
    default_tau,
    make_split_choice,
    polynomial_jet,
    time_tau_map,
    transform_flow,
    transform_map,
)
from .remainder import FoliationSolution, invariance_residuals, select_scaling
from .sampling import worker_count
from .spectral import (
    check_cross_resonances,
    check_generator_resonances,
    check_self_resonances,
    compute_spectrum,
    select_reduced_degree,
)

__all__ = ["RunConfig", "RunReport", "main",
           "cmd_check_spectrum", "cmd_solve_foliation",
           "cmd_solve_koopman", "cmd_verify", "cmd_demo"]


@dataclass
class RunConfig:
    """Parsed run configuration with validated defaults."""

    model: dict
    split: dict = field(default_factory=dict)
    solve: dict = field(default_factory=dict)
    koopman: dict = field(default_factory=dict)
    scaling: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = 1234

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if "model" not in raw:
            raise ValueError("configuration needs a [model] section")
        cfg = cls(
            model=raw["model"],
            split=raw.get("split", {}),
            solve=raw.get("solve", {}),
            koopman=raw.get("koopman", {}),
            scaling=raw.get("scaling", {}),
            verify=raw.get("verify", {}),
            tolerances=raw.get("tolerances", {}),
            seed=int(raw.get("seed", 1234)),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for name, value in self.tolerances.items():
            if float(value) <= 0:
                raise ValueError(f"tolerance {name!r} must be positive, got {value}")
        N = self.solve.get("N")
        rdeg = self.solve.get("reduced_degree")
        if isinstance(rdeg, int) and rdeg < 1:
            raise ValueError("reduced_degree must be at least 1")
        if isinstance(N, int) and isinstance(rdeg, int) and N < rdeg:
            raise ValueError("N must be at least the reduced degree")

    @property
    def tol_resonance(self) -> float:
        return float(self.tolerances.get("resonance", 1e-8))

    @property
    def tol_residual(self) -> float:
        return float(self.tolerances.get("residual", 1e-10))

    @property
    def tol_defect(self) -> float:
        return float(self.tolerances.get("defect", 1e-6))


@dataclass
class RunReport:
    command: str
    seed: int
    passed: bool = True
    data: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "seed": self.seed,
            "passed": self.passed,
            "threads": worker_count(os.environ.get("FOLIATE_THREADS")),
            "data": self.data,
            "files": [str(f) for f in self.files],
            "timings": self.timings,
        }

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "report.json"
        artifacts.write_json(path, self.to_dict())
        return path


class _OutputLock:
    """One writer per output directory."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / ".foliate.lock"
        out_dir.mkdir(parents=True, exist_ok=True)

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(
                f"output directory is locked by another run ({self.path})"
            ) from None
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass


# -- model construction -------------------------------------------------------

def build_model(cfg: RunConfig):
    spec = cfg.model
    kind = spec.get("kind")
    options = spec.get("options", {})
    rtol = float(options.get("rtol", 1e-12))
    atol = float(options.get("atol", 1e-14))

    if kind == "chafee_infante":
        model = build_chafee_infante(float(options["lambda_param"]), int(options["modes"]))
        model.rtol, model.atol = rtol, atol
        return model
    if kind == "ns_kolmogorov":
        model = build_ns_kolmogorov(
            float(options["reynolds"]),
            int(options.get("cutoff_x", 1)),
            int(options.get("cutoff_y", 2)),
            float(options.get("forcing_amplitude", 0.05)),
            int(options.get("forcing_wavenumber", 1)),
        )
        model.rtol, model.atol = rtol, atol
        return model
    if kind not in ("map", "flow"):
        raise ValueError(f"unknown model kind {kind!r}")

    dim = int(spec["dim"])
    terms = [
        (tuple(int(e) for e in t["exponents"]), int(t["component"]), float(t["coefficient"]))
        for t in spec.get("terms", [])
    ]
    if any(sum(e) == 0 and c != 0.0 for e, _, c in terms):
        raise ValueError("constant terms would move the fixed point away from the origin")
    degree = max((sum(e) for e, _, _ in terms), default=1)
    # polynomial models: zero-padding the jet to the solve order is exact
    order = max(degree, 1,
                int(cfg.solve.get("N", 0) or 0),
                int(cfg.koopman.get("N", 0) or 0))
    jet = polynomial_jet(dim, dim, order, terms)
    if kind == "map":
        return MapModel(dim=dim, eval=jet, jet=jet, A=jet.linear_part())
    model = FlowModel(dim=dim, vector_field=jet, vf_jet=jet, G=jet.linear_part(),
                      polynomial=True, rtol=rtol, atol=atol)
    return model


def _ordered_spectrum(L: np.ndarray) -> list[complex]:
    """Distinct eigenvalues sorted by decreasing real part, then
    increasing imaginary part; the index space for subset selection."""
    report = compute_spectrum(L)
    return sorted(report.eigenvalues, key=lambda z: (-z.real, z.imag))


def resolve_subset(cfg: RunConfig, L: np.ndarray) -> list[complex]:
    split_cfg = cfg.split
    ordered = _ordered_spectrum(L)
    if "subset_values" in split_cfg:
        out = []
        tol = float(split_cfg.get("match_tol", 1e-8))
        scale = max(1.0, max(abs(z) for z in ordered))
        for re, im in split_cfg["subset_values"]:
            target = complex(re, im)
            best = min(ordered, key=lambda z: abs(z - target))
            if abs(best - target) > tol * scale:
                raise ValueError(
                    f"no eigenvalue within {tol} of {target}; spectrum is {ordered}"
                )
            out.append(best)
        return out
    if "subset_indices" in split_cfg:
        return [ordered[int(i)] for i in split_cfg["subset_indices"]]
    raise ValueError("split section needs subset_values or subset_indices")


def _conjugation_closed(subset: list[complex], tol: float = 1e-10) -> list[complex]:
    out = list(subset)
    for z in subset:
        if abs(z.imag) > tol and not any(abs(np.conj(z) - w) <= tol for w in out):
            out.append(np.conj(z))
    return out


# -- commands -----------------------------------------------------------------

def cmd_check_spectrum(cfg: RunConfig, out_dir: Path) -> RunReport:
    report = RunReport(command="check-spectrum", seed=cfg.seed)
    t0 = time.perf_counter()
    model = build_model(cfg)
    is_flow = isinstance(model, FlowModel)
    L = model.G if is_flow else model.A

    spectrum = compute_spectrum(L)
    subset = _conjugation_closed(resolve_subset(cfg, L))
    split = make_split_choice(model, subset,
                              gap_tol=float(cfg.split.get("gap_tol", 1e-9)),
                              match_tol=float(cfg.split.get("match_tol", 1e-8)))

    checks: dict = {}
    rdeg_cfg = cfg.solve.get("reduced_degree", "auto")
    if is_flow:
        tau = cfg.solve.get("tau", "auto")
        tau = default_tau(model.G) if tau == "auto" else float(tau)
        A_blocks = (np.exp(tau * np.linalg.eigvals(split.block0)),
                    np.exp(tau * np.linalg.eigvals(split.block1)))
        checks["tau"] = tau
    else:
        A_blocks = (np.linalg.eigvals(split.block0), np.linalg.eigvals(split.block1))

    choice = select_reduced_degree(A_blocks[0], np.concatenate(A_blocks))
    rdeg = choice.minimal if rdeg_cfg == "auto" else int(rdeg_cfg)
    if rdeg is None:
        raise ValueError("no admissible degree bound: the spectrum violates the gap inequality")

    cross = check_cross_resonances(A_blocks[0], A_blocks[1], rdeg, cfg.tol_resonance)
    power = check_self_resonances(A_blocks[0], rdeg, 2, cfg.tol_resonance)
    checks.update({
        "spectrum": {
            "eigenvalues": [[z.real, z.imag] for z in spectrum.eigenvalues],
            "multiplicities": list(spectrum.multiplicities),
            "spectral_radius": spectrum.spectral_radius,
            "diagonalizable": spectrum.diagonalizable,
        },
        "subset": [[z.real, z.imag] for z in subset],
        "reduced_degree": {"minimal": choice.minimal, "largest": choice.largest,
                           "used": rdeg},
        "cross_products": cross.to_dict(),
        "self_products": power.to_dict(),
        "triangular_defect": split.triangular_defect,
    })
    if is_flow:
        gen = check_generator_resonances(
            np.linalg.eigvals(model.G),
            np.linalg.eigvals(split.block0),
            np.linalg.eigvals(split.block1),
            rdeg, cfg.tol_resonance,
        )
        checks["generator"] = {k: v.to_dict() for k, v in gen.items()}
        gen_pass = all(v.passed for v in gen.values())
    else:
        gen_pass = True

    report.data = checks
    # the self-product condition only gates a normal-form reduction
    need_self = cfg.solve.get("mode", "foliation") == "normal_form"
    report.passed = cross.passed and gen_pass and (power.passed or not need_self)
    report.timings["total"] = time.perf_counter() - t0
    path = out_dir / "spectrum_report.json"
    artifacts.write_json(path, checks)
    report.files.append(path)
    return report


def _prepare_map(cfg: RunConfig, model, subset):
    """Adapted-coordinate map model + split for the solve pipeline."""
    split = make_split_choice(model, subset,
                             gap_tol=float(cfg.split.get("gap_tol", 1e-9)),
                             match_tol=float(cfg.split.get("match_tol", 1e-8)))
    tau = None
    if isinstance(model, FlowModel):
        tau = cfg.solve.get("tau", "auto")
        tau = default_tau(model.G) if tau == "auto" else float(tau)
        adapted_flow = transform_flow(model, split)
        N = int(cfg.solve.get("N", 6))
        adapted = time_tau_map(adapted_flow, tau, N)
    else:
        adapted = transform_map(model, split)
    return adapted, split, tau


def cmd_solve_foliation(cfg: RunConfig, out_dir: Path, force: bool = False) -> RunReport:
    report = RunReport(command="solve-foliation", seed=cfg.seed)
    t0 = time.perf_counter()
    model = build_model(cfg)
    L = model.G if isinstance(model, FlowModel) else model.A
    subset = _conjugation_closed(resolve_subset(cfg, L))

    gate = cmd_check_spectrum(cfg, out_dir)
    report.files.extend(gate.files)
    report.data["checks"] = gate.data
    if not gate.passed and not force:
        report.passed = False
        report.data["refused"] = "nonresonance checks failed; rerun with --force to attempt"
        report.timings["total"] = time.perf_counter() - t0
        return report

    adapted, split, tau = _prepare_map(cfg, model, subset)
    rdeg_cfg = cfg.solve.get("reduced_degree", "auto")
    rdeg = gate.data["reduced_degree"]["minimal"] if rdeg_cfg == "auto" else int(rdeg_cfg)
    N = int(cfg.solve.get("N", max(6, rdeg)))
    mode = cfg.solve.get("mode", "foliation")
    gauge = cfg.solve.get("gauge")
    gauge = np.array(gauge, dtype=float) if gauge is not None else None

    t1 = time.perf_counter()
    jet = solve_semiconjugacy(adapted.jet, split, rdeg, N, mode=mode,
                              linear_gauge=gauge, tol_res=cfg.tol_resonance)
    t2 = time.perf_counter()
    certificate = select_scaling(
        adapted, split, rdeg,
        target_nonlinearity=float(cfg.scaling.get("target_nonlinearity", 0.05)),
        samples=int(cfg.scaling.get("samples", 256)),
        seed=cfg.seed,
    )
    solution = FoliationSolution(jet=jet, split=split, model=adapted,
                                 delta=certificate.delta, certificate=certificate)
    t3 = time.perf_counter()

    jet_path = out_dir / "foliation.json"
    artifacts.write_json(jet_path, artifacts.foliation_to_dict(solution, tau=tau))
    res_path = out_dir / "residuals.csv"
    artifacts.write_residuals_csv(res_path, jet)
    inv = invariance_residuals(solution, n_points=int(cfg.verify.get("grid_points", 128)),
                               seed=cfg.seed)
    inv_path = out_dir / "invariance_residuals.csv"
    artifacts.write_samples_csv(inv_path, inv,
                                [f"x{i}" for i in range(model.dim)] + ["residual"])
    report.files.extend([jet_path, res_path, inv_path])

    worst = float(np.max([r for r in jet.residuals])) if jet.residuals else 0.0
    report.data.update({
        "reduced_degree": rdeg, "N": N, "mode": mode,
        "residuals": [float(r) for r in jet.residuals],
        "max_residual": worst,
        "delta": certificate.delta,
        "invariance_sup": float(np.max(inv[:, -1])),
    })
    report.passed = worst <= cfg.tol_residual
    report.timings.update({
        "model": t1 - t0, "solve": t2 - t1, "certificate": t3 - t2,
        "total": time.perf_counter() - t0,
    })
    return report


def cmd_solve_koopman(cfg: RunConfig, out_dir: Path) -> RunReport:
    report = RunReport(command="solve-koopman", seed=cfg.seed)
    t0 = time.perf_counter()
    model = build_model(cfg)
    if not isinstance(model, FlowModel):
        raise ValueError("solve-koopman needs a flow model")
    if "eigenvalue" not in cfg.koopman:
        raise ValueError("koopman section needs an eigenvalue = [re, im]")
    re, im = cfg.koopman["eigenvalue"]
    lam = complex(float(re), float(im))

    tau = cfg.solve.get("tau", "auto")
    tau = None if tau == "auto" else float(tau)
    psi = build_eigenfunction(
        model, lam,
        reduced_degree=None if cfg.solve.get("reduced_degree", "auto") == "auto"
        else int(cfg.solve["reduced_degree"]),
        N=int(cfg.koopman.get("N", cfg.solve.get("N", 6))),
        tau=tau,
        target_nonlinearity=float(cfg.scaling.get("target_nonlinearity", 0.05)),
        tol=cfg.tol_resonance,
        seed=cfg.seed,
        emit_alternates=bool(cfg.koopman.get("emit_alternates", False)),
    )
    t1 = time.perf_counter()

    stats = verify_eigenfunction(
        psi,
        n_points=int(cfg.verify.get("points", 100)),
        horizon=float(cfg.verify.get("horizon", 5.0)),
        radius=cfg.verify.get("radius"),
        seed=cfg.seed,
    )
    t2 = time.perf_counter()

    psi_path = out_dir / "eigenfunction.json"
    artifacts.write_json(psi_path, artifacts.eigenfunction_to_dict(psi))
    defect_path = out_dir / "defects.csv"
    artifacts.write_samples_csv(
        defect_path,
        np.column_stack([np.arange(len(stats.per_point)), stats.per_point]),
        ["sample", "defect"],
    )
    level_path = out_dir / "level_sets.csv"
    _write_level_sets(level_path, psi)
    report.files.extend([psi_path, defect_path, level_path])

    report.data.update({
        "lambda": [psi.lam.real, psi.lam.imag],
        "tau": psi.tau,
        "defect_sup": stats.sup,
        "defect_mean": stats.mean,
        "skipped": stats.skipped,
        "warnings": list(psi.warnings),
        "admissibility": psi.admissibility.to_dict(),
    })
    report.passed = stats.sup <= cfg.tol_defect
    report.timings.update({"build": t1 - t0, "verify": t2 - t1,
                           "total": time.perf_counter() - t0})
    return report


def _write_level_sets(path, psi, n_levels: int = 4, n_points: int = 40) -> None:
    """Sampled leaves: fix the submersion value and trace the leaf along
    the first complement coordinate by a per-point Newton correction."""
    from .tensor_poly import jet_jacobian

    sol = psi.foliation
    d0 = sol.split.dim0
    dim = sol.model.dim
    radius = 0.8 * sol.core_radius
    rows = []
    sub = sol.jet.submersion
    for level_idx in range(1, n_levels + 1):
        base = np.zeros(dim)
        base[0] = radius * level_idx / (n_levels + 1.0)
        target = sub(base)
        for s in np.linspace(-radius / 2, radius / 2, n_points):
            z = base.copy()
            if dim > d0:
                z[d0] += s
            for _ in range(30):
                err = sub(z) - target
                if np.max(np.abs(err)) < 1e-12:
                    break
                J = jet_jacobian(sub, z)[:, :d0]
                z[:d0] -= np.linalg.solve(J, err)
            x = sol.split.from_adapted @ z
            rows.append([level_idx, s] + list(x) + [float(v) for v in sub(z)])
    artifacts.write_samples_csv(
        path, np.array(rows),
        ["level", "arc"] + [f"x{i}" for i in range(dim)] + [f"value{i}" for i in range(d0)],
    )


def cmd_verify(cfg: RunConfig, out_dir: Path, artifact_paths: list) -> RunReport:
    report = RunReport(command="verify", seed=cfg.seed)
    t0 = time.perf_counter()
    if not artifact_paths:
        raise ValueError("verify needs at least one artifact path")
    n_points = int(cfg.verify.get("grid_points", 128))
    if n_points <= 0:
        raise ValueError("verify sample set must be nonempty")

    model = build_model(cfg)
    worst_overall = 0.0
    for idx, raw_path in enumerate(artifact_paths):
        data = artifacts.read_json(raw_path)
        kind = data.get("kind")
        if kind == "koopman_eigenfunction":
            data_fol = data["foliation"]
            tau = float(data["tau"])
            psi = _rebind_eigenfunction(cfg, model, data, tau)
            stats = verify_eigenfunction(
                psi, n_points=int(cfg.verify.get("points", 100)),
                horizon=float(cfg.verify.get("horizon", 5.0)),
                radius=cfg.verify.get("radius"), seed=cfg.seed,
            )
            worst = stats.sup
            tolerance = cfg.tol_defect
            detail = {"artifact": str(raw_path), "kind": kind,
                      "defect_sup": stats.sup, "defect_mean": stats.mean,
                      "tolerance": tolerance}
        elif kind == "foliation_solution":
            solution = _rebind_foliation(cfg, model, data)
            inv = invariance_residuals(solution, n_points=n_points, seed=cfg.seed)
            csv_path = out_dir / f"verify_residuals_{idx}.csv"
            artifacts.write_samples_csv(
                csv_path, inv, [f"x{i}" for i in range(model.dim)] + ["residual"])
            report.files.append(csv_path)
            worst = float(np.max(inv[:, -1]))
            tolerance = cfg.tolerances.get("invariance")
            if tolerance is None:
                # default gate: an order of magnitude above the truncation
                # level of the stored jet at the sampled radius
                N = int(data["jet"]["N"])
                scale = max(1.0, solution.jet.submersion.max_abs())
                tolerance = max(1e-9, 10.0 * scale * solution.core_radius ** (N + 1))
            tolerance = float(tolerance)
            detail = {"artifact": str(raw_path), "kind": kind,
                      "invariance_sup": worst, "tolerance": tolerance}
        else:
            raise ValueError(f"unknown artifact kind {kind!r} in {raw_path}")
        detail["passed"] = worst <= tolerance
        report.data.setdefault("artifacts", []).append(detail)
        worst_overall = max(worst_overall, worst / tolerance)

    report.passed = worst_overall <= 1.0
    report.timings["total"] = time.perf_counter() - t0
    return report


def _rebind_foliation(cfg: RunConfig, model, data) -> FoliationSolution:
    split = artifacts.split_from_dict(data["split"])
    if isinstance(model, FlowModel):
        tau = float(data.get("tau", default_tau(model.G)))
        adapted = time_tau_map(transform_flow(model, split), tau, int(data["jet"]["N"]))
    else:
        adapted = transform_map(model, split)
    return artifacts.foliation_from_dict(data, adapted)


def _rebind_eigenfunction(cfg: RunConfig, model, data, tau):
    from .koopman import AdmissibilityReport, KoopmanEigenfunction

    if not isinstance(model, FlowModel):
        raise ValueError("eigenfunction artifacts verify against flow models")
    solution = _rebind_foliation(cfg, model, data["foliation"])
    lam = complex(*data["lambda"])
    adm = data["admissibility"]
    report = AdmissibilityReport(
        lam=lam, in_spectrum=adm["in_spectrum"],
        nearest_distance=adm["nearest_distance"], gap_ok=adm["gap_ok"],
        reduced_degree=adm["reduced_degree"],
        resonance_hits=tuple(
            (h["n"], tuple(complex(re, im) for re, im in h["summands"]))
            for h in adm["resonance_hits"]
        ),
        simple=adm["simple"],
    )
    return KoopmanEigenfunction(
        lam=lam, flow=model, foliation=solution, tau=tau,
        gauge_vector=np.array([complex(re, im) for re, im in data["gauge_vector"]]),
        domain_radius=float(data["domain_radius"]),
        is_real=bool(data["is_real"]), admissibility=report,
        warnings=tuple(data.get("warnings", [])),
    )


_DEMO_CONFIGS = {
    "chafee-infante": {
        "seed": 1234,
        "model": {"kind": "chafee_infante",
                  "options": {"lambda_param": 0.5, "modes": 8,
                              "rtol": 1e-12, "atol": 1e-14}},
        "split": {"subset_values": [[-0.5, 0.0]]},
        "solve": {"reduced_degree": "auto", "N": 6, "tau": "auto"},
        "koopman": {"eigenvalue": [-0.5, 0.0], "N": 6},
        "verify": {"points": 100, "horizon": 10.0, "radius": 0.01},
        "tolerances": {"defect": 1e-6},
    },
    "ns-kolmogorov": {
        "seed": 1234,
        "model": {"kind": "ns_kolmogorov",
                  "options": {"reynolds": 20.0, "cutoff_x": 1, "cutoff_y": 2,
                              "forcing_amplitude": 0.05, "forcing_wavenumber": 1,
                              "rtol": 1e-12, "atol": 1e-14}},
        "split": {"subset_values": [[-0.05, 0.0]]},
        "solve": {"reduced_degree": "auto", "N": 3, "tau": "auto"},
        "koopman": {"eigenvalue": [-0.05, 0.0], "N": 3},
        "verify": {"points": 64, "horizon": 10.0, "radius": 1e-3},
        "tolerances": {"defect": 1e-5},
    },
}


def demo_config(name: str) -> RunConfig:
    if name not in _DEMO_CONFIGS:
        raise ValueError(
            f"unknown demo {name!r}; available: {', '.join(sorted(_DEMO_CONFIGS))}"
        )
    return RunConfig.from_dict(_DEMO_CONFIGS[name])


def cmd_demo(name: str, out_dir: Path) -> RunReport:
    cfg = demo_config(name)
    t0 = time.perf_counter()
    report = cmd_solve_koopman(cfg, out_dir)
    report.command = f"demo:{name}"
    if name == "ns-kolmogorov":
        model = build_model(cfg)
        rng = np.random.default_rng(cfg.seed)
        quad = model.vf_jet.component(2)
        worst = 0.0
        for _ in range(16):
            x = rng.standard_normal(model.dim)
            worst = max(worst, abs(float(np.dot(quad(x), x))))
        report.data["energy_conservation_sup"] = worst
        report.passed = report.passed and worst <= 1e-12
    report.timings["total"] = time.perf_counter() - t0
    return report


# -- entry point ---------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foliate",
        description="invariant foliations and Koopman eigenfunctions with residual certificates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", type=Path, required=config_required,
                       help="TOML run configuration")
        p.add_argument("--out", type=Path, default=Path("foliate-out"),
                       help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--log", choices=("quiet", "normal", "debug"), default="normal",
                       help="debug prints per-degree divisor minima")

    p = sub.add_parser("check-spectrum", help="spectral and nonresonance report")
    common(p)
    p = sub.add_parser("solve-foliation", help="solve the foliation equations")
    common(p)
    p.add_argument("--force", action="store_true",
                   help="attempt the solve even when checks fail")
    p = sub.add_parser("solve-koopman", help="build a principal Koopman eigenfunction")
    common(p)
    p = sub.add_parser("verify", help="re-verify stored artifacts against a model")
    common(p)
    p.add_argument("--artifact", type=Path, action="append", default=[],
                   help="artifact JSON path (repeatable)")
    p = sub.add_parser("demo", help="run a built-in demonstration")
    p.add_argument("name", help=f"one of: {', '.join(sorted(_DEMO_CONFIGS))}")
    common(p, config_required=False)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out_dir = Path(args.out)
    level = {"quiet": logging.ERROR, "normal": logging.INFO,
             "debug": logging.DEBUG}[getattr(args, "log", "normal")]
    logging.basicConfig(level=level, format="%(name)s: %(message)s")
    logging.getLogger("foliate").setLevel(level)
    try:
        with _OutputLock(out_dir):
            if args.command == "demo":
                report = cmd_demo(args.name, out_dir)
            else:
                cfg = RunConfig.from_file(args.config)
                if args.seed is not None:
                    cfg.seed = int(args.seed)
                if args.command == "check-spectrum":
                    report = cmd_check_spectrum(cfg, out_dir)
                elif args.command == "solve-foliation":
                    report = cmd_solve_foliation(cfg, out_dir, force=args.force)
                elif args.command == "solve-koopman":
                    report = cmd_solve_koopman(cfg, out_dir)
                elif args.command == "verify":
                    report = cmd_verify(cfg, out_dir, args.artifact)
                else:  # pragma: no cover
                    raise ValueError(f"unhandled command {args.command}")
            report.write(out_dir)
    except ResonantDivisorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if level <= logging.INFO:
        status = "PASS" if report.passed else "FAIL"
        print(f"[{status}] {report.command}: report written to {out_dir / 'report.json'}")
    return 0 if report.passed else 2


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
