"""Config-driven experiment runner.

Usage::

    python -m robinspec run --config experiment.json [--output-dir out] [--seed 7]

Every run writes ``results.json`` (scalar metrics and per-k tables, no
timestamps), ``traces.csv`` (arc coordinate plus one column per trace) and,
last, ``manifest.json`` (effective config, its hash, version, wall-clock and
the list of files).  The record-oracle scenario also writes ``oracle.json``.

Exit codes: 0 success, 1 scenario failure, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, RobinSpecError
from .fields import boundary_field, volume_field
from .geometry import build_mesh, domain_from_dict, make_sigma
from .inversion import InversionParams, assemble_bsd, compare_bsd, default_eta, patch_basis
from .oracle import ForwardOracle, ReplayOracle
from .perturbation import hadamard_check, simplify_spectrum
from .reference import reference_data
from .spectral import ForwardModel, boundary_trace, cluster_eigenvalues

log = logging.getLogger(__name__)

SCENARIOS = ("forward", "hadamard-check", "simplify", "recover", "end-to-end", "record-oracle")
NEEDS_SIGMA = {"hadamard-check", "simplify", "recover", "end-to-end", "record-oracle"}
POSITIVE = ("h", "reg", "gap_tol", "zero_tol", "cauchy_tol", "dip_tol", "s0", "eps", "rtol")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


@dataclass
class ExperimentConfig:
    scenario: str
    domain: dict
    fields: dict
    sigma: tuple | None
    params: dict
    seed: int = 0
    output_dir: str = "out"
    oracle: dict = field(default_factory=lambda: {"kind": "forward"})

    @property
    def K(self) -> int:
        return int(self.params.get("K", 10))

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "domain": self.domain, "fields": self.fields,
                "sigma": None if self.sigma is None else list(self.sigma), "params": self.params,
                "seed": self.seed, "output_dir": self.output_dir, "oracle": self.oracle}

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode("utf-8")).hexdigest()


def _parse_sigma(raw):
    if raw is None:
        return None
    if isinstance(raw, dict):
        try:
            return float(raw["start"]), float(raw["end"])
        except KeyError as exc:
            raise ConfigError(f"sigma: missing field {exc.args[0]!r}") from None
    if isinstance(raw, (list, tuple)) and len(raw) == 2:
        return float(raw[0]), float(raw[1])
    raise ConfigError("sigma: expected {\"start\": s0, \"end\": s1} or [s0, s1]")


def load_config(raw: dict, output_dir: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Validate a config mapping; CLI overrides win over config keys."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: expected one of {', '.join(SCENARIOS)}, got {scenario!r}")
    if "domain" not in raw:
        raise ConfigError("domain: missing")
    domain_from_dict(raw["domain"])
    if scenario in NEEDS_SIGMA and raw.get("sigma") is None:
        raise ConfigError(f"sigma: required for scenario {scenario!r}")
    sigma = _parse_sigma(raw.get("sigma"))
    params = dict(raw.get("params", {}))
    for key in POSITIVE:
        if key in params and params[key] is not None and not float(params[key]) > 0:
            raise ConfigError(f"params.{key}: must be positive, got {params[key]!r}")
    for key in ("K", "J", "oracle_K", "k_max", "budget", "n_directions", "n_schedule", "fit_window"):
        if key in params and (not isinstance(params[key], int) or params[key] < 0):
            raise ConfigError(f"params.{key}: must be a nonnegative integer, got {params[key]!r}")
    if scenario == "simplify":
        for key in ("k_max", "eps"):
            if key not in params:
                raise ConfigError(f"params.{key}: required for scenario 'simplify'")
    oracle = dict(raw.get("oracle", {"kind": "forward"}))
    if oracle.get("kind", "forward") not in ("forward", "replay"):
        raise ConfigError(f"oracle.kind: expected 'forward' or 'replay', got {oracle.get('kind')!r}")
    if oracle.get("kind") == "replay":
        if scenario not in ("recover", "simplify"):
            raise ConfigError(f"oracle.kind: replay is only meaningful for recover/simplify, not {scenario!r}")
        if "path" not in oracle:
            raise ConfigError("oracle.path: required for a replay oracle")
    seed = int(raw.get("seed", 0)) if seed is None else int(seed)
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed: must fit in an unsigned 64-bit integer, got {seed}")
    out = output_dir if output_dir is not None else raw.get("output_dir", "out")
    return ExperimentConfig(scenario, dict(raw["domain"]), dict(raw.get("fields", {})), sigma,
                            params, seed, str(out), oracle)


# ------------------------------------------------------------ serialization

def _clean(obj):
    """JSON-ready copy: arrays to lists, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path: Path, obj) -> None:
    # float repr is the shortest string that round-trips binary64 exactly
    text = json.dumps(_clean(obj), sort_keys=True, indent=1, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def write_csv(path: Path, columns: dict) -> None:
    names = list(columns)
    n = max((len(v) for v in columns.values()), default=0)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            row = []
            for name in names:
                col = columns[name]
                x = col[i] if i < len(col) else float("nan")
                row.append("" if not math.isfinite(x) else format(float(x), ".17g"))
            w.writerow(row)


# ---------------------------------------------------------------- setup

@dataclass
class Setup:
    model: object
    omega0: np.ndarray
    sigma: object
    params: InversionParams
    eta: np.ndarray | None


def _setup(cfg: ExperimentConfig) -> Setup:
    mesh, bmesh = build_mesh(domain_from_dict(cfg.domain))
    q = volume_field(cfg.fields.get("q", 0.0), mesh, "fields.q")
    c = volume_field(cfg.fields.get("c", 1.0), mesh, "fields.c")
    model = ForwardModel(mesh, bmesh, q, c)
    omega0 = boundary_field(cfg.fields.get("omega0", 0.0), model.bmesh, "fields.omega0")
    sigma = make_sigma(model.bmesh, *cfg.sigma) if cfg.sigma is not None else None
    params = InversionParams.from_dict(cfg.params)
    eta = None
    if sigma is not None:
        if "eta" in cfg.fields:
            eta = boundary_field(cfg.fields["eta"], model.bmesh, "fields.eta") * sigma.mask()
        else:
            eta = default_eta(sigma)
    return Setup(model, omega0, sigma, params, eta)


def _oracle(cfg: ExperimentConfig, setup: Setup, K_needed: int):
    if cfg.oracle.get("kind", "forward") == "replay":
        try:
            return ReplayOracle.from_file(cfg.oracle["path"], n_boundary=setup.model.bmesh.size)
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"oracle.path: cannot load replay file {cfg.oracle['path']!r}: {exc}") from None
    K = int(cfg.params.get("oracle_K", K_needed + 2))
    if K < K_needed + 1:
        raise ConfigError(f"params.oracle_K: needs at least {K_needed + 1}, got {K}")
    return ForwardOracle(setup.model, K)


# ------------------------------------------------------------- scenarios

def _forward(cfg, setup):
    K = cfg.K
    es = setup.model.eigensystem(setup.omega0, K) if K else None
    vals = es.values if es is not None else np.zeros(0)
    clusters = cluster_eigenvalues(vals, setup.params.gap_tol)
    results = {
        "eigenvalues": vals, "residuals": es.residuals if es is not None else [],
        "clusters": [{"first": c.first, "last": c.last, "multiplicity": c.multiplicity,
                      "center": c.center} for c in clusters],
    }
    bm = setup.model.bmesh
    positions = setup.sigma.positions if setup.sigma is not None else np.arange(bm.size)
    columns = {"arc": bm.arc[positions]}
    for k in range(1, K + 1):
        columns[f"true_{k}"] = boundary_trace(es, k)[positions]
    status = {str(k): "ok" for k in range(1, K + 1)}
    return results, columns, status, True


def _hadamard(cfg, setup):
    K = cfg.K
    oracle = _oracle(cfg, setup, K)
    es = setup.model.eigensystem(setup.omega0, oracle.K)
    n_dir = int(cfg.params.get("n_directions", 4))
    dirs = patch_basis(setup.sigma, n_dir, cfg.params.get("shape", "smooth")).fields
    report = hadamard_check(es, oracle, dirs, cfg.params.get("h"), range(1, K + 1),
                            float(cfg.params.get("rtol", 1e-4)))
    status = {}
    for e in report.entries:
        prev = status.get(str(e["k"]), "ok")
        status[str(e["k"])] = e["status"] if e["status"] in ("mismatch", "multiple") else prev
    columns = {"arc": setup.sigma.arc}
    for j, w in enumerate(dirs):
        columns[f"direction_{j}"] = setup.sigma.restrict(w)
    results = report.to_dict()
    results["n_queries"] = oracle.n_solves
    return results, columns, status, not report.flagged


def _simplify(cfg, setup):
    k_max = int(cfg.params["k_max"])
    oracle = _oracle(cfg, setup, k_max)
    res = simplify_spectrum(oracle, setup.omega0, setup.sigma, k_max, float(cfg.params["eps"]),
                            cfg.seed, int(cfg.params.get("budget", 50)), cfg.params.get("gap_floor"))
    pert = res.omega - setup.omega0
    outside = ~setup.sigma.mask()
    results = res.to_dict()
    results.update(perturbation_sup=float(np.abs(pert).max(initial=0.0)),
                   perturbation_outside_sigma=float(np.abs(pert[outside]).max(initial=0.0)),
                   gaps=np.diff(res.eigenvalues[:k_max + 1]))
    columns = {"arc": setup.sigma.arc, "perturbation": setup.sigma.restrict(pert)}
    status = {str(k): "ok" for k in range(1, k_max + 1)}
    return results, columns, status, True


def _bsd_outputs(bsd, truth=None):
    columns = {"arc": bsd.sigma.arc}
    for e in bsd.entries:
        if truth is not None:
            columns[f"true_{e.k}"] = truth[e.k - 1]
        columns[f"recovered_{e.k}"] = e.trace if e.trace is not None else np.full(bsd.sigma.size, np.nan)
    status = {str(e.k): e.status for e in bsd.entries}
    table = [{"k": e.k, "eigenvalue": e.eigenvalue, "status": e.status,
              "sign_ambiguous": e.sign_ambiguous, "provenance": e.provenance} for e in bsd.entries]
    return columns, status, table


def _recover(cfg, setup, record=False):
    K = cfg.K
    oracle = _oracle(cfg, setup, K)
    bsd = assemble_bsd(oracle, setup.omega0, K, setup.sigma, setup.params, setup.eta)
    columns, status, table = _bsd_outputs(bsd)
    results = {"K": K, "eigenvalues": bsd.eigenvalues, "entries": table,
               "n_failed": sum(1 for e in bsd.entries if e.status != "ok")}
    extra = {}
    if record:
        path = Path(cfg.output_dir) / "oracle.json"
        oracle.save(path)
        extra["oracle.json"] = path
        results["n_records"] = len(oracle.records())
    return results, columns, status, results["n_failed"] == 0, extra


def _end_to_end(cfg, setup):
    K = cfg.K
    oracle = _oracle(cfg, setup, K)
    bsd = assemble_bsd(oracle, setup.omega0, K, setup.sigma, setup.params, setup.eta)
    values, traces = reference_data(setup.model, setup.omega0, setup.sigma, K, setup.eta,
                                    gap_tol=setup.params.gap_tol)
    cmp = compare_bsd(bsd, values, traces)
    columns, status, table = _bsd_outputs(bsd, traces)
    results = {"K": K, "eigenvalues": bsd.eigenvalues, "true_eigenvalues": values,
               "entries": table, "n_queries": oracle.n_solves, **cmp}
    return results, columns, status, cmp["n_failed"] == 0


def run(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Execute one scenario and write its outputs; returns ``(exit_code, manifest)``."""
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("manifest.json", "results.json", "traces.csv", "oracle.json"):
        if not (name == "oracle.json" and cfg.scenario != "record-oracle"):
            (out / name).unlink(missing_ok=True)
    files = {}
    code = EXIT_OK
    status = {}
    try:
        setup = _setup(cfg)
        extra = {}
        if cfg.scenario == "forward":
            results, columns, status, ok = _forward(cfg, setup)
        elif cfg.scenario == "hadamard-check":
            results, columns, status, ok = _hadamard(cfg, setup)
        elif cfg.scenario == "simplify":
            results, columns, status, ok = _simplify(cfg, setup)
        elif cfg.scenario in ("recover", "record-oracle"):
            results, columns, status, ok, extra = _recover(cfg, setup, cfg.scenario == "record-oracle")
        else:
            results, columns, status, ok = _end_to_end(cfg, setup)
        results = {"scenario": cfg.scenario, "ok": ok, **results}
        write_csv(out / "traces.csv", columns)
        files["traces.csv"] = str(out / "traces.csv")
        files.update({k: str(v) for k, v in extra.items()})
        code = EXIT_OK if ok else EXIT_FAIL
    except ConfigError:
        raise
    except (RobinSpecError, ValueError, np.linalg.LinAlgError) as exc:
        log.error("scenario %s failed: %s", cfg.scenario, exc)
        results = {"scenario": cfg.scenario, "ok": False, "error": _error_dict(exc)}
        code = EXIT_FAIL
    write_json(out / "results.json", results)
    files["results.json"] = str(out / "results.json")
    manifest = {
        "config": cfg.to_dict(), "config_sha256": cfg.digest(), "version": __version__,
        "wall_clock_s": time.perf_counter() - t0, "exit_code": code, "files": files,
        "status": status,
    }
    write_json(out / "manifest.json", manifest)
    return code, manifest


def _error_dict(exc) -> dict:
    d = {"type": type(exc).__name__, "message": str(exc)}
    for attr in ("index", "key", "worst_residual", "band", "history"):
        if hasattr(exc, attr):
            d[attr] = getattr(exc, attr)
    return d


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="robinspec", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("--config", required=True, type=Path)
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--seed", default=None, type=int)
    p_run.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = json.loads(args.config.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(raw, args.output_dir, args.seed)
        code, manifest = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if code == EXIT_FAIL:
        print(f"scenario {cfg.scenario} failed; see {cfg.output_dir}/results.json", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
