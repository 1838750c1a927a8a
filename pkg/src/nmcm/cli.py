"""Scenario runner: ``nmcm <scenario> --config <path> [--key value]... --out <dir>``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .benchmark import (
    DEFAULT_STATE,
    MODELS,
    LorentzianParams,
    cm_generator,
    exact_G,
    run_benchmark,
)
from .chain import (
    CollisionChainConfig,
    ResourceLimitError,
    _full_chain_tensors,
    _recursive_joint_matrices,
    reduced_map_recursion,
    reduced_recursion,
    simulate_full_chain,
    simulate_recursive_joint,
    system_marginal,
    verify_delta_recursion,
    map_Ej,
)
from .core import apply_superop, batched_cpt_data, trace_distance, unvec, vec
from .io import emit_csv, emit_svg, sha256_file
from .solvers import (
    SeriesTruncationError,
    TimeGrid,
    lambda_series,
    series_truncation_order,
    solve_cm_me,
    trace_weight_sum,
)

SCENARIOS = ("discrete", "continuum", "benchmark", "certify")
EXACT_TOL = 1e-10


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, allow_inf_nan=False)

    scenario: Literal["discrete", "continuum", "benchmark", "certify"]
    n_steps: int = Field(6, ge=1, le=64)
    p: float = Field(0.5, ge=0.0, le=1.0)
    tau: float = Field(0.1, gt=0.0)
    gamma: float | None = Field(None, ge=0.0)
    gamma0: float = Field(10.0, gt=0.0)
    lam: float = Field(1.0, gt=0.0, alias="lambda")
    t_max: float | None = Field(None, gt=0.0)
    n_points: int = Field(2001, ge=5, le=200001)
    models: list[str] | None = None
    tol: float = Field(1e-8, gt=0.0, lt=1.0)
    seed: int = Field(0, ge=0)
    output_dir: str = "out"

    @field_validator("models", mode="before")
    @classmethod
    def _split_models(cls, v):
        if isinstance(v, str):
            v = [m.strip() for m in v.split(",") if m.strip()]
        return v

    @field_validator("models")
    @classmethod
    def _known_models(cls, v):
        if v is None:
            return v
        if not v:
            raise ValueError("models must not be empty")
        bad = [m for m in v if m not in MODELS]
        if bad:
            raise ValueError(f"unknown model(s) {bad}; choose from {', '.join(MODELS)}")
        return list(dict.fromkeys(v))

    @property
    def params(self) -> LorentzianParams:
        return LorentzianParams(self.gamma0, self.lam)

    @property
    def memory_rate(self) -> float:
        return self.lam if self.gamma is None else self.gamma

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.t_max if self.t_max is not None else 10.0 / self.lam, self.n_points)

    def echo(self) -> dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)


class Check(BaseModel):
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    required: bool = True
    time: float | None = None


class OutputFile(BaseModel):
    path: str
    sha256: str


class RunReport(BaseModel):
    config: dict[str, Any]
    checks: list[Check]
    wall_time_s: float
    files: list[OutputFile]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    def first_failure(self) -> Check | None:
        return next((c for c in self.checks if c.required and not c.passed), None)


# --------------------------------------------------------------------------
# scenarios


def _pop_coh(states: np.ndarray, rho0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return states[:, 1, 1].real / rho0[1, 1].real, np.abs(states[:, 0, 1]) / abs(rho0[0, 1])


def _series_entry(t, states, rho0, maps) -> dict[str, np.ndarray]:
    pop, coh = _pop_coh(np.asarray(states), rho0)
    lmin, tdev = batched_cpt_data(np.asarray(maps))
    return {"t": np.asarray(t, dtype=float), "population_norm": pop, "coherence_abs_norm": coh,
            "min_choi_eig": lmin, "trace_dev": tdev}


def _cpt_check(name: str, lmin: np.ndarray, tdev: np.ndarray, t: np.ndarray, tol: float,
               required: bool = True) -> Check:
    bad = np.flatnonzero((lmin < -tol) | (tdev > tol))
    return Check(name=name, passed=bad.size == 0, value=float(np.min(lmin)), threshold=-tol,
                 required=required, time=float(t[bad[0]]) if bad.size else None)


def _chain_maps(cfg: CollisionChainConfig, path: str) -> np.ndarray:
    """Per-step system maps of one simulation path, built column by column from basis inputs."""
    d = cfg.dim_s
    cols = []
    for k in range(d * d):
        e = np.zeros(d * d, dtype=complex)
        e[k] = 1.0
        x0 = unvec(e, d)
        if path == "full_chain":
            joints = _full_chain_tensors(cfg, x0)
        else:
            joints = _recursive_joint_matrices(cfg, x0)
        dim = cfg.joint_dim
        cols.append(np.stack([vec(system_marginal(cfg, s.reshape(dim, dim))) for s in joints]))
    return np.stack(cols, axis=-1)


def _scenario_discrete(cfg: RunConfig):
    chain = CollisionChainConfig.exchange(cfg.n_steps, cfg.p, cfg.tau, g=cfg.params.omega)
    rho0 = chain.system_init
    t = cfg.tau * np.arange(cfg.n_steps + 1)
    checks: list[Check] = []
    series: dict[str, dict[str, np.ndarray]] = {}

    reduced = np.stack(reduced_recursion(chain))
    red_maps = reduced_map_recursion(chain)
    series["reduced_recursion"] = _series_entry(t, reduced, rho0, red_maps)
    try:
        full = np.stack([system_marginal(chain, s.joint) for s in simulate_full_chain(chain)])
        joint = np.stack([system_marginal(chain, s.joint) for s in simulate_recursive_joint(chain)])
    except ResourceLimitError:
        full = joint = None
    if full is not None:
        series["full_chain"] = _series_entry(t, full, rho0, _chain_maps(chain, "full_chain"))
        series["joint_recursion"] = _series_entry(t, joint, rho0, _chain_maps(chain, "joint_recursion"))
        dev = max(max(trace_distance(a, b), trace_distance(a, c), trace_distance(b, c))
                  for a, b, c in zip(full, joint, reduced))
        checks.append(Check(name="paths_agree", passed=dev <= EXACT_TOL, value=dev, threshold=EXACT_TOL))
    if cfg.n_steps >= 3:
        rep = verify_delta_recursion(chain)
        checks.append(Check(name="delta_recursion", passed=rep.max_deviation <= EXACT_TOL,
                            value=rep.max_deviation, threshold=EXACT_TOL))
    if cfg.p == 1.0:
        target = apply_superop(map_Ej(cfg.n_steps, chain), rho0)
        dev = trace_distance(reduced[-1], target)
        checks.append(Check(name="single_ancilla_limit", passed=dev <= EXACT_TOL, value=dev,
                            threshold=EXACT_TOL))
    if cfg.p == 0.0:
        e1 = map_Ej(1, chain)
        target = apply_superop(np.linalg.matrix_power(e1, cfg.n_steps), rho0)
        dev = trace_distance(reduced[-1], target)
        checks.append(Check(name="markov_limit", passed=dev <= EXACT_TOL, value=dev, threshold=EXACT_TOL))
    for name in sorted(series):
        s = series[name]
        checks.append(_cpt_check(f"cpt:{name}", s["min_choi_eig"], s["trace_dev"], t, cfg.tol))
    return series, checks


def _scenario_continuum(cfg: RunConfig):
    grid = cfg.grid
    gamma = cfg.memory_rate
    gen = cm_generator(cfg.params, grid)
    series_tol = min(cfg.tol, 1e-10)
    volterra = solve_cm_me(gen, gamma, grid)
    series_traj = lambda_series(gen, gamma, grid, tol=series_tol)
    rho0 = DEFAULT_STATE
    t = grid.times
    out = {
        "cm_series": _series_entry(t, series_traj.apply(rho0), rho0, series_traj.maps),
        "cm_volterra": _series_entry(t, volterra.apply(rho0), rho0, volterra.maps),
    }
    checks = [_cpt_check(f"cpt:{name}", s["min_choi_eig"], s["trace_dev"], t, cfg.tol)
              for name, s in sorted(out.items())]
    diff = float(np.max(np.linalg.norm(volterra.maps - series_traj.maps, ord=2, axis=(1, 2))))
    agree_tol = max(1e-6, 10 * cfg.tol)
    checks.append(Check(name="solvers_agree", passed=diff <= agree_tol, value=diff, threshold=agree_tol))
    order = series_truncation_order(gamma * grid.t_max, series_tol)
    wdev = float(np.max(np.abs(trace_weight_sum(gamma, t, order) - 1.0)))
    checks.append(Check(name="trace_weight_identity", passed=wdev <= 1e-10, value=wdev, threshold=1e-10))
    return out, checks


def _scenario_benchmark(cfg: RunConfig, required_models: tuple[str, ...] | None):
    grid = cfg.grid
    models = cfg.models or list(MODELS)
    result = run_benchmark(cfg.params, grid, models=models, tol=cfg.tol)
    series = {}
    checks = []
    for name, s in result.models.items():
        cert = s.certification
        series[name] = {"t": grid.times, "population_norm": s.population_norm,
                        "coherence_abs_norm": s.coherence_abs_norm,
                        "min_choi_eig": cert.min_choi_eig, "trace_dev": cert.trace_dev}
        required = required_models is None or name in required_models
        checks.append(Check(name=f"cpt:{name}", passed=cert.passed, value=float(np.min(cert.min_choi_eig)),
                            threshold=-cfg.tol, required=required, time=cert.first_violation_time))
    if "cm" in result.models:
        g = np.abs(exact_G(cfg.params, grid.times))
        dev = float(np.max(np.abs(result.models["cm"].coherence_abs_norm - g)))
        checks.append(Check(name="cm_coherence_vs_exact", passed=dev <= 1e-6, value=dev, threshold=1e-6))
    return series, checks


def _run_scenario(cfg: RunConfig):
    if cfg.scenario == "discrete":
        return _scenario_discrete(cfg)
    if cfg.scenario == "continuum":
        return _scenario_continuum(cfg)
    if cfg.scenario == "benchmark":
        # rival equations are reported but only the CM trajectory must certify
        return _scenario_benchmark(cfg, required_models=("cm",))
    if cfg.models is None:
        cfg = cfg.model_copy(update={"models": ["cm"]})
    return _scenario_benchmark(cfg, required_models=None)


def run(config: RunConfig) -> RunReport:
    start = time.perf_counter()
    series, checks = _run_scenario(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [emit_csv(series, out / f"{config.scenario}.csv")]
    if config.scenario in ("benchmark", "certify"):
        files.append(emit_svg(series, out / f"{config.scenario}.svg"))
    report = RunReport(
        config=config.echo(),
        checks=checks,
        wall_time_s=time.perf_counter() - start,
        files=[OutputFile(path=str(f), sha256=sha256_file(f)) for f in files],
    )
    (out / "report.json").write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return report


# --------------------------------------------------------------------------
# command line


def _parse_overrides(tokens: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) <= 2:
            raise ValueError(f"unexpected argument {tok!r}")
        key, _, value = tok[2:].partition("=")
        if not _:
            if i + 1 >= len(tokens):
                raise ValueError(f"missing value for --{key}")
            value = tokens[i + 1]
            i += 1
        out[key.replace("-", "_")] = value
        i += 1
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValueError(message)


def load_config(argv: list[str]) -> RunConfig:
    parser = _Parser(prog="nmcm", description="Run a collision-model scenario and write CSV/SVG outputs.")
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", type=Path)
    parser.add_argument("--out")
    args, rest = parser.parse_known_args(argv)
    data: dict[str, Any] = {}
    if args.config is not None:
        loaded = yaml.safe_load(args.config.read_text(encoding="utf-8"))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {args.config} must hold a mapping")
        data.update(loaded)
    data.update(_parse_overrides(rest))
    data["scenario"] = args.scenario
    if args.out is not None:
        data["output_dir"] = args.out
    return RunConfig.model_validate(data)


def _one_line(exc: Exception) -> str:
    if isinstance(exc, ValidationError):
        err = exc.errors()[0]
        loc = ".".join(str(x) for x in err["loc"]) or "config"
        return f"invalid config: {loc}: {err['msg']}"
    return " ".join(str(exc).split()) or type(exc).__name__


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = load_config(argv)
        report = run(cfg)
    except SystemExit as exc:  # argparse usage errors
        return 0 if exc.code == 0 else 2
    except (ValidationError, ValueError, OSError, yaml.YAMLError, ResourceLimitError,
            SeriesTruncationError) as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 2
    for c in report.checks:
        tag = "PASS" if c.passed else ("FAIL" if c.required else "info")
        extra = "" if c.time is None else f" first violation at t={c.time:.6g}"
        val = "" if c.value is None else f" value={c.value:.3e}"
        print(f"{tag} {c.name}{val}{extra}")
    print(f"report: {Path(cfg.output_dir) / 'report.json'}")
    failed = report.first_failure()
    if failed is not None:
        where = "" if failed.time is None else f" at t={failed.time:.6g}"
        print(f"certification failed: {failed.name}{where}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
