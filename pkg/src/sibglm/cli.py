"""Command-line front end: panel files, fitting, denoising, benchmarks.

Panel files are UTF-8 CSV with a header row; column names are prefixed
``x_`` (covariates), ``y_`` (response series), or ``truth_`` (optional
ground-truth columns). Lines starting with ``#`` before the header carry
``key = value`` metadata; every command echoes its resolved
configuration into that header. Numbers are serialized with 17
significant digits so reruns with the same seed are byte-identical.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import benchmark as bench
from . import residuals as res
from . import sibling
from .families import DomainError, Family, family_from_name
from .glm import (
    ConvergenceError,
    Design,
    SingularDesignError,
    design_with_intercept,
    fit_glm,
)
from .inference import sandwich
from .simulate import GenerationError, SimConfig, generate


class PanelFormatError(ValueError):
    """A panel file violates the CSV panel format."""


def _fmt(v) -> str:
    if isinstance(v, float) or isinstance(v, np.floating):
        return format(float(v), ".17g")
    return str(v)


@dataclass
class PanelData:
    x_names: list[str]
    x: np.ndarray
    y_names: list[str]
    y: np.ndarray
    truth: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.y.shape[0]


def read_panel(path: str) -> PanelData:
    """Parse a panel CSV; parse errors carry row and column locations."""
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                if header is None and "=" in line:
                    key, _, value = line[1:].partition("=")
                    meta[key.strip()] = value.strip()
                continue
            cells = line.split(",")
            if header is None:
                header = [c.strip() for c in cells]
                continue
            if len(cells) != len(header):
                raise PanelFormatError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}"
                )
            rows.append(cells)
    if header is None:
        raise PanelFormatError(f"{path}: no header row found")
    if not rows:
        raise PanelFormatError(f"{path}: no data rows")

    data = np.empty((len(rows), len(header)))
    for i, cells in enumerate(rows):
        for j, cell in enumerate(cells):
            cell = cell.strip()
            if cell == "":
                raise PanelFormatError(
                    f"{path}: missing cell at row {i + 1}, column {header[j]!r}"
                )
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise PanelFormatError(
                    f"{path}: bad number {cell!r} at row {i + 1}, column {header[j]!r}"
                ) from None

    x_idx = [j for j, n in enumerate(header) if n.startswith("x_")]
    y_idx = [j for j, n in enumerate(header) if n.startswith("y_")]
    t_idx = [j for j, n in enumerate(header) if n.startswith("truth_")]
    known = set(x_idx) | set(y_idx) | set(t_idx)
    unknown = [header[j] for j in range(len(header)) if j not in known]
    if unknown:
        raise PanelFormatError(
            f"{path}: unknown columns {unknown}; names must start with x_, y_, or truth_"
        )
    if not y_idx:
        raise PanelFormatError(f"{path}: need at least one y_ column")

    return PanelData(
        x_names=[header[j][2:] for j in x_idx],
        x=data[:, x_idx],
        y_names=[header[j][2:] for j in y_idx],
        y=data[:, y_idx],
        truth={header[j]: data[:, j] for j in t_idx},
        meta=meta,
    )


def _write_table(path: str, meta: dict[str, str], columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    m = len(next(iter(columns.values())))
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(meta):
            fh.write(f"# {key} = {meta[key]}\n")
        fh.write(",".join(names) + "\n")
        for i in range(m):
            fh.write(",".join(_fmt(columns[n][i]) for n in names) + "\n")


# -- configuration plumbing -------------------------------------------


def _series_names(q: int) -> list[str]:
    width = max(2, len(str(q - 1)))
    return [f"s{j:0{width}d}" for j in range(q)]


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults, optional JSON config file, and explicit flags."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        for key, value in loaded.items():
            if key not in defaults:
                raise ValueError(f"unknown config key {key!r}")
            resolved[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _meta_from_config(command: str, cfg: dict) -> dict[str, str]:
    meta = {"command": command}
    for key, value in cfg.items():
        meta[key] = _fmt(value) if value is not None else ""
    return meta


def _family(cfg: dict) -> Family:
    return family_from_name(cfg["family"], cfg["dispersion"])


def _design_from_file(panel: PanelData) -> Design:
    x = panel.x if panel.x.shape[1] else None
    return design_with_intercept(x, names=panel.x_names, m=panel.m)


def _target_index(panel: PanelData, target: str | None) -> int:
    if target is None:
        return 0
    if target not in panel.y_names:
        raise ValueError(f"unknown target series {target!r}; have {panel.y_names}")
    return panel.y_names.index(target)


def _panel_from_file(panel: PanelData, family: Family, target: str | None) -> tuple[sibling.Panel, int]:
    target_index = _target_index(panel, target)
    return (
        sibling.Panel(
            design=_design_from_file(panel),
            responses=panel.y,
            family=family,
            target_index=target_index,
        ),
        target_index,
    )


# -- commands ----------------------------------------------------------

SIMULATE_DEFAULTS = {
    "family": "poisson",
    "dispersion": 1.0,
    "m": 120,
    "q": 20,
    "sigma_eps": 0.1,
    "seed": 0,
    "noise_scheme": "uniform",
    "output": None,
}


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _resolve(args, SIMULATE_DEFAULTS)
    if not cfg["output"]:
        raise ValueError("simulate requires --output")
    family = _family(cfg)
    truth = generate(
        SimConfig(
            family=family,
            m=cfg["m"],
            q=cfg["q"],
            sigma_eps=cfg["sigma_eps"],
            seed=cfg["seed"],
            noise_coefficient_scheme=cfg["noise_scheme"],
        )
    )
    names = _series_names(cfg["q"])
    columns: dict[str, np.ndarray] = {"x_x": truth.x}
    for j, name in enumerate(names):
        columns[f"y_{name}"] = truth.y[:, j]
    columns["truth_noise"] = truth.noise
    for j, name in enumerate(names):
        columns[f"truth_z_{name}"] = truth.signal[:, j] + truth.theta_shift

    meta = _meta_from_config("simulate", cfg)
    meta["truth_theta_shift"] = _fmt(truth.theta_shift)
    for j, name in enumerate(names):
        meta[f"truth_w_x_{name}"] = _fmt(truth.x_coefs[j])
        meta[f"truth_w_n_{name}"] = _fmt(truth.noise_coefs[j])
    _write_table(cfg["output"], meta, columns)
    print(f"seed = {cfg['seed']}")
    return 0


FIT_DEFAULTS = {
    "family": "poisson",
    "dispersion": 1.0,
    "input": None,
    "output": None,
    "target": None,
}


def cmd_fit(args: argparse.Namespace) -> int:
    cfg = _resolve(args, FIT_DEFAULTS)
    if not cfg["input"] or not cfg["output"]:
        raise ValueError("fit requires --input and --output")
    family = _family(cfg)
    panel = read_panel(cfg["input"])
    design = _design_from_file(panel)
    target_index = _target_index(panel, cfg["target"])
    y1 = panel.y[:, target_index]
    fit = fit_glm(design, y1, family)
    sw = sandwich(fit, design, y1)

    meta = _meta_from_config("fit", cfg)
    meta["target"] = panel.y_names[target_index]
    meta["loglik"] = _fmt(fit.loglik)
    meta["converged"] = str(fit.converged).lower()
    meta["iterations"] = str(fit.iterations)
    columns = {
        "coefficient": np.array(design.column_names, dtype=object),
        "estimate": fit.beta,
        "stderr": sw.standard_errors,
    }
    _write_table(cfg["output"], meta, columns)
    return 0


DENOISE_DEFAULTS = {
    "family": "poisson",
    "dispersion": 1.0,
    "estimator": "sglm",
    "residual": res.FISHER,
    "noise_strategy": sibling.REGRESSION,
    "step3_with_x": False,
    "input": None,
    "output": None,
    "target": None,
}


def _truth_metrics(
    panel: PanelData, target_index: int, signal_hat, noise_hat, w_hat
) -> dict[str, str]:
    out: dict[str, str] = {}
    zkey = f"truth_z_{panel.y_names[target_index]}"
    if zkey in panel.truth:
        out["metric_mse"] = _fmt(float(np.mean((signal_hat - panel.truth[zkey]) ** 2)))
    if "truth_noise" in panel.truth and noise_hat is not None:
        n = panel.truth["truth_noise"]
        if np.std(noise_hat) > 0 and np.std(n) > 0:
            out["metric_noise_corr"] = _fmt(float(np.corrcoef(noise_hat, n)[0, 1]))
    wkey = f"truth_w_x_{panel.y_names[target_index]}"
    if w_hat is not None and wkey in panel.meta:
        w_true = float(panel.meta[wkey])
        out["metric_bias"] = _fmt((w_hat - w_true) / w_true)
    return out


def cmd_denoise(args: argparse.Namespace) -> int:
    cfg = _resolve(args, DENOISE_DEFAULTS)
    if not cfg["input"] or not cfg["output"]:
        raise ValueError("denoise requires --input and --output")
    if cfg["estimator"] not in bench.ESTIMATORS:
        raise ValueError(f"unknown estimator {cfg['estimator']!r}")
    family = _family(cfg)
    panel = read_panel(cfg["input"])
    p, target_index = _panel_from_file(panel, family, cfg["target"])
    y1 = panel.y[:, target_index]

    meta = _meta_from_config("denoise", cfg)
    meta["target"] = panel.y_names[target_index]
    w_hat = None

    if cfg["estimator"] == bench.SGLM:
        out = sibling.sglm_denoise(
            p,
            residual_kind=cfg["residual"],
            include_x=cfg["step3_with_x"],
            strategy=cfg["noise_strategy"],
        )
        noise_hat, signal_hat, mu_hat = out.noise_hat, out.signal_hat, out.refit.mu
        refit_design = Design(
            np.column_stack([p.design.x, out.noise_hat]),
            (*p.design.column_names, "noise_hat"),
        )
        sw = sandwich(out.refit, refit_design, y1)
        for name, est, se in zip(refit_design.column_names, out.refit.beta, sw.standard_errors):
            meta[f"coef_{name}"] = _fmt(est)
            meta[f"stderr_{name}"] = _fmt(se)
        meta["converged"] = str(out.refit.converged).lower()
        meta["iterations"] = str(out.refit.iterations)
        if len(panel.x_names) == 1:
            w_hat = float(out.refit.beta[1])
    elif cfg["estimator"] == bench.GLM_ESTIMATOR:
        fit = fit_glm(p.design, y1, family)
        sw = sandwich(fit, p.design, y1)
        noise_hat = np.zeros(panel.m)
        signal_hat, mu_hat = fit.eta, fit.mu
        for name, est, se in zip(p.design.column_names, fit.beta, sw.standard_errors):
            meta[f"coef_{name}"] = _fmt(est)
            meta[f"stderr_{name}"] = _fmt(se)
        meta["converged"] = str(fit.converged).lower()
        meta["iterations"] = str(fit.iterations)
        if len(panel.x_names) == 1:
            w_hat = float(fit.beta[1])
    else:
        ty = bench.working_scale(family, panel.y)
        aux = np.delete(ty, target_index, axis=1)
        if cfg["estimator"] == bench.HALF_SIBLING:
            signal_hat = sibling.half_sibling(ty[:, target_index], aux)
        else:
            signal_hat = sibling.three_quarter_sibling(panel.x, ty[:, target_index], aux)
        noise_hat = ty[:, target_index] - signal_hat
        mu_hat = np.expm1(signal_hat) if family.kind in ("poisson", "gamma") else signal_hat

    meta.update(_truth_metrics(panel, target_index, signal_hat, noise_hat, w_hat))
    _write_table(
        cfg["output"],
        meta,
        {"noise_hat": noise_hat, "signal_hat": signal_hat, "mu_hat": mu_hat},
    )
    return 0


RESIDUALS_DEFAULTS = {
    "family": "poisson",
    "dispersion": 1.0,
    "input": None,
    "output": None,
    "proxy_column": None,
}


def cmd_residuals(args: argparse.Namespace) -> int:
    cfg = _resolve(args, RESIDUALS_DEFAULTS)
    if not cfg["input"] or not cfg["output"]:
        raise ValueError("residuals requires --input and --output")
    family = _family(cfg)
    panel = read_panel(cfg["input"])
    design = _design_from_file(panel)

    proxy = None
    if cfg["proxy_column"]:
        name = cfg["proxy_column"]
        if name in panel.truth:
            proxy = panel.truth[name]
        elif name.startswith("x_") and name[2:] in panel.x_names:
            proxy = panel.x[:, panel.x_names.index(name[2:])]
        elif name.startswith("y_") and name[2:] in panel.y_names:
            proxy = panel.y[:, panel.y_names.index(name[2:])]
        else:
            raise ValueError(f"unknown proxy column {name!r}")

    meta = _meta_from_config("residuals", cfg)
    columns: dict[str, np.ndarray] = {}
    for j, sname in enumerate(panel.y_names):
        fit = fit_glm(design, panel.y[:, j], family)
        for kind in res.RESIDUAL_KINDS:
            values = res.compute(kind, fit, panel.y[:, j], design=design).values
            columns[f"{kind}_{sname}"] = values
            if proxy is not None:
                corr = float(np.corrcoef(values, proxy)[0, 1]) if np.std(values) > 0 else float("nan")
                meta[f"corr_{kind}_{sname}"] = _fmt(corr)
    _write_table(cfg["output"], meta, columns)
    return 0


BENCHMARK_DEFAULTS = {
    "family": "poisson",
    "dispersion": 1.0,
    "m": 120,
    "sigma_eps": 0.1,
    "seed": 0,
    "q_grid": "2,6,11,21",
    "estimator": "glm,sglm",
    "residual": res.FISHER,
    "noise_strategy": sibling.REGRESSION,
    "step3_with_x": False,
    "noise_scheme": "uniform",
    "replicates": 100,
    "jobs": 1,
    "output": None,
}


def _parse_list(value, parse=str) -> list:
    if isinstance(value, (list, tuple)):
        return [parse(v) for v in value]
    return [parse(v.strip()) for v in str(value).split(",") if v.strip()]


def build_cells(cfg: dict) -> list[bench.CellSpec]:
    family = _family(cfg)
    q_grid = _parse_list(cfg["q_grid"], int)
    if not q_grid:
        raise ValueError("q_grid must be nonempty")
    if any(q < 2 for q in q_grid):
        raise ValueError("q_grid entries must be >= 2 (target plus auxiliaries)")
    estimators = _parse_list(cfg["estimator"])
    kinds = _parse_list(cfg["residual"])
    for e in estimators:
        if e not in bench.ESTIMATORS:
            raise ValueError(f"unknown estimator {e!r}")
    for k in kinds:
        if k not in res.RESIDUAL_KINDS:
            raise ValueError(f"unknown residual kind {k!r}")

    cells = []
    for q in q_grid:
        for estimator in estimators:
            cell_kinds = kinds if estimator == bench.SGLM else [kinds[0]]
            for kind in cell_kinds:
                cells.append(
                    bench.CellSpec(
                        family=family,
                        m=cfg["m"],
                        q=q,
                        estimator=estimator,
                        residual_kind=kind,
                        sigma_eps=cfg["sigma_eps"],
                        include_x=cfg["step3_with_x"],
                        strategy=cfg["noise_strategy"],
                        noise_scheme=cfg["noise_scheme"],
                        replicates=cfg["replicates"],
                        master_seed=cfg["seed"],
                    )
                )
    return cells


def cmd_benchmark(args: argparse.Namespace) -> int:
    cfg = _resolve(args, BENCHMARK_DEFAULTS)
    if not cfg["output"]:
        raise ValueError("benchmark requires --output")
    if cfg["replicates"] < 1:
        raise ValueError("replicates must be >= 1")
    cells = build_cells(cfg)

    results: list[bench.CellResult] = [None] * len(cells)
    started = time.perf_counter()
    if cfg["jobs"] > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            futures = {pool.submit(bench.run_cell, c): i for i, c in enumerate(cells)}
            for fut in concurrent.futures.as_completed(futures):
                results[futures[fut]] = fut.result()
    else:
        for i, cell in enumerate(cells):
            t0 = time.perf_counter()
            results[i] = bench.run_cell(cell)
            print(
                f"cell q={cell.q} estimator={cell.estimator} residual={cell.residual_kind}: "
                f"{time.perf_counter() - t0:.2f}s",
                file=sys.stderr,
            )
    print(f"benchmark wall clock: {time.perf_counter() - started:.2f}s", file=sys.stderr)

    header = [
        "family", "m", "sigma_eps", "q", "estimator", "residual",
        "metric", "mean", "stderr", "replicates", "status", "note",
    ]
    lines = []
    for cell, result in zip(cells, results):
        prefix = [
            cell.family.kind, str(cell.m), _fmt(cell.sigma_eps), str(cell.q),
            cell.estimator,
            cell.residual_kind if cell.estimator == bench.SGLM else "-",
        ]
        if result.error is not None:
            lines.append(prefix + ["", "", "", str(cell.replicates), "failed", result.error])
            continue
        for metric in bench.METRIC_NAMES:
            lines.append(
                prefix
                + [
                    metric,
                    _fmt(result.mean(metric)),
                    _fmt(result.stderr(metric)),
                    str(cell.replicates),
                    "ok",
                    "",
                ]
            )

    meta = _meta_from_config("benchmark", cfg)
    del meta["jobs"]  # execution detail; bytes must not depend on it
    with open(cfg["output"], "w", encoding="utf-8") as fh:
        for key in sorted(meta):
            fh.write(f"# {key} = {meta[key]}\n")
        fh.write(",".join(header) + "\n")
        for row in lines:
            fh.write(",".join(row) + "\n")
    return 0


# -- argument parsing --------------------------------------------------


def _add_common(sp: argparse.ArgumentParser, *names: str) -> None:
    if "family" in names:
        sp.add_argument("--family", choices=("gaussian", "poisson", "bernoulli", "gamma"))
        sp.add_argument("--dispersion", type=float, help="variance (gaussian) or shape (gamma)")
    if "io" in names:
        sp.add_argument("--input", help="input panel CSV")
        sp.add_argument("--output", help="output file path")
    if "seed" in names:
        sp.add_argument("--seed", type=int)
    sp.add_argument("--config", help="JSON config file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sibglm",
        description="Sibling regression for generalized linear models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="write a synthetic panel with ground truth")
    _add_common(sp, "family", "io", "seed")
    sp.add_argument("--m", type=int, help="observations per series")
    sp.add_argument("--q", type=int, help="number of series (target + auxiliaries)")
    sp.add_argument("--sigma-eps", dest="sigma_eps", type=float)
    sp.add_argument("--noise-scheme", dest="noise_scheme", choices=("uniform", "zero", "one"))
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit one GLM to a target series")
    _add_common(sp, "family", "io")
    sp.add_argument("--target", help="y_ column to fit (default: first)")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("denoise", help="estimate the denoised series for a target")
    _add_common(sp, "family", "io")
    sp.add_argument("--target", help="y_ column to denoise (default: first)")
    sp.add_argument("--estimator", choices=bench.ESTIMATORS)
    sp.add_argument("--residual", choices=res.RESIDUAL_KINDS)
    sp.add_argument("--noise-strategy", dest="noise_strategy", choices=sibling.NOISE_STRATEGIES)
    sp.add_argument(
        "--step3-with-x", dest="step3_with_x", action="store_const", const=True,
        help="condition the residual regressions on the covariates as well",
    )
    sp.set_defaults(func=cmd_denoise)

    sp = sub.add_parser("residuals", help="write all residual kinds for every series")
    _add_common(sp, "family", "io")
    sp.add_argument(
        "--proxy-column", dest="proxy_column",
        help="column to correlate each residual kind with (e.g. truth_noise)",
    )
    sp.set_defaults(func=cmd_residuals)

    sp = sub.add_parser("benchmark", help="replicated sweep over q, estimators, residuals")
    _add_common(sp, "family", "io", "seed")
    sp.add_argument("--m", type=int)
    sp.add_argument("--sigma-eps", dest="sigma_eps", type=float)
    sp.add_argument("--q-grid", dest="q_grid", help="comma-separated q values")
    sp.add_argument("--estimator", help="comma-separated estimators")
    sp.add_argument("--residual", help="comma-separated residual kinds (sglm cells)")
    sp.add_argument("--noise-strategy", dest="noise_strategy", choices=sibling.NOISE_STRATEGIES)
    sp.add_argument("--noise-scheme", dest="noise_scheme", choices=("uniform", "zero", "one"))
    sp.add_argument(
        "--step3-with-x", dest="step3_with_x", action="store_const", const=True
    )
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--jobs", type=int, help="concurrent benchmark cells")
    sp.set_defaults(func=cmd_benchmark)

    return parser


KNOWN_ERRORS = (
    DomainError,
    SingularDesignError,
    ConvergenceError,
    GenerationError,
    PanelFormatError,
    ValueError,
    OSError,
    json.JSONDecodeError,
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KNOWN_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
