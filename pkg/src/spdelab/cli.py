"""Batch front-end: JSON config in, CSV/JSON/SVG artifacts out.

Usage: ``spdelab <command> --config path.json [--seed N] [--out dir]``.

One config file drives one command; a sha256 hash of the resolved config
is embedded in every artifact so results stay attributable.  Reruns with
the same config and seed write byte-identical CSV/JSON (plots are
content-deterministic but excluded from the byte guarantee).  Exit code:
0 all checks passed, 1 a check failed (report still written), 2 bad
config.  ``SPDELAB_THREADS`` (or ``TOOL_THREADS``) caps battery-level
parallelism; artifact writes stay serialized in the main thread.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import battery
from .covariance import builtin_kernel
from .errors import SchemaError, SpdelabError
from .gaussian import QSpec
from .malliavin import skorohod_moment_check
from .reports import RatioReport, _plain
from .solver import SPDEProblem, ensemble_summary_rows, solve
from .spectral import Field, GridSpec
from .symbols import builtin_symbol, check_marcinkiewicz, check_mihlin
from .verify import (
    apriori_estimate_check,
    bessel_equivalence_check,
    g_operator_check,
    kernel_envelope_check,
    lp_inequality_check,
    maximal_inequality_check,
)

COMMANDS = (
    "simulate", "verify-maximal", "verify-lp", "verify-bessel",
    "verify-multiplier", "verify-kernelenv", "verify-goperator",
    "verify-apriori", "verify-skorohod", "kernels",
)

_TOP_KEYS = {"command", "seed", "output_dir", "emit_plots", "params"}

_PARAM_KEYS = {
    "simulate": {"psi", "phi", "kernel", "grid", "T", "n_t", "m", "lambdas",
                 "u0", "f", "g", "n_samples", "estimator", "p", "q_exp",
                 "quad_refine"},
    "verify-maximal": {"process", "kernel", "p", "q_exp", "n_samples",
                       "sup_levels", "J", "m", "T"},
    "verify-lp": {"phi", "psi", "p", "q_exp", "r_exp", "n_theta", "levels",
                  "a", "b", "box", "m", "forcing"},
    "verify-bessel": {"phi", "alpha", "p", "grid", "count", "m", "band_frac"},
    "verify-multiplier": {"d"},
    "verify-kernelenv": {"phi", "psi", "t_minus_s", "grid", "var_tol"},
    "verify-goperator": {"phi", "psi", "p", "levels", "a", "b", "box", "m"},
    "verify-apriori": {"psi", "phi", "kernel", "levels", "T", "m", "lambdas",
                       "u0", "f", "g", "n_samples", "estimator", "p", "q_exp",
                       "quad_refine", "box"},
    "verify-skorohod": {"n_samples", "J", "m", "T"},
    "kernels": set(),
}


@dataclass
class RunConfig:
    """Resolved invocation: command, nested check parameters, bookkeeping."""

    command: str
    params: dict
    seed: int
    output_dir: str
    emit_plots: bool
    config_hash: str


def _canonical(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def load_config(command, path=None, seed=None, out=None) -> RunConfig:
    """Parse + strictly validate the config file, applying CLI overrides."""
    raw = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    if not isinstance(raw, dict):
        raise SchemaError("config root must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise SchemaError(f"unknown top-level config keys: {sorted(unknown)}")
    if command not in COMMANDS:
        raise SchemaError(f"unknown command {command!r}; have {COMMANDS}")
    if "command" in raw and raw["command"] != command:
        raise SchemaError(
            f"config names command {raw['command']!r} but {command!r} was invoked")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise SchemaError("params must be a JSON object")
    allowed = _PARAM_KEYS[command]
    bad = set(params) - allowed
    if bad:
        raise SchemaError(
            f"unknown params for {command}: {sorted(bad)}; allowed {sorted(allowed)}")
    eff_seed = seed if seed is not None else raw.get("seed", 0)
    if not isinstance(eff_seed, int) or isinstance(eff_seed, bool):
        raise SchemaError("seed must be an integer")
    out_dir = out if out is not None else raw.get("output_dir", "runs")
    emit = bool(raw.get("emit_plots", False))
    # hash what determines the numbers (not where they are written)
    resolved = {"command": command, "params": params, "seed": eff_seed}
    digest = hashlib.sha256(_canonical(resolved).encode("utf-8")).hexdigest()
    return RunConfig(command=command, params=params, seed=eff_seed,
                     output_dir=str(out_dir), emit_plots=emit,
                     config_hash=digest)


def _threads():
    for var in ("SPDELAB_THREADS", "TOOL_THREADS"):
        val = os.environ.get(var)
        if val:
            return max(1, int(val))
    return None


def _map_jobs(fn, items):
    n = _threads()
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# config -> objects


def _make_symbol(cfg, default=None):
    if cfg is None:
        cfg = default
    if isinstance(cfg, dict):
        cfg = dict(cfg)
        name = cfg.pop("name")
        return builtin_symbol(name, **cfg)
    return builtin_symbol(cfg)


def _make_kernel(cfg):
    if isinstance(cfg, dict):
        cfg = dict(cfg)
        name = cfg.pop("name")
        return builtin_kernel(name, **cfg)
    return builtin_kernel(cfg)


def _make_grid(cfg, default_n=32, default_d=1):
    cfg = dict(cfg or {})
    return GridSpec(d=int(cfg.get("d", default_d)), n=int(cfg.get("n", default_n)),
                    L=float(cfg.get("L", 2.0 * np.pi)))


def _u0_field(kind, grid, m):
    if kind == "zero":
        return Field.zeros(grid, m)
    if kind == "bump":
        bump = battery.bump_profile(box=grid.L, width_frac=1.0 / 8.0)
        vals = np.tile(bump(grid.x_grid())[None, :], (m, 1))
        return Field(grid, m, vals)
    raise SchemaError(f"unknown u0 kind {kind!r}")


def _forcing_arrays(params, grid, times, m, J):
    """Build (f, g) node/cell arrays from the config 'f'/'g' kind switches."""
    bump = battery.bump_profile(box=grid.L, width_frac=1.0 / 8.0)(grid.x_grid())
    T = float(times[-1])
    f_kind = params.get("f", "none")
    g_kind = params.get("g", "none")
    f = None
    if f_kind == "bump":
        win = np.sin(np.pi * times / T) ** 2
        f = win[:, None, None] * np.tile(bump[None, None, :], (1, m, 1))
    elif f_kind != "none":
        raise SchemaError(f"unknown f kind {f_kind!r}")
    g = None
    if g_kind == "constant":
        fac = 1.0 / (1.0 + np.arange(J))
        g = np.tile(bump[None, None, None, :], (len(times) - 1, m, J, 1)) \
            * fac[None, None, :, None]
    elif g_kind != "none":
        raise SchemaError(f"unknown g kind {g_kind!r}")
    return f, g


def _build_problem(params, n=None, n_t=None):
    grid = _make_grid(params.get("grid"), default_n=32)
    if n is not None:
        grid = GridSpec(d=grid.d, n=int(n), L=grid.L)
    psi = _make_symbol(params.get("psi"), default={"name": "heat", "d": grid.d})
    phi_cfg = params.get("phi")
    phi = _make_symbol(phi_cfg) if phi_cfg is not None else None
    kernel = _make_kernel(params.get("kernel", "wiener"))
    T = float(params.get("T", 1.0))
    nt = int(n_t if n_t is not None else params.get("n_t", 16))
    times = np.linspace(0.0, T, nt + 1)
    m = int(params.get("m", 1))
    lambdas = tuple(params.get("lambdas", (1.0, 0.5)))
    q = QSpec(lambdas)
    u0 = _u0_field(params.get("u0", "bump"), grid, m)
    f, g = _forcing_arrays(params, grid, times, m, q.J)
    return SPDEProblem(
        psi=psi, u0=u0, kernel=kernel, q=q, times=times, f=f, g=g, phi=phi,
        p=float(params.get("p", 2.0)), q_exp=float(params.get("q_exp", 2.0)),
        quad_refine=int(params.get("quad_refine", 8)))


# ---------------------------------------------------------------------------
# command runners: each returns (passed, report_dict, table_rows, trace)


def _run_kernels(cfg: RunConfig):
    listing = [("wiener", {}), ("fbm", {"H": 0.75}), ("linear", {}),
               ("bessel", {"delta": 0.5}), ("heat", {"delta": 1.0})]
    rows = []
    for name, kw in listing:
        k = builtin_kernel(name, **kw)
        rows.append({"kernel": k.name, "params": _canonical(kw),
                     "r_exp": k.r_exp, "s_exp": k.s_exp,
                     "C_R": "" if k.C_R is None else k.C_R,
                     "singular_density": k.singular_density})
    return True, {"kernels": rows}, rows, None


def _run_simulate(cfg: RunConfig):
    pb = _build_problem(cfg.params)
    ens = solve(pb, int(cfg.params.get("n_samples", 32)), cfg.seed,
                estimator=cfg.params.get("estimator", "modewise"))
    rows = [{"t": t, "mean_l2": mf, "total_variance": tv, "mean_sup": ms}
            for (t, mf, tv, ms) in ensemble_summary_rows(ens)]
    report = {"estimator": ens.estimator, "n_samples": ens.n_samples,
              "n_times": pb.n_times, "grid_n": pb.grid.n, "m": pb.m,
              "kernel": pb.kernel.name, "rows": rows}
    trace = [(r["t"], r["total_variance"]) for r in rows]
    return True, report, rows, ("t", "total variance", trace)


def _run_verify_skorohod(cfg: RunConfig):
    p = cfg.params
    cases = battery.skorohod_battery(J=int(p.get("J", 2)), m=int(p.get("m", 2)),
                                     T=float(p.get("T", 1.0)))
    n = int(p.get("n_samples", 100_000))
    lam = tuple(1.0 for _ in range(int(p.get("J", 2))))

    def job(case):
        name, proc, kern = case
        return skorohod_moment_check(proc, kern, QSpec(lam), n, cfg.seed,
                                     name=name)
    reports = _map_jobs(job, cases)
    rows = [{"case": r.name, "lhs": r.lhs, "rhs": r.rhs,
             "z_score": r.z_score, "passed": r.passed} for r in reports]
    passed = all(r.passed for r in reports)
    return passed, {"checks": [r.to_dict() for r in reports]}, rows, None


def _run_verify_maximal(cfg: RunConfig):
    p = cfg.params
    procs = dict(battery.elementary_battery(
        J=int(p.get("J", 2)), m=int(p.get("m", 2)), T=float(p.get("T", 1.0))))
    pname = p.get("process", "linear-exact")
    if pname not in procs:
        raise SchemaError(f"unknown process {pname!r}; have {sorted(procs)}")
    kern = _make_kernel(p.get("kernel", "wiener"))
    lam = tuple(1.0 for _ in range(int(p.get("J", 2))))
    rep = maximal_inequality_check(
        procs[pname], kern, QSpec(lam), float(p.get("p", 2.0)),
        float(p.get("q_exp", 2.0)), int(p.get("n_samples", 4096)), cfg.seed,
        sup_levels=tuple(p.get("sup_levels", (64, 128, 256))),
        name=f"maximal[{pname}/{kern.name}]")
    rows = [{"level": lev, "ratio": r} for (lev, r) in rep.refinement_trace]
    return rep.passed, rep.to_dict(), rows, ("level", "ratio", rep.refinement_trace)


def _run_verify_lp(cfg: RunConfig):
    p = cfg.params
    phi = _make_symbol(p.get("phi"), default={"name": "power", "gamma": 2.0, "d": 1})
    psi = _make_symbol(p.get("psi"), default={"name": "heat", "gamma": 2.0, "d": 1})
    a, b = float(p.get("a", 0.0)), float(p.get("b", 1.0))
    box = float(p.get("box", 2.0 * np.pi))
    forcing = p.get("forcing", "product")
    if forcing not in ("product", "mixed"):
        raise SchemaError(f"unknown forcing {forcing!r}")
    maker = battery.lp_forcing if forcing == "product" else battery.lp_forcing_mixed
    f_fn = maker(a=a, b=b, box=box, m=int(p.get("m", 1)))
    rep = lp_inequality_check(
        phi, psi, f_fn, float(p.get("p", 2.0)), float(p.get("q_exp", 2.0)),
        float(p.get("r_exp", 2.0)),
        levels=[tuple(lv) for lv in p.get("levels", [[32, 16], [64, 32], [128, 64]])],
        a=a, b=b, box=box, n_theta=int(p.get("n_theta", 1)))
    rows = [{"level": lev, "ratio": r} for (lev, r) in rep.refinement_trace]
    return rep.passed, rep.to_dict(), rows, ("grid n", "ratio", rep.refinement_trace)


def _run_verify_bessel(cfg: RunConfig):
    p = cfg.params
    grid = _make_grid(p.get("grid"), default_n=64)
    phi = _make_symbol(p.get("phi"), default={"name": "power", "gamma": 2.0,
                                              "d": grid.d})
    fields = battery.bessel_field_battery(
        grid, m=int(p.get("m", 1)), count=int(p.get("count", 16)),
        seed=cfg.seed, band_frac=float(p.get("band_frac", 0.5)))
    rep = bessel_equivalence_check(phi, float(p.get("alpha", 2.0)),
                                   float(p.get("p", 2.0)), fields)
    rows = [{"field": i, "ratio": r} for i, r in enumerate(rep["ratios"])]
    return rep["passed"], rep, rows, None


def _run_verify_multiplier(cfg: RunConfig):
    d = int(cfg.params.get("d", 1))
    mih, marc, failing = battery.multiplier_battery(d=d)
    rows, reports = [], []
    ok = True
    for name, sym in mih:
        r = check_mihlin(sym)
        reports.append((name, "mihlin", True, r))
        ok = ok and r.passed
    for name, sym in marc:
        r = check_marcinkiewicz(sym)
        reports.append((name, "marcinkiewicz", True, r))
        ok = ok and r.passed
    for name, sym in failing:
        r = check_mihlin(sym)
        reports.append((name, "mihlin", False, r))
        ok = ok and (not r.passed)
    for name, cond, expect, r in reports:
        rows.append({"case": name, "condition": cond,
                     "worst_constant": r.worst_constant,
                     "passed": r.passed, "expected_pass": expect})
    report = {"checks": [dict(case=n, condition=c, expected_pass=e,
                              report=r.to_dict())
                         for (n, c, e, r) in reports]}
    return ok, report, rows, None


def _run_verify_kernelenv(cfg: RunConfig):
    p = cfg.params
    # box 4*pi: the far-field fit region must hold several kernel widths
    grid_cfg = dict(p.get("grid") or {})
    grid_cfg.setdefault("L", 4.0 * np.pi)
    grid = _make_grid(grid_cfg, default_n=256)
    phi = _make_symbol(p.get("phi"), default={"name": "power", "gamma": 2.0,
                                              "d": grid.d})
    psi = _make_symbol(p.get("psi"), default={"name": "heat", "gamma": 2.0,
                                              "d": grid.d})
    rep = kernel_envelope_check(phi, psi, [float(t) for t in
                                           p.get("t_minus_s", (0.1, 0.2, 0.4))],
                                grid, var_tol=float(p.get("var_tol", 0.2)))
    rows = [{"tau": tau, "C_kernel": ck, "C_grad": cg, "C_ds": cs,
             "sup_kernel": sk}
            for tau, ck, cg, cs, sk in zip(rep["taus"], rep["C_kernel"],
                                           rep["C_grad"], rep["C_ds"],
                                           rep["sup_kernel"])]
    trace = list(zip(rep["taus"], rep["C_kernel"]))
    return rep["passed"], rep, rows, ("t-s", "fitted C", trace)


def _run_verify_goperator(cfg: RunConfig):
    p = cfg.params
    phi = _make_symbol(p.get("phi"), default={"name": "power", "gamma": 2.0, "d": 1})
    psi = _make_symbol(p.get("psi"), default={"name": "heat", "gamma": 2.0, "d": 1})
    a, b = float(p.get("a", 0.0)), float(p.get("b", 1.0))
    box = float(p.get("box", 2.0 * np.pi))
    rep = g_operator_check(
        phi, psi, battery.g_operator_forcings(a=a, b=b, box=box,
                                              m=int(p.get("m", 1))),
        float(p.get("p", 2.0)),
        levels=[tuple(lv) for lv in p.get("levels", [[32, 16], [64, 32], [128, 64]])],
        a=a, b=b, box=box)
    rows = [{"level": lev, "ratio": r} for (lev, r) in rep.refinement_trace]
    return rep.passed, rep.to_dict(), rows, ("grid n", "ratio", rep.refinement_trace)


def _run_verify_apriori(cfg: RunConfig):
    p = cfg.params
    levels = [tuple(lv) for lv in p.get("levels", [[32, 16], [64, 32], [128, 64]])]
    n_samples = int(p.get("n_samples", 48))
    est = p.get("estimator", "pathwise")
    if "phi" not in p:
        p = dict(p)
        p["phi"] = {"name": "power", "gamma": 2.0, "d": 1}

    trace = []
    last = None
    for n, n_t in levels:
        pb = _build_problem(p, n=n, n_t=n_t)
        rep = apriori_estimate_check(pb, n_samples, cfg.seed, estimator=est)
        trace.append((float(n), rep.ratio))
        last = rep
    rep = RatioReport.make(last.name, last.lhs, last.rhs_components,
                           refinement_trace=trace, seed=cfg.seed,
                           n_samples=n_samples, details=last.details)
    rows = [{"level": lev, "ratio": r} for (lev, r) in rep.refinement_trace]
    return rep.passed, rep.to_dict(), rows, ("grid n", "ratio", rep.refinement_trace)


_RUNNERS = {
    "kernels": _run_kernels,
    "simulate": _run_simulate,
    "verify-skorohod": _run_verify_skorohod,
    "verify-maximal": _run_verify_maximal,
    "verify-lp": _run_verify_lp,
    "verify-bessel": _run_verify_bessel,
    "verify-multiplier": _run_verify_multiplier,
    "verify-kernelenv": _run_verify_kernelenv,
    "verify-goperator": _run_verify_goperator,
    "verify-apriori": _run_verify_apriori,
}


# ---------------------------------------------------------------------------
# artifact writers (all byte-deterministic for fixed config + seed)


def _fmt_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _write_csv(path, rows, config_hash):
    """RFC-4180 table; the config hash rides along as a trailing column."""
    if not rows:
        rows = [{}]
    header = list(rows[0].keys()) + ["config_hash"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt_cell(r[k]) for k in header[:-1]] + [config_hash])


def _write_json(path, payload):
    text = json.dumps(_plain(payload), sort_keys=True, indent=2,
                      ensure_ascii=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def _append_ledger(path, entry):
    """Append one JSONL line; identical reruns leave the file unchanged."""
    line = _canonical(entry)
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            if any(ln.strip() == line for ln in fh):
                return
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        fh.write(line + "\n")


def _write_svg(path, xlabel, ylabel, points, title):
    """Minimal polyline plot; deterministic text output, no timestamps."""
    W, H, pad = 640, 400, 50
    xs = [float(x) for x, _ in points]
    ys = [float(y) for _, y in points]
    if not xs:
        xs, ys = [0.0], [0.0]
    x0, x1 = min(xs), max(xs) or 1.0
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def py(y):
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W//2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{H-pad}" x2="{W-pad}" y2="{H-pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H-pad}" stroke="black"/>',
        f'<text x="{W//2}" y="{H-12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{H//2}" font-size="12" transform="rotate(-90 14 {H//2})">{ylabel}</text>',
        f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>',
    ]
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="steelblue"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def run(config: RunConfig) -> int:
    """Execute one command and write its artifacts; returns the exit code."""
    runner = _RUNNERS[config.command]
    passed, report, rows, trace = runner(config)
    os.makedirs(config.output_dir, exist_ok=True)
    stem = os.path.join(config.output_dir, config.command)
    payload = {
        "command": config.command,
        "seed": config.seed,
        "config_hash": config.config_hash,
        "passed": bool(passed),
        "report": report,
    }
    _write_json(stem + ".json", payload)
    _write_csv(stem + ".csv", rows, config.config_hash)
    if config.emit_plots and trace is not None:
        xlabel, ylabel, pts = trace
        _write_svg(stem + ".svg", xlabel, ylabel, pts,
                   f"{config.command} ({config.config_hash[:12]})")
    _append_ledger(os.path.join(config.output_dir, "results.jsonl"), {
        "command": config.command, "config_hash": config.config_hash,
        "seed": config.seed, "passed": bool(passed)})
    print(f"{config.command}: {'PASS' if passed else 'FAIL'} "
          f"(artifacts in {config.output_dir}, config {config.config_hash[:12]})")
    return 0 if passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spdelab",
        description="simulator and inequality checkers (config-driven)")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="JSON config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output dir")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.command, path=args.config, seed=args.seed,
                             out=args.out)
    except (SchemaError, OSError, json.JSONDecodeError, KeyError,
            ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(config)
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SpdelabError as exc:
        print(f"check failed to run: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
