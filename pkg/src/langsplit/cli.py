"""Command-line entry point: each experiment is a named recipe.

Every run writes one CSV per measurement plus a ``summary.json`` of the
form ``{experiment, config, metrics, checks}``.  CSV headers carry a
provenance comment block (scheme, upsilon, sigma, tau, T, seed) and a
timestamp line; bodies are byte-reproducible for identical config + seed.

Exit codes: 0 success, 2 configuration errors (bad config file, unknown
experiment), 1 numerical failures.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, experiments
from .errors import LangsplitError
from .model import PhysParams, State, energy_H0, gibbs_moments
from .montecarlo import SeedPolicy, WORKERS_ENV, default_workers
from .splitting import SchemeSpec, scheme_step, simulate

EXPERIMENTS = (
    "simulate", "strong-order", "weak-order", "long-time-error",
    "ergodic-average", "histogram", "msd", "exp-moment", "lyapunov",
    "jacobian", "phase-area", "dissipation-demo",
)

OBSERVABLES = {
    "sinsin": lambda p, q: np.sin(p) * np.sin(q),
    "sin_norm": lambda p, q: np.sin(np.sqrt(p * p + q * q)),
    "sin1norm": lambda p, q: np.sin(1.0 + np.sqrt(p * p + q * q)),
    "p2": lambda p, q: p * p,
    "q4": lambda p, q: q ** 4,
}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config parsing


def _parse_number(text: str) -> float:
    """Parse a float, also accepting power-of-two tokens like ``2^-10``."""
    text = text.strip()
    if "^" in text:
        base, expo = text.split("^", 1)
        return float(base) ** float(expo)
    return float(text)


def parse_config_file(path: str) -> dict:
    """Read the plain-text ``key = value`` config format.

    Lines starting with ``#`` (or blank) are skipped; values stay strings
    and are interpreted per key by the experiment.
    """
    cfg = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


class Config:
    """Typed access to string-valued config entries with defaults."""

    def __init__(self, entries: dict):
        self.entries = dict(entries)

    def num(self, key, default=None):
        if key not in self.entries:
            return default
        try:
            return _parse_number(self.entries[key])
        except ValueError:
            raise ConfigError(f"config key {key!r}: not a number: "
                              f"{self.entries[key]!r}")

    def integer(self, key, default=None):
        val = self.num(key, default)
        return val if val is None else int(round(val))

    def text(self, key, default=None):
        return self.entries.get(key, default)

    def numbers(self, key, default=None):
        if key not in self.entries:
            return default
        return [_parse_number(tok) for tok in self.entries[key].split(",")
                if tok.strip()]

    def pairs(self, key, default=None):
        if key not in self.entries:
            return default
        out = []
        for tok in self.entries[key].split(";"):
            a, b = tok.split(",")
            out.append((_parse_number(a), _parse_number(b)))
        return out


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path: Path, meta: dict, columns, rows):
    """Write a CSV with a provenance comment block, LF endings, 17-digit floats."""
    with open(path, "w", newline="\n") as fh:
        for key, val in meta.items():
            fh.write(f"# {key}: {val}\n")
        fh.write(f"# generated: {datetime.datetime.now().isoformat()}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _meta(cfg, scheme, prm, tau, T, seed):
    return {
        "experiment": cfg.text("experiment", "-"),
        "scheme": scheme.name if isinstance(scheme, SchemeSpec) else scheme,
        "upsilon": _fmt(prm.upsilon),
        "sigma": _fmt(prm.sigma),
        "tau": tau if isinstance(tau, str) else _fmt(tau),
        "T": _fmt(T),
        "seed": str(seed),
    }


def _check(name, passed, margin):
    return {"name": name, "pass": bool(passed), "margin": float(margin)}


def _slope_checks(fit, lo, hi, r2_min=None):
    checks = [_check("slope_in_window",
                     lo <= fit.slope <= hi,
                     min(fit.slope - lo, hi - fit.slope))]
    if r2_min is not None:
        checks.append(_check("r_squared", fit.r_squared > r2_min,
                             fit.r_squared - r2_min))
    return checks


# ---------------------------------------------------------------------------
# experiment recipes


def _common(cfg, scheme_default="savf", upsilon=10.0, sigma=1.0):
    scheme = SchemeSpec.from_name(cfg.text("scheme", scheme_default))
    prm = PhysParams(upsilon=cfg.num("upsilon", upsilon),
                     sigma=cfg.num("sigma", sigma))
    seed = cfg.integer("seed", 12345)
    return scheme, prm, seed


def run_simulate(cfg: Config, outdir: Path):
    scheme, prm, seed = _common(cfg)
    tau = cfg.num("tau", 2.0**-8)
    T = cfg.num("T", 1.0)
    initial = State(cfg.num("initial_p", 0.0), cfg.num("initial_q", 0.0))
    traj = simulate(initial, T, tau, prm, scheme, seed)
    write_csv(outdir / "trajectory.csv",
              _meta(cfg, scheme, prm, tau, T, seed), ["t", "p", "q"],
              zip(traj.times, traj.p, traj.q))
    return {"n_steps": len(traj) - 1,
            "final_p": float(traj.p[-1]), "final_q": float(traj.q[-1])}, []


def _order_recipe(cfg, outdir, weak):
    scheme, prm, seed = _common(cfg)
    T = cfg.num("T", 1.0)
    levels = cfg.numbers("tau_levels", [2.0**-k for k in range(6, 11)])
    ref = cfg.num("ref_tau", 2.0**-13)
    n_paths = cfg.integer("n_paths", 5000 if weak else 1000)
    initial = State(cfg.num("initial_p", 0.0), cfg.num("initial_q", 0.0))
    seeds = SeedPolicy(seed)
    if weak:
        g = OBSERVABLES[cfg.text("observable", "sinsin")]
        fit = analysis.weak_error(scheme, g, levels, ref, T, prm, n_paths,
                                  seeds, initial=initial)
        lo, hi = cfg.num("slope_min", 0.8), cfg.num("slope_max", 1.2)
        name = "weak_order.csv"
    else:
        fit = analysis.strong_error(scheme, levels, ref, T, prm, n_paths,
                                    seeds, initial=initial)
        lo, hi = cfg.num("slope_min", 0.85), cfg.num("slope_max", 1.15)
        name = "strong_order.csv"
    meta = _meta(cfg, scheme, prm, ",".join(_fmt(t) for t in levels), T, seed)
    write_csv(outdir / name, meta, ["tau", "error", "std_error"],
              zip(fit.taus, fit.errors, fit.std_errors))
    metrics = {"slope": fit.slope, "intercept": fit.intercept,
               "r_squared": fit.r_squared, "n_paths": n_paths}
    r2_min = cfg.num("r2_min", 0.98 if not weak else None)
    return metrics, _slope_checks(fit, lo, hi, r2_min)


def run_strong_order(cfg, outdir):
    return _order_recipe(cfg, outdir, weak=False)


def run_weak_order(cfg, outdir):
    return _order_recipe(cfg, outdir, weak=True)


def run_long_time_error(cfg: Config, outdir: Path):
    scheme, prm, seed = _common(cfg)
    tau = cfg.num("tau", 2.0**-8)
    ref = cfg.num("ref_tau", 2.0**-11)
    T = cfg.num("T", 100.0)
    n_paths = cfg.integer("n_paths", 200)
    initial = State(cfg.num("initial_p", 0.0), cfg.num("initial_q", 0.0))
    times, errs = experiments.long_time_error(
        scheme, tau, ref, T, prm, n_paths, SeedPolicy(seed), initial=initial,
        n_records=cfg.integer("n_records", 1024))
    write_csv(outdir / "long_time_error.csv",
              _meta(cfg, scheme, prm, tau, T, seed), ["t", "error"],
              zip(times, errs))
    early, late = experiments.window_means(times[1:], errs[1:])
    metrics = {"early_window_mean": early, "late_window_mean": late,
               "ratio": late / early if early > 0 else float("inf")}
    checks = [_check("late_window_bounded", late <= 2.0 * early,
                     2.0 * early - late)]
    return metrics, checks


def run_ergodic_average(cfg: Config, outdir: Path):
    scheme, prm, seed = _common(cfg, upsilon=15.0)
    tau = cfg.num("tau", 2.0**-8)
    T = cfg.num("T", 512.0)
    burn = cfg.num("burn_in", 64.0)
    n_seeds = cfg.integer("n_seeds", 100)
    initial = State(cfg.num("initial_p", 0.0), cfg.num("initial_q", 0.0))
    avgs = experiments.ergodic_averages(
        scheme, prm, tau, T, burn, n_seeds, SeedPolicy(seed), initial,
        {"p2": OBSERVABLES["p2"], "q4": OBSERVABLES["q4"]})
    write_csv(outdir / "ergodic_average.csv",
              _meta(cfg, scheme, prm, tau, T, seed),
              ["seed_index", "avg_p2", "avg_q4"],
              ((i, avgs["p2"][i], avgs["q4"][i]) for i in range(n_seeds)))
    oracle = gibbs_moments(prm)
    metrics = {}
    checks = []
    for name, target in (("p2", oracle.Ep2), ("q4", oracle.Eq4)):
        mean = float(avgs[name].mean())
        se = float(avgs[name].std(ddof=1) / math.sqrt(n_seeds))
        rel = abs(mean - target) / target
        metrics.update({f"mean_{name}": mean, f"se_{name}": se,
                        f"target_{name}": target, f"rel_err_{name}": rel})
        checks.append(_check(f"{name}_within_5pct", rel < 0.05, 0.05 - rel))
    return metrics, checks


def run_histogram(cfg: Config, outdir: Path):
    scheme, prm, seed = _common(cfg, upsilon=15.0)
    tau = cfg.num("tau", 2.0**-8)
    times = cfg.numbers("times", [0.0, 2.0, 256.0])
    n_paths = cfg.integer("n_paths", 5000)
    bins = (cfg.integer("bins_p", 40), cfg.integer("bins_q", 40))
    p_range = (cfg.num("p_min", -1.0), cfg.num("p_max", 1.0))
    q_range = (cfg.num("q_min", -1.5), cfg.num("q_max", 1.5))
    initial = State(cfg.num("initial_p", 0.0), cfg.num("initial_q", 0.0))
    hists = experiments.histogram_snapshots(
        scheme, prm, tau, times, n_paths, SeedPolicy(seed), initial,
        bins, p_range, q_range)
    distances = []
    for t, h in zip(sorted(times), hists):
        rows = []
        mass = h.mass
        for i in range(bins[0]):
            for j in range(bins[1]):
                rows.append((h.p_edges[i], h.p_edges[i + 1],
                             h.q_edges[j], h.q_edges[j + 1], mass[i, j]))
        write_csv(outdir / f"histogram_t{t:g}.csv",
                  _meta(cfg, scheme, prm, tau, t, seed),
                  ["p_lo", "p_hi", "q_lo", "q_hi", "mass"], rows)
        distances.append(analysis.distribution_distance(h, prm))
    metrics = {f"distance_t{t:g}": d for t, d in zip(sorted(times), distances)}
    decreasing = all(distances[i] > distances[i + 1]
                     for i in range(len(distances) - 1))
    dec_margin = min((distances[i] - distances[i + 1]
                      for i in range(len(distances) - 1)), default=0.0)
    threshold = cfg.num("final_distance_max", 0.15)
    checks = [_check("distance_decreasing", decreasing, dec_margin),
              _check("final_distance", distances[-1] < threshold,
                     threshold - distances[-1])]
    return metrics, checks


def run_msd(cfg: Config, outdir: Path):
    scheme, prm, seed = _common(cfg, upsilon=15.0)
    tau = cfg.num("tau", 2.0**-8)
    T = cfg.num("T", 512.0)
    n_paths = cfg.integer("n_paths", 1000)
    initial = State(cfg.num("initial_p", 0.0), cfg.num("initial_q", 0.0))
    times, msd = experiments.msd_experiment(
        scheme, prm, tau, T, n_paths, SeedPolicy(seed), initial)
    stride = max(1, len(times) // cfg.integer("n_records", 2048))
    write_csv(outdir / "msd.csv", _meta(cfg, scheme, prm, tau, T, seed),
              ["t", "msd"], zip(times[::stride], msd[::stride]))
    plateau = analysis.msd_plateau(times, msd)
    mom = gibbs_moments(prm)
    # The stationary law has zero mean, so the displacement plateau is the
    # stationary second moments plus the squared initial offset.
    target = mom.Ep2 + mom.Eq2 + float(initial.p)**2 + float(initial.q)**2
    rel = abs(plateau - target) / target
    fit_lo, fit_hi = cfg.num("fit_t_min", 0.0), cfg.num("fit_t_max", 2.0)
    window = (times >= fit_lo) & (times <= fit_hi) & (msd < plateau)
    slope, _, r2 = analysis.linear_fit(times[window],
                                       np.log(plateau - msd[window]))
    metrics = {"plateau": plateau, "target": target, "rel_err": rel,
               "equilibrium_rate": slope, "fit_r_squared": r2}
    checks = [_check("plateau_within_5pct", rel < 0.05, 0.05 - rel),
              _check("exponential_approach", slope < 0 and r2 > 0.9,
                     r2 - 0.9)]
    return metrics, checks


def run_exp_moment(cfg: Config, outdir: Path):
    scheme, prm, seed = _common(cfg)
    tau = cfg.num("tau", 2.0**-10)
    T = cfg.num("T", 1.0)
    n_paths = cfg.integer("n_paths", 10000)
    initial = State(cfg.num("initial_p", 0.0), cfg.num("initial_q", 0.0))
    rep = analysis.exp_moment_monitor(scheme, prm, tau, T, n_paths,
                                      SeedPolicy(seed), initial=initial)
    write_csv(outdir / "exp_moment.csv", _meta(cfg, scheme, prm, tau, T, seed),
              ["t", "estimate", "max_exponent"],
              zip(rep.times, rep.estimates, rep.max_exponents))
    metrics = {"envelope_log": rep.envelope_log, "flagged": rep.flagged,
               "max_estimate": float(np.max(rep.estimates))}
    return metrics, [_check("exp_moment_bounded", not rep.flagged,
                            rep.envelope_log
                            - float(np.log(np.max(rep.estimates))))]


def run_lyapunov(cfg: Config, outdir: Path):
    scheme, prm, seed = _common(cfg)
    tau = cfg.num("tau", 2.0**-8)
    n_draws = cfg.integer("n_draws", 100000)
    states = [State(p, q) for p, q in
              cfg.pairs("states", [(0.0, 0.0), (1.0, 1.0), (2.0, -1.0)])]
    records = analysis.lyapunov_check(scheme, prm, tau, states, n_draws,
                                      seed=seed)
    write_csv(outdir / "lyapunov.csv", _meta(cfg, scheme, prm, tau, tau, seed),
              ["p0", "q0", "mc_mean", "std_error", "bound", "margin", "passed"],
              ((r.state.p, r.state.q, r.mc_mean, r.std_error, r.bound,
                r.margin, r.passed) for r in records))
    worst = min(r.margin for r in records)
    return ({"n_states": len(records), "worst_margin": worst},
            [_check("lyapunov_contraction", all(r.passed for r in records),
                    worst)])


def run_jacobian(cfg: Config, outdir: Path):
    scheme, prm, seed = _common(cfg, scheme_default="sympl-euler", upsilon=2.0)
    tau = cfg.num("tau", 1e-4)
    n_states = cfg.integer("n_states", 1000)
    n_draws = cfg.integer("n_draws", 100)
    rng = np.random.default_rng(seed)
    s = State(rng.uniform(-2, 2, n_states), rng.uniform(-2, 2, n_states))
    target = math.exp(-prm.upsilon * tau)
    worst = np.zeros(n_states)
    for _ in range(n_draws):
        z = rng.standard_normal()
        det = analysis.jacobian_det(
            lambda x: scheme_step(x, tau, prm, scheme, z), s)
        worst = np.maximum(worst, np.abs(det / target - 1.0))
    write_csv(outdir / "jacobian.csv", _meta(cfg, scheme, prm, tau, tau, seed),
              ["p", "q", "max_rel_err"], zip(s.p, s.q, worst))
    tol = cfg.num("rel_tol", 1e-6)
    metrics = {"target_det": target, "max_rel_err": float(worst.max())}
    return metrics, [_check("conformal_det", worst.max() <= tol,
                            tol - float(worst.max()))]


def run_phase_area(cfg: Config, outdir: Path):
    scheme, prm, seed = _common(cfg, scheme_default="sympl-euler", upsilon=2.0)
    tau = cfg.num("tau", 1e-4)
    T = cfg.num("T", 1.0)
    n_vertices = cfg.integer("n_vertices", 10000)
    times, areas = analysis.phase_area(scheme, prm, tau, T, n_vertices, seed)
    stride = max(1, len(times) // cfg.integer("n_records", 1024))
    write_csv(outdir / "phase_area.csv", _meta(cfg, scheme, prm, tau, T, seed),
              ["t", "area"], zip(times[::stride], areas[::stride]))
    ratio = areas[-1] / math.pi
    target = math.exp(-prm.upsilon * T)
    rel = abs(ratio / target - 1.0)
    tol = cfg.num("rel_tol", 1e-3)
    metrics = {"final_area": float(areas[-1]), "area_over_pi": float(ratio),
               "target": target, "rel_err": float(rel)}
    return metrics, [_check("area_contraction", rel <= tol, tol - rel)]


def run_dissipation_demo(cfg: Config, outdir: Path):
    _, prm, seed = _common(cfg)
    tau = cfg.num("tau", 2.0**-8)
    T = cfg.num("T", 1.0)
    n_paths = cfg.integer("n_paths", 20000)
    initial = State(cfg.num("initial_p", 0.0), cfg.num("initial_q", 2.0))
    curves = analysis.h0_dissipation_compare(prm, tau, T, initial, n_paths,
                                             SeedPolicy(seed))
    write_csv(outdir / "dissipation.csv",
              _meta(cfg, "substeps", prm, tau, T, seed),
              ["t", "h0_naive", "h0_naive_se", "h0_dissipative",
               "h0_dissipative_se"],
              zip(curves.times, curves.naive_mean, curves.naive_se,
                  curves.dissipative_mean, curves.dissipative_se))
    h0_start = float(energy_H0(initial))
    naive_ok = bool(np.all(curves.naive_mean
                           >= h0_start - 3.0 * curves.naive_se))
    idx = int(np.searchsorted(curves.times, 0.2))
    diss_ok = bool(np.all(curves.dissipative_mean[idx:] < 0.5 * h0_start))
    metrics = {"h0_initial": h0_start,
               "naive_final": float(curves.naive_mean[-1]),
               "dissipative_at_0.2": float(curves.dissipative_mean[idx])}
    return metrics, [
        _check("naive_never_dissipates", naive_ok,
               float(np.min(curves.naive_mean + 3.0 * curves.naive_se
                            - h0_start))),
        _check("dissipative_halves_by_0.2", diss_ok,
               0.5 * h0_start - float(np.max(curves.dissipative_mean[idx:]))),
    ]


RECIPES = {
    "simulate": run_simulate,
    "strong-order": run_strong_order,
    "weak-order": run_weak_order,
    "long-time-error": run_long_time_error,
    "ergodic-average": run_ergodic_average,
    "histogram": run_histogram,
    "msd": run_msd,
    "exp-moment": run_exp_moment,
    "lyapunov": run_lyapunov,
    "jacobian": run_jacobian,
    "phase-area": run_phase_area,
    "dissipation-demo": run_dissipation_demo,
}


# ---------------------------------------------------------------------------
# entry point


def _error_record(kind, exc):
    record = {"type": kind, "message": str(exc)}
    for attr in ("step_index", "path_index", "iterations", "residual"):
        val = getattr(exc, attr, None)
        if val is not None:
            record[attr] = val
    return json.dumps({"error": record}, default=float)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="langsplit",
        description="Structure-preserving splitting integrators for the "
                    "stochastic Langevin equation: experiment recipes.")
    parser.add_argument("--experiment", help=f"one of {', '.join(EXPERIMENTS)}")
    parser.add_argument("--config", help="plain-text key = value config file")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--workers", type=int, help="ensemble worker count")
    parser.add_argument("--out", default=".", help="output directory")
    args = parser.parse_args(argv)

    try:
        entries = parse_config_file(args.config) if args.config else {}
        if args.seed is not None:
            entries["seed"] = str(args.seed)
        if args.workers is not None:
            os.environ[WORKERS_ENV] = str(args.workers)
        experiment = args.experiment or entries.get("experiment")
        if experiment is None:
            raise ConfigError("no experiment given (flag --experiment or "
                              "config key 'experiment')")
        if experiment not in RECIPES:
            raise ConfigError(
                f"unknown experiment {experiment!r}; expected one of "
                f"{', '.join(EXPERIMENTS)}")
        entries["experiment"] = experiment
        cfg = Config(entries)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(_error_record("config", exc), file=sys.stderr)
        return 2

    try:
        metrics, checks = RECIPES[experiment](cfg, outdir)
    except (LangsplitError, ValueError) as exc:
        print(_error_record(type(exc).__name__, exc), file=sys.stderr)
        return 1

    summary = {
        "experiment": experiment,
        "config": {**cfg.entries, "workers": default_workers()},
        "metrics": metrics,
        "checks": checks,
    }
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
        fh.write("\n")
    print(json.dumps({"experiment": experiment, "metrics": metrics,
                      "checks": checks}, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
