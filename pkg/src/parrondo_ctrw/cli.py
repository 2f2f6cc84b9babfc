"""Command-line harness: figure reproductions, sweeps and raw ensemble runs.

Every subcommand writes plot-ready tables (CSV or JSON) plus a
``summary.json`` that pairs each Monte Carlo estimate with its closed-form
target and standard error. A run whose estimate misses its target by more
than 4 standard errors exits with status 2.

Exit codes: 0 success, 1 validation error, 2 self-check failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path as FsPath

import numpy as np
import yaml

from . import model
from .jumpdist import JumpLaw, mean_jump
from .model import MixedSpec, SignMemorySpec
from .simulate import PATH_STREAM, InitialSign, SimConfig, simulate_ensemble, simulate_path, substream

EXPERIMENTS = ("fig1", "fig2", "fig3", "sweep", "analytic", "simulate")
SELF_CHECK_SIGMAS = 4.0
DEFAULT_FIG3_R = (0.0, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0)
DEFAULT_SWEEP_R = tuple(round(0.05 * k, 2) for k in range(21))
DEFAULT_SWEEP_EPS = tuple(round(0.005 * k, 3) for k in range(13))
# coefficients (x 640 / lam) of the widely quoted epsilon-expansion of the mixture drift
QUOTED_AB_POLYNOMIAL = (36, -833, -340)


@dataclass
class ExperimentConfig:
    experiment: str = "fig1"
    epsilon: float = 0.02
    r_values: list[float] | None = None
    eps_values: list[float] | None = None
    sim: SimConfig = field(default_factory=SimConfig)
    output_dir: str = "out"
    format: str = "csv"
    process: dict | None = None
    process_kind: str = "AB"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon!r}")
        if self.r_values is not None:
            if len(self.r_values) == 0:
                raise ValueError("r grid is empty")
            bad = [r for r in self.r_values if not 0 <= r <= 1]
            if bad:
                raise ValueError(f"r values must lie in [0, 1], got {bad}")
        if self.eps_values is not None and len(self.eps_values) == 0:
            raise ValueError("epsilon grid is empty")
        if self.format not in ("csv", "json"):
            raise ValueError(f"format must be csv or json, got {self.format!r}")
        if self.process_kind not in ("A", "B", "AB"):
            raise ValueError(f"process must be A, B or AB, got {self.process_kind!r}")


# -- spec construction ---------------------------------------------------------


def _law(d: dict) -> JumpLaw:
    return JumpLaw(float(d["q"]), float(d["gamma"]), float(d["eta"]))


def spec_from_dict(d: dict) -> MixedSpec:
    """Build a mixture from a ``process`` config block.

    Keys: ``lam``, ``r``, ``a``, ``pos``, ``neg`` (each law a mapping with
    ``q``, ``gamma``, ``eta``). With ``unbias: true`` the ``q`` of ``a`` and
    of ``neg`` are solved for so that A and B are both unbiased; those two
    entries may then omit ``q``.
    """
    try:
        lam = float(d.get("lam", 20))
        r = float(d.get("r", 0.5))
        if d.get("unbias"):
            a, pos, neg = d["a"], d["pos"], d["neg"]
            return model.unbiased_mixed(
                r, lam, float(pos["q"]), float(pos["gamma"]), float(pos["eta"]),
                float(neg["gamma"]), float(neg["eta"]), float(a["gamma"]), float(a["eta"]),
            )
        b = SignMemorySpec(lam, _law(d["pos"]), _law(d["neg"]))
        return MixedSpec(r, _law(d["a"]), b)
    except KeyError as exc:
        raise ValueError(f"process block is missing {exc}") from None


def _base_spec(cfg: ExperimentConfig) -> MixedSpec:
    return spec_from_dict(cfg.process) if cfg.process else model.fig1_spec()


def _components(m: MixedSpec) -> dict:
    return {"A": m.a, "B": m.b, "AB": m}


# -- epsilon polynomials -------------------------------------------------------


def fig2_polynomial() -> tuple[Fraction, Fraction, Fraction]:
    """Exact coefficients of ``640 * mu_ab(1) / lam`` as a quadratic in epsilon.

    With ``q1 = q2`` the stationary sign probability is linear in epsilon, so
    the mixture drift is exactly quadratic; the coefficients are recovered by
    interpolating exact rational evaluations of :func:`model.drift_ab`.
    """
    xs = [Fraction(0), Fraction(1, 100), Fraction(2, 100)]
    ys = [640 * model.drift_ab(model.fig2_spec(x, exact=True), 1) / 20 for x in xs]
    h = xs[1]
    c2 = (ys[2] - 2 * ys[1] + ys[0]) / (2 * h * h)
    c1 = (ys[1] - ys[0]) / h - c2 * h
    c0 = ys[0]
    probe = Fraction(3, 100)
    if c0 + c1 * probe + c2 * probe * probe != 640 * model.drift_ab(model.fig2_spec(probe, exact=True), 1) / 20:
        raise AssertionError("mixture drift is not quadratic in epsilon")
    return c0, c1, c2


def _poly(c, eps):
    return float(c[0]) + float(c[1]) * eps + float(c[2]) * eps * eps


def positive_root(c) -> float:
    """Positive root of ``c0 + c1*x + c2*x**2`` (c0 > 0 > c2)."""
    c0, c1, c2 = (float(v) for v in c)
    disc = c1 * c1 - 4 * c2 * c0
    # stable form of (-c1 - sqrt(disc)) / (2*c2)
    return 2 * c0 / (-c1 + math.sqrt(disc))


# -- output --------------------------------------------------------------------


def _write_table(out: FsPath, name: str, columns: dict, fmt: str) -> FsPath:
    path = out / f"{name}.{fmt}"
    keys = list(columns)
    cols = [np.asarray(columns[k], dtype=float).tolist() for k in keys]
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(keys)
                for row in zip(*cols):
                    w.writerow([repr(v) for v in row])
        else:
            with open(path, "w") as fh:
                json.dump(dict(zip(keys, cols)), fh, indent=1)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _write_summary(out: FsPath, summary: dict) -> FsPath:
    path = out / "summary.json"
    try:
        with open(path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _jsonable(v):
    if isinstance(v, (np.floating, Fraction)):
        return float(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, InitialSign):
        return v.value
    raise TypeError(f"not JSON serializable: {type(v)}")


def _prepare_out(cfg: ExperimentConfig) -> FsPath:
    out = FsPath(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    return out


def _analytic(spec, t) -> float:
    """Closed-form drift evaluated in exact rationals, rounded once."""
    return float(model.drift(model.as_exact(spec), Fraction(str(t))))


def _check(label: str, analytic: float, mc: float, stderr: float, t: float) -> dict:
    z = (mc - analytic) / stderr if stderr > 0 else (0.0 if mc == analytic else math.inf)
    return {
        "label": label,
        "t": t,
        "analytic": float(analytic),
        "mc_mean": float(mc),
        "mc_stderr": float(stderr),
        "z": float(z),
        "pass": bool(abs(z) <= SELF_CHECK_SIGMAS),
    }


def _sample_paths(out, specs: dict, cfg: ExperimentConfig, prefix="path"):
    written = []
    for i, (name, spec) in enumerate(specs.items()):
        rng = substream(cfg.sim.master_seed, PATH_STREAM, i)
        p = simulate_path(spec, cfg.sim.horizon, rng, cfg.sim.initial_sign)
        t, x = p.steps()
        written.append(_write_table(out, f"{prefix}_{name}", {"t": t, "X": x}, cfg.format).name)
    return written


def _ensembles(specs: dict, sim: SimConfig) -> dict:
    return {name: simulate_ensemble(spec, sim) for name, spec in specs.items()}


def _drift_table(out, specs, ens, cfg, name="drift"):
    grid = cfg.sim.t_grid
    cols = {"t": grid}
    for key, spec in specs.items():
        rate = _analytic(spec, 1)
        cols[f"analytic_{key}"] = rate * grid
        cols[f"mc_{key}"] = ens[key].mean
        cols[f"stderr_{key}"] = ens[key].stderr
    return _write_table(out, name, cols, cfg.format).name


def _figure_run(cfg: ExperimentConfig, m: MixedSpec):
    """Shared body of fig1/fig2: three sample paths, drift lines and checks."""
    out = _prepare_out(cfg)
    specs = _components(m)
    files = _sample_paths(out, specs, cfg)
    ens = _ensembles(specs, cfg.sim)
    files.append(_drift_table(out, specs, ens, cfg))
    horizon = float(cfg.sim.horizon)
    summary = {"horizon": horizon, "n_paths": cfg.sim.n_paths, "seed": cfg.sim.master_seed}
    checks = []
    for key, spec in specs.items():
        k = key.lower()
        summary[f"analytic_mu_{k}_at_1"] = _analytic(spec, 1)
        mc, se = ens[key].at(horizon)
        checks.append(_check(key, _analytic(spec, horizon), mc, se, horizon))
        summary[f"mc_mean_{k}_at_horizon"] = mc
        summary[f"mc_stderr_{k}_at_horizon"] = se
        if any(math.isclose(t, 1.0) for t in cfg.sim.t_grid):
            summary[f"mc_mean_{k}_at_1"], summary[f"mc_stderr_{k}_at_1"] = ens[key].at(1.0)
        summary[f"positive_fraction_{k}"] = ens[key].positive_jump_fraction
        summary[f"analytic_positive_probability_{k}"] = float(model.positive_probability(model.as_exact(spec)))
    summary["alpha"] = float(model.alpha(model.as_exact(m)))
    summary["beta"] = float(model.beta(model.as_exact(m.b)))
    return out, summary, checks, files


def _finish(out, summary, checks, files) -> dict:
    summary["checks"] = checks
    summary["self_check_passed"] = all(c["pass"] for c in checks)
    summary["files"] = sorted(files + ["summary.json"])
    _write_summary(out, summary)
    return summary


# -- experiments ---------------------------------------------------------------


def run_fig1(cfg: ExperimentConfig) -> dict:
    """Unbiased A and B, upward-drifting mixture."""
    m = model.fig1_spec()
    out, summary, checks, files = _figure_run(cfg, m)
    summary["experiment"] = "fig1"
    return _finish(out, summary, checks, files)


def run_fig2(cfg: ExperimentConfig) -> dict:
    """All three sign probabilities lowered by epsilon: A and B drift down, AB up."""
    eps = float(cfg.epsilon)
    if not eps < 0.5:
        raise ValueError(f"epsilon must be below 1/2 so that every q stays in [0, 1], got {eps}")
    m = model.fig2_spec(eps)
    out, summary, checks, files = _figure_run(cfg, m)
    exact = fig2_polynomial()
    lam = float(m.lam)
    summary.update(
        experiment="fig2",
        epsilon=eps,
        polynomial_mu_a_at_1=-2 * eps * lam,
        polynomial_mu_b_at_1=-(8 * eps + 15 * eps * eps) / 16 * lam,
        polynomial_mu_ab_at_1=_poly(exact, eps) / 640 * lam,
        polynomial_mu_ab_quoted_at_1=_poly(QUOTED_AB_POLYNOMIAL, eps) / 640 * lam,
        polynomial_ab_coefficients_x640=[str(c) for c in exact],
        epsilon_star=positive_root(exact),
        epsilon_star_quoted=positive_root(QUOTED_AB_POLYNOMIAL),
    )
    mc = {c["label"]: c for c in checks}
    summary["paradox_exhibited"] = bool(
        mc["A"]["mc_mean"] + 3 * mc["A"]["mc_stderr"] < 0
        and mc["B"]["mc_mean"] + 3 * mc["B"]["mc_stderr"] < 0
        and mc["AB"]["mc_mean"] - 3 * mc["AB"]["mc_stderr"] > 0
    )
    return _finish(out, summary, checks, files)


def run_fig3(cfg: ExperimentConfig) -> dict:
    """Drift sign of the mixture controlled by the noise level r."""
    out = _prepare_out(cfg)
    r_values = list(cfg.r_values) if cfg.r_values is not None else list(DEFAULT_FIG3_R)
    horizon = float(cfg.sim.horizon)
    rows = {"r": [], "analytic": [], "mc": [], "stderr": []}
    checks, files = [], []
    specs = {f"AB_r{r:g}": model.fig3_spec(r) for r in r_values}
    files += _sample_paths(out, specs, cfg)
    for r in r_values:
        spec = model.fig3_spec(r)
        st = simulate_ensemble(spec, cfg.sim)
        mc, se = st.at(horizon)
        analytic = _analytic(spec, horizon)
        for k, v in zip(rows, (r, analytic, mc, se)):
            rows[k].append(v)
        checks.append(_check(f"AB_r{r:g}", analytic, mc, se, horizon))
    files.append(_write_table(out, "fig3", rows, cfg.format).name)
    r_star = model.sign_flip_r(model.fig3_spec(Fraction(1, 2), exact=True))
    summary = {
        "experiment": "fig3",
        "horizon": horizon,
        "n_paths": cfg.sim.n_paths,
        "seed": cfg.sim.master_seed,
        "r_star": float(r_star),
        "r_star_exact": str(r_star),
        "analytic_mu_b_at_1": _analytic(model.fig3_spec(0).b, 1),
    }
    return _finish(out, summary, checks, files)


def run_sweep(cfg: ExperimentConfig) -> dict:
    """Drift against r (analytic and MC) and, for the default family, against epsilon."""
    out = _prepare_out(cfg)
    r_values = list(cfg.r_values) if cfg.r_values is not None else list(DEFAULT_SWEEP_R)
    base = _base_spec(cfg)
    horizon = float(cfg.sim.horizon)
    rows = {"r": [], "analytic": [], "mc": [], "stderr": []}
    checks = []
    for r in r_values:
        spec = base.with_r(r)
        st = simulate_ensemble(spec, cfg.sim)
        mc, se = st.at(horizon)
        analytic = _analytic(spec, horizon)
        for k, v in zip(rows, (r, analytic, mc, se)):
            rows[k].append(v)
        checks.append(_check(f"AB_r{r:g}", analytic, mc, se, horizon))
    files = [_write_table(out, "sweep_r", rows, cfg.format).name]

    fine = np.round(np.arange(0, 1001) * 1e-3, 3)
    fine_drift = [float(model.drift_ab(base.with_r(float(r)), 1)) for r in fine]
    q1, q2 = float(base.b.law_pos.q), float(base.b.law_neg.q)
    summary = {
        "experiment": "sweep",
        "horizon": horizon,
        "n_paths": cfg.sim.n_paths,
        "seed": cfg.sim.master_seed,
        "argmax_r_fine_grid": float(fine[int(np.argmax(fine_drift))]),
        "argmax_r_analytic_grid": float(r_values[int(np.argmax(rows["analytic"]))]),
        "argmax_r_mc_grid": float(r_values[int(np.argmax(rows["mc"]))]),
        "optimal_r": model.optimal_r(q1, q2),
        "components_unbiased": bool(
            abs(float(model.drift_a(base.a, 1))) < 1e-9 and abs(float(model.drift_b(base.b, 1))) < 1e-9
        ),
    }

    if cfg.process is None:
        eps_values = list(cfg.eps_values) if cfg.eps_values is not None else list(DEFAULT_SWEEP_EPS)
        exact = fig2_polynomial()
        er = {"epsilon": [], "analytic_a": [], "analytic_b": [], "analytic_ab": [],
              "polynomial_ab": [], "mc_ab": [], "stderr_ab": []}
        for eps in eps_values:
            m = model.fig2_spec(eps)
            st = simulate_ensemble(m, cfg.sim)
            mc, se = st.at(horizon)
            vals = (eps, _analytic(m.a, horizon), _analytic(m.b, horizon),
                    _analytic(m, horizon), _poly(exact, eps) / 640 * float(m.lam) * horizon, mc, se)
            for k, v in zip(er, vals):
                er[k].append(v)
            checks.append(_check(f"AB_eps{eps:g}", vals[3], mc, se, horizon))
        files.append(_write_table(out, "sweep_epsilon", er, cfg.format).name)
        summary["epsilon_star"] = positive_root(exact)
    return _finish(out, summary, checks, files)


def analytic_summary(m: MixedSpec) -> dict:
    """Closed-form quantities for a mixture and its components."""
    m = model.as_exact(m)
    q1, q2 = m.b.law_pos.q, m.b.law_neg.q
    d = {
        "lam": float(m.lam),
        "r": float(m.r),
        "mu0": float(mean_jump(m.a_law)),
        "mu1": float(mean_jump(m.b.law_pos)),
        "mu2": float(mean_jump(m.b.law_neg)),
        "beta": float(model.beta(m.b)),
        "alpha": float(model.alpha(m)),
        "drift_rate_a": float(model.drift_rate(m.a)),
        "drift_rate_b": float(model.drift_rate(m.b)),
        "drift_rate_ab": float(model.drift_rate(m)),
        "superposition_rate": float(m.r * model.drift_rate(m.a) + (1 - m.r) * model.drift_rate(m.b)),
        "optimal_r": model.optimal_r(q1, q2),
        "other_critical_r": model.other_critical_r(q1, q2),
    }
    try:
        d["drift_derivative_rate"] = float(model.drift_derivative(m, 1))
    except model.PreconditionError:
        d["drift_derivative_rate"] = None
    try:
        flip = model.sign_flip_r(m)
        d["sign_flip_r"] = None if flip is None else float(flip)
    except model.PreconditionError:
        d["sign_flip_r"] = None
    if math.isinf(d["other_critical_r"]):
        d["other_critical_r"] = None
    return d


def run_analytic(cfg: ExperimentConfig):
    """Closed forms for the configured mixture, or one entry per ``--r`` value."""
    m = _base_spec(cfg)
    if cfg.r_values is None:
        return analytic_summary(m)
    return [analytic_summary(m.with_r(r)) for r in cfg.r_values]


def run_simulate(cfg: ExperimentConfig) -> dict:
    """Raw ensemble of one process (A, B or AB) of the configured mixture."""
    out = _prepare_out(cfg)
    spec = _components(_base_spec(cfg))[cfg.process_kind]
    st = simulate_ensemble(spec, cfg.sim)
    rate = _analytic(spec, 1)
    files = [_write_table(out, "ensemble", {
        "t": st.t_grid, "mean": st.mean, "variance": st.variance,
        "stderr": st.stderr, "analytic": rate * st.t_grid,
    }, cfg.format).name]
    horizon = float(cfg.sim.horizon)
    mc, se = st.at(horizon)
    summary = {
        "experiment": "simulate",
        "process": cfg.process_kind,
        "horizon": horizon,
        "n_paths": st.n_paths,
        "seed": st.seed,
        "n_jumps": st.n_jumps,
        "positive_jump_fraction": st.positive_jump_fraction,
        "analytic_positive_probability": float(model.positive_probability(spec)),
    }
    checks = [_check(cfg.process_kind, _analytic(spec, horizon), mc, se, horizon)]
    return _finish(out, summary, checks, files)


RUNNERS = {
    "fig1": run_fig1,
    "fig2": run_fig2,
    "fig3": run_fig3,
    "sweep": run_sweep,
    "simulate": run_simulate,
}


# -- argument handling ---------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parrondo-ctrw", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=EXPERIMENTS)
    p.add_argument("--config", help="YAML experiment file; flags override its values")
    p.add_argument("--seed", type=int, help="master seed (default 42)")
    p.add_argument("--paths", type=int, help="number of Monte Carlo paths (default 100000)")
    p.add_argument("--horizon", type=float, help="simulation horizon (default 1)")
    p.add_argument("--grid-points", type=int, help="time-grid points including t=0 (default 101)")
    p.add_argument("--workers", type=int, help="worker processes for the ensemble (default 1)")
    p.add_argument("--initial-sign", choices=[m.value for m in InitialSign])
    p.add_argument("--epsilon", type=float, help="probability shift for fig2 (default 0.02)")
    p.add_argument("--r", type=_float_list, help="comma-separated mixing probabilities")
    p.add_argument("--eps-grid", type=_float_list, help="comma-separated epsilons for sweep")
    p.add_argument("--process", choices=("A", "B", "AB"), help="process for the simulate command")
    p.add_argument("--out", help="output directory (default ./out)")
    p.add_argument("--format", choices=("csv", "json"), help="table format (default csv)")
    return p


_SIM_FLAGS = {
    "seed": "master_seed",
    "paths": "n_paths",
    "horizon": "horizon",
    "grid_points": "grid_points",
    "workers": "workers",
    "initial_sign": "initial_sign",
}


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    raw: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
        except yaml.YAMLError as exc:
            raise ValueError(f"malformed config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValueError("config file must contain a mapping")
    sim_raw = dict(raw.pop("sim", None) or {})
    known = {f for f in SimConfig.__dataclass_fields__}
    unknown = set(sim_raw) - known
    if unknown:
        raise ValueError(f"unknown sim keys: {sorted(unknown)}")
    for flag, key in _SIM_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            sim_raw[key] = v
    sim = SimConfig(**sim_raw)

    cfg_fields = set(ExperimentConfig.__dataclass_fields__) - {"sim"}
    unknown = set(raw) - cfg_fields
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    raw["experiment"] = args.command
    overrides = {
        "epsilon": args.epsilon,
        "r_values": args.r,
        "eps_values": args.eps_grid,
        "output_dir": args.out,
        "format": args.format,
        "process_kind": args.process,
    }
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(sim=sim, **raw)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; here 2 means a failed self-check
        return 1 if exc.code else 0
    try:
        cfg = load_config(args)
        if cfg.experiment == "analytic":
            print(json.dumps(run_analytic(cfg), indent=2, sort_keys=True))
            return 0
        summary = RUNNERS[cfg.experiment](cfg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for c in summary["checks"]:
        flag = "ok  " if c["pass"] else "FAIL"
        print(f"{flag} {c['label']:>12s} t={c['t']:g}  analytic={c['analytic']:+.6f}  "
              f"mc={c['mc_mean']:+.6f} +/- {c['mc_stderr']:.6f}  z={c['z']:+.2f}")
    print(f"wrote {len(summary['files'])} files to {cfg.output_dir}")
    if not summary["self_check_passed"]:
        print(f"error: Monte Carlo estimate beyond {SELF_CHECK_SIGMAS:g} standard errors", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
