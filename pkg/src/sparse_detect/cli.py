"""``sparse-detect`` command-line front end.

Every command reads a JSON config (defaults if ``--config`` is omitted),
writes one CSV into ``--out`` and prints its path.  Each CSV starts with a
``#`` metadata line, then a header row; floats use 17 significant digits so
that reruns are byte-comparable.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bounds
from .config import SCHEMA_VERSION, grid_hash, load_config
from .detect import AlternativeFamily, estimate_norm_mse, psi, rates, risk_curve
from .errors import InvalidConfigError, MomentDoesNotExistError, SingularDesignError
from .model import DesignSpec, PriorSpec, ProblemConfig, derive_seed, draw_design, rng_from

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2

COMMANDS = ("rates", "risk", "mse", "lower-bound", "verify-lemmas")


class UsageError(Exception):
    pass


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def render_csv(command: str, cfg, seed: int, header, rows) -> str:
    buf = io.StringIO()
    buf.write(
        f"# schema_version={SCHEMA_VERSION} command={command} seed={seed} grid_hash={grid_hash(cfg)}\n"
    )
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _problem(n, p, s, sigma, design="gaussian_iid"):
    return ProblemConfig(n=n, p=p, s=s, sigma=sigma, design=DesignSpec(design))


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

RATES_HEADER = ("n", "p", "s", "sigma", "psi", "lambda_eq5", "lambda_eq5a",
                "lambda_eq6", "lambda_compact", "lambda_itv")


def cmd_rates(cfg, seed, threads):
    rows = []
    for n, p, s, sigma in itertools.product(cfg.n, cfg.p, cfg.s, cfg.sigma):
        if s > p:
            continue
        b = rates(n, p, s, sigma)
        rows.append((n, p, s, float(sigma), b.psi, b.lambda_eq5, b.lambda_eq5a,
                     b.lambda_eq6, b.lambda_compact, b.lambda_itv))
    if not rows:
        raise InvalidConfigError("rate grid has no point with s <= p")
    return {"rates.csv": (RATES_HEADER, rows)}, True


# ---------------------------------------------------------------------------
# risk
# ---------------------------------------------------------------------------

RISK_HEADER = ("A", "tau", "type1", "type2_worst", "total", "half_width", "replicates")

_GNUPLOT = """\
set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set logscale x 2
set xlabel 'A'
set ylabel 'total risk'
set yrange [0:*]
set terminal pngcairo size 800,500
set output 'risk.png'
plot 'risk.csv' using 1:5:6 with yerrorlines title 'type I + worst type II'
"""


def cmd_risk(cfg, seed, threads):
    problem = _problem(cfg.n, cfg.p, cfg.s, cfg.sigma, cfg.design)
    curve = risk_curve(
        problem, cfg.alternatives, cfg.a_grid, cfg.replicates, seed,
        threads=threads, factor=cfg.threshold_factor, sphere=cfg.sphere,
    )
    rows = [(r.a, r.tau, r.type1, r.type2_worst, r.total, r.half_width, r.replicates) for r in curve]
    return {"risk.csv": (RISK_HEADER, rows), "risk.gp": _GNUPLOT}, True


# ---------------------------------------------------------------------------
# mse
# ---------------------------------------------------------------------------

MSE_HEADER = ("s", "mse", "psi_scaled", "ratio", "half_width")


def cmd_mse(cfg, seed, threads):
    rows = []
    for s in cfg.s_grid:
        if s > cfg.p:
            raise InvalidConfigError(f"s={s} exceeds p={cfg.p}")
        problem = _problem(cfg.n, cfg.p, s, cfg.sigma, cfg.design)
        family = AlternativeFamily(tuple(cfg.alternatives), cfg.tau, cfg.sphere)
        res = estimate_norm_mse(problem, family, cfg.replicates, derive_seed(seed, "s", s), threads)
        scaled = cfg.sigma**2 * psi(s, cfg.p, cfg.n)
        ratio = res.mse / scaled if scaled > 0 else math.nan
        rows.append((s, res.mse, scaled, ratio, res.half_width))
    return {"mse.csv": (MSE_HEADER, rows)}, True


# ---------------------------------------------------------------------------
# lower-bound
# ---------------------------------------------------------------------------

LOWER_HEADER = ("A", "tau", "chi2_mc", "half_width", "mixture_bound_closed", "exp_a2",
                "lecam_floor", "effective_sample_fraction", "status")


def cmd_lower_bound(cfg, seed, threads):
    problem = _problem(cfg.n, cfg.p, cfg.s, cfg.sigma, cfg.design)
    rows = []
    for a in cfg.a_grid:
        tau = bounds.tau_reduced(a, cfg.s, cfg.p, cfg.n, cfg.sigma)
        est = bounds.chi2_divergence_mc(
            PriorSpec(cfg.p, cfg.s, tau), problem, cfg.pair_samples, cfg.design_samples,
            derive_seed(seed, "lower-bound", 0), a=a, threads=threads,
        )
        floor = max(bounds.lecam_floor(max(est.chi2_mc, 0.0)), 0.0) if est.status == "ok" else math.nan
        rows.append((a, tau, est.chi2_mc, est.mc_half_width, est.mixture_bound_closed,
                     est.exp_a2_bound, floor, est.effective_sample_fraction, est.status))
    return {"lower_bound.csv": (LOWER_HEADER, rows)}, True


# ---------------------------------------------------------------------------
# verify-lemmas
# ---------------------------------------------------------------------------

_MAX_REPORTED = 20

VERIFY_HEADER = ("lemma_id", "params", "lhs", "rhs_bound", "pass", "fitted_constant")


def _params(**kw) -> str:
    return ";".join(f"{k}={fmt(v)}" for k, v in kw.items())


def _inner_product_vectors(p):
    theta = np.full(p, 1.0 / math.sqrt(p))
    theta_prime = np.where(np.arange(p) % 2 == 0, 1.0, -1.0) / math.sqrt(p)
    return theta, theta_prime


def verify_rows(cfg, seed):
    """Yield (lemma_id, params, lhs, rhs, pass, fitted_constant) rows.

    Rows with an empty fitted_constant test a printed constant; the others
    report a constant fitted from the data and always pass.
    """
    for n, p, t in cfg.singular_value_cases:
        chk = bounds.min_eigenvalue_concentration_check(
            n, p, float(t), cfg.singular_value_replicates, derive_seed(seed, "singular-values", n * 100003 + p)
        )
        yield ("singular_value_concentration", _params(n=n, p=p, t=float(t)), chk.violation_rate, chk.bound, chk.passed, "")

    rng = rng_from(derive_seed(seed, "gram-identity", 0))
    for k in range(cfg.gram_identity_designs):
        n = int(rng.integers(cfg.gram_identity_n_range[0], cfg.gram_identity_n_range[1] + 1))
        p = int(rng.integers(cfg.gram_identity_p_range[0], cfg.gram_identity_p_range[1] + 1))
        x = draw_design("gaussian_iid", n, p, rng)
        disc = bounds.gram_diag_distance_identity_check(n, p, seed, x=x)
        yield ("gram_diagonal_distance", _params(design=k, n=n, p=p), disc, 1e-6, disc <= 1e-6, "")

    for d in cfg.inverse_moment_d:
        for m in cfg.inverse_moment_m:
            try:
                exact = bounds.chi2_inverse_moment(d, m)
            except MomentDoesNotExistError:
                continue
            quad = bounds.chi2_inverse_moment_quadrature(d, m)
            ok = abs(exact - quad) <= 1e-9 * exact
            yield ("inverse_chi2_moment", _params(d=d, m=m), exact, quad, ok, "")
            if (d, m) == (9, 4):
                # the printed bound is attained with equality
                frac = bounds.chi2_inverse_moment_exact(9, 4)
                yield ("inverse_chi2_moment_bound", _params(d=9, m=4), float(frac), 1.0 / 105.0,
                       frac <= Fraction(1, 105), "")

    for x in cfg.tail_x:
        r = bounds.gaussian_tail_bounds(float(x))
        checks = r.checks()
        prm = _params(x=float(x))
        yield ("gaussian_tail_lower", prm, r.lower_tail, r.exact_tail, checks["tail_lower"], "")
        yield ("gaussian_tail_upper", prm, r.exact_tail, r.upper_tail, checks["tail_upper"], "")
        yield ("truncated_second_moment", prm, r.exact_second, r.second_moment_bound, checks["second_moment"], "")
        yield ("truncated_fourth_moment", prm, r.exact_fourth, r.fourth_moment_bound, checks["fourth_moment"], "")
        if x >= 1:
            alpha = bounds._gauss.conditional_second_moment(float(x))
            ok = bounds.conditional_second_moment_check(float(x))
            yield ("conditional_second_moment", prm, alpha, 5.0 * x * x, ok, "")

    if cfg.correlation_rho and cfg.correlation_x:
        fit = bounds.truncated_correlation_fit(
            cfg.correlation_rho, cfg.correlation_x, cfg.correlation_samples, derive_seed(seed, "correlation", 0)
        )
        for i, rho in enumerate(fit.rho_grid):
            for j, x in enumerate(fit.x_grid):
                rhs = fit.fitted_c * fit.shape[i, j]
                yield ("truncated_correlation", _params(rho=rho, x=x), fit.estimates[i, j], rhs,
                       fit.estimates[i, j] <= rhs, fit.fitted_c)

    theta, theta_prime = _inner_product_vectors(cfg.inner_product_p)
    for fam in cfg.inner_product_designs:
        rep = bounds.inner_product_concentration_check(
            DesignSpec(fam), cfg.inner_product_n, theta, theta_prime, cfg.inner_product_x,
            cfg.inner_product_replicates, derive_seed(seed, "inner-product", 0),
        )
        for i, n in enumerate(rep.n_grid):
            for j, x in enumerate(rep.x_grid):
                yield ("inner_product_concentration", _params(design=fam, n=n, x=x), rep.rates[i, j], rep.bounds[i, j],
                       bool(rep.rates[i, j] <= rep.bounds[i, j]), rep.c1)


def cmd_verify_lemmas(cfg, seed, threads):
    rows = list(verify_rows(cfg, seed))
    failed = [r for r in rows if r[5] == "" and not r[4]]
    for r in failed[:_MAX_REPORTED]:
        print("FAIL " + ",".join(fmt(v) for v in r), file=sys.stderr)
    if len(failed) > _MAX_REPORTED:
        print(f"... {len(failed) - _MAX_REPORTED} more failing rows in the report", file=sys.stderr)
    return {"verify_lemmas.csv": (VERIFY_HEADER, rows)}, not failed


HANDLERS = {
    "rates": cmd_rates,
    "risk": cmd_risk,
    "mse": cmd_mse,
    "lower-bound": cmd_lower_bound,
    "verify-lemmas": cmd_verify_lemmas,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 bits, got {v}")
    return v


def _threads(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sparse-detect",
        description="Sparse-regression signal detection: rates, risk curves, MSE tables, "
        "lower bounds and lemma checks.",
    )
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, default=None, help="JSON config (defaults if omitted)")
    ap.add_argument("--seed", type=_u64, default=0, help="master seed, unsigned 64-bit")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory")
    ap.add_argument("--threads", type=_threads, default=None,
                    help="worker threads (default: $SPARSE_DETECT_THREADS or 1)")
    return ap


def _default_threads():
    raw = os.environ.get("SPARSE_DETECT_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return _threads(raw)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"SPARSE_DETECT_THREADS: {exc}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = args.threads if args.threads is not None else _default_threads()
        cfg = load_config(args.command, args.config)
        outputs, ok = HANDLERS[args.command](cfg, args.seed, threads)
    except (InvalidConfigError, UsageError) as exc:
        print(f"sparse-detect {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularDesignError, MomentDoesNotExistError, FloatingPointError) as exc:
        print(f"sparse-detect {args.command}: computation failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY

    args.out.mkdir(parents=True, exist_ok=True)
    for name, payload in outputs.items():
        path = args.out / name
        if isinstance(payload, str):
            _write(path, payload)
        else:
            header, rows = payload
            _write(path, render_csv(args.command, cfg, args.seed, header, rows))
        print(path)
    return EXIT_OK if ok else EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
