"""Batch command-line front end.

Subcommands: pmf, moments, reduce, convert, compound, simulate, fit, kkt.
All numeric output is deterministic given --seed and formatted at 17
significant digits; density outputs end with a footer comment reporting the
certified tail bound.

Exit status: 0 success, 2 parse error, 3 model-validation error,
4 divergence error, 5 numerical failure.  Errors print one
machine-parsable line ``error: <category>: <reason>`` on stderr.
"""

import argparse
import json
import sys

import numpy as np

from . import compound, em, genab0, modelio, phpoisson, simulate
from .errors import ConsistencyError, DivergenceError, SamplingError

_FMT = modelio._fmt


def build_parser():
    parser = argparse.ArgumentParser(prog="matpoisson",
                                     description="matrix-parameter counting distributions")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", help="model JSON file")
        p.add_argument("--severity", help="severity CSV file (n,f)")
        p.add_argument("--sample", help="sample CSV file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--n-max", type=int, default=None, help="largest index evaluated")
        p.add_argument("--tol", type=float, default=1e-10, help="truncation tolerance")
        p.add_argument("--seed", type=int, default=0, help="random seed")
        p.add_argument("--max-iter", type=int, default=200, help="iteration cap")
        p.add_argument("--pretty", action="store_true", help="human-readable tables")
        return p

    add("pmf", "evaluate a density prefix as CSV")
    add("moments", "mean, variance, CV and factorial moments")
    add("reduce", "drop unreachable nodes from a genab0 model")
    add("convert", "convert ph-poisson to physical form and back")
    p = add("compound", "compound-sum density for a frequency model and severity CSV")
    p.add_argument("--k-max", type=int, default=None, help=argparse.SUPPRESS)
    p = add("simulate", "draw conditioned counts from a physical model")
    p.add_argument("--n-samples", type=int, default=1000, help="number of samples")
    p.add_argument("--max-rejections", type=int, default=10_000,
                   help="per-sample attempt budget of the rejection sampler")
    p.add_argument("--method", choices=["auto", "rejection", "conditional"],
                   default="auto", help="sampling mechanism")
    p = add("fit", "EM fit of a physical model to a sample")
    p.add_argument("--config", help="fit configuration JSON (theta0, max_iter, tol, seed)")
    p.add_argument("--model-out", help="file for the fitted model JSON")
    add("kkt", "stationarity residuals of a physical model against a sample")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "pmf": _cmd_pmf,
        "moments": _cmd_moments,
        "reduce": _cmd_reduce,
        "convert": _cmd_convert,
        "compound": _cmd_compound,
        "simulate": _cmd_simulate,
        "fit": _cmd_fit,
        "kkt": _cmd_kkt,
    }[args.command]
    try:
        handler(args)
    except json.JSONDecodeError as exc:
        return _fail("parse", str(exc), 2)
    except FileNotFoundError as exc:
        return _fail("parse", str(exc), 2)
    except DivergenceError as exc:
        return _fail("divergence", str(exc), 4)
    except (ConsistencyError, SamplingError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail("numerical", str(exc), 5)
    except ValueError as exc:
        return _fail("validation", str(exc), 3)
    return 0


def _fail(category, reason, code):
    reason = " ".join(str(reason).split())
    print(f"error: {category}: {reason}", file=sys.stderr)
    return code


def _require(args, field):
    value = getattr(args, field)
    if value is None:
        raise ValueError(f"--{field.replace('_', '-')} is required for this subcommand")
    return value


def _emit(args, text):
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_model(args):
    return modelio.load_model(_require(args, "model"))


def _density_for_model(model, n_max, tol):
    if isinstance(model, phpoisson.PHPoissonRep):
        if n_max is None:
            n_max = _phpoisson_default_horizon(model, tol)
        probs = phpoisson.pmf_values(model, n_max)
        return genab0.DiscreteDensity(probs=probs, tail_bound=phpoisson.pmf_tail_bound(model, n_max), raw=probs)
    if isinstance(model, phpoisson.PhysicalRep):
        return _density_for_model(phpoisson.from_physical(model), n_max, tol)
    if isinstance(model, genab0.GenAB1Rep):
        return genab0.density_ab1(model, 200 if n_max is None else n_max)
    return genab0.density(model, 200 if n_max is None else n_max)


def _phpoisson_default_horizon(model, tol):
    sp = np.max(np.abs(np.linalg.eigvals(model.B)))
    if sp == 0.0:
        # finite support: stop at the nilpotency bound
        power = np.eye(model.order)
        for k in range(1, model.order + 1):
            power = power @ model.B
            if not power.any():
                return k - 1
        return model.order
    mean = phpoisson.factorial_moment(model, 1)
    horizon = int(np.ceil(mean + 10.0 * np.sqrt(mean + 1.0))) + 5
    while phpoisson.pmf_tail_bound(model, horizon) > tol:
        horizon *= 2
    return horizon


def _cmd_pmf(args):
    model = _load_model(args)
    dens = _density_for_model(model, args.n_max, args.tol)
    _emit(args, modelio.density_csv_text(dens))


def _cmd_moments(args):
    model = _load_model(args)
    if isinstance(model, phpoisson.PhysicalRep):
        model = phpoisson.from_physical(model)
    if isinstance(model, phpoisson.PHPoissonRep):
        moments = [phpoisson.factorial_moment(model, k) for k in range(1, 5)]
    elif isinstance(model, genab0.GenAB0Rep):
        moments = [genab0.factorial_moment(model, k, args.tol) for k in range(1, 5)]
    else:
        dens = genab0.density_ab1(model, 2000 if args.n_max is None else args.n_max)
        ns = np.arange(len(dens))
        moments = []
        for k in range(1, 5):
            falling = np.ones(len(dens))
            for r in range(k):
                falling *= np.maximum(ns - r, 0)
            moments.append(float(falling @ dens.probs))
    mean = moments[0]
    variance = moments[1] + mean - mean * mean
    cv = float(np.sqrt(variance) / mean) if mean > 0 else float("nan")
    if args.pretty:
        lines = [f"mean      {mean:.6g}", f"variance  {variance:.6g}", f"cv        {cv:.6g}"]
        lines += [f"m{k}        {moments[k - 1]:.6g}" for k in range(1, 5)]
        _emit(args, "\n".join(lines) + "\n")
        return
    lines = ["quantity,value", f"mean,{_FMT(mean)}", f"variance,{_FMT(variance)}", f"cv,{_FMT(cv)}"]
    lines += [f"m{k},{_FMT(moments[k - 1])}" for k in range(1, 5)]
    lines.append(f"# tol = {_FMT(args.tol)}")
    _emit(args, "\n".join(lines) + "\n")


def _cmd_reduce(args):
    model = _load_model(args)
    if not isinstance(model, genab0.GenAB0Rep):
        raise ValueError("reduce expects a genab0 model")
    reduced = genab0.reduce_useless(model)
    _emit(args, json.dumps(modelio.model_to_dict(reduced), indent=2) + "\n")


def _cmd_convert(args):
    model = _load_model(args)
    if isinstance(model, phpoisson.PHPoissonRep):
        converted = phpoisson.to_physical(model)
    elif isinstance(model, phpoisson.PhysicalRep):
        converted = phpoisson.from_physical(model)
    else:
        raise ValueError("convert expects a ph-poisson or physical model")
    _emit(args, json.dumps(modelio.model_to_dict(converted), indent=2) + "\n")


def _cmd_compound(args):
    model = _load_model(args)
    severity = modelio.read_severity_csv(_require(args, "severity"))
    if isinstance(model, phpoisson.PhysicalRep):
        model = phpoisson.from_physical(model)
    if isinstance(model, phpoisson.PHPoissonRep):
        rep = phpoisson.as_genab0(model)
        mean, variance = phpoisson.mean_variance(model)
    elif isinstance(model, genab0.GenAB0Rep):
        rep = model
        mean, variance = genab0.mean_variance(model, args.tol)
    else:
        raise ValueError("compound expects a frequency model (genab0 or ph-poisson)")
    n_max = args.n_max
    if n_max is None:
        n_max = compound.suggest_horizon(mean, variance, severity)
    dens = compound.panjer_vector(rep, severity, n_max)
    _emit(args, modelio.density_csv_text(dens, column="g"))


def _cmd_simulate(args):
    model = _load_model(args)
    if isinstance(model, phpoisson.PHPoissonRep):
        model = phpoisson.to_physical(model)
    if not isinstance(model, phpoisson.PhysicalRep):
        raise ValueError("simulate expects a physical (or ph-poisson) model")
    config = simulate.SimConfig(phys=model, n_samples=args.n_samples,
                                seed=args.seed, max_rejections=args.max_rejections)
    result = simulate.draw_conditional(config, method=args.method)
    lines = [str(int(v)) for v in result.samples]
    lines.append(f"# acceptance_rate = {_FMT(result.acceptance_rate)}")
    lines.append(f"# method = {result.method}")
    _emit(args, "\n".join(lines) + "\n")


def _cmd_fit(args):
    y = modelio.read_samples(_require(args, "sample"))
    max_iter, tol = args.max_iter, args.tol
    theta0 = None
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = json.load(fh)
        max_iter = int(config.get("max_iter", max_iter))
        tol = float(config.get("tol", tol))
        if "theta0" in config:
            model = modelio.model_from_dict(config["theta0"])
            theta0 = em.EMParams(nu=model.nu, alpha=model.alpha, P=model.P)
        elif "m" in config:
            theta0 = em.default_start(y, int(config["m"]))
    if theta0 is None and args.model:
        model = modelio.load_model(args.model)
        theta0 = em.EMParams(nu=model.nu, alpha=model.alpha, P=model.P)
    if theta0 is None:
        raise ValueError("fit needs a starting point: --config with theta0 or m, or --model")
    trace = em.fit(y, theta0, max_iter=max_iter, tol=tol)
    if args.model_out:
        modelio.save_model(trace.final, args.model_out)
    out = args.out
    if out:
        modelio.write_trace_csv(out, trace)
    else:
        final = trace.iterations[-1]
        sys.stdout.write(f"iterations={final.index} loglik={_FMT(final.loglik)} "
                         f"nu={_FMT(final.theta.nu)}\n")


def _cmd_kkt(args):
    model = _load_model(args)
    if isinstance(model, phpoisson.PHPoissonRep):
        model = phpoisson.to_physical(model)
    if not isinstance(model, phpoisson.PhysicalRep):
        raise ValueError("kkt expects a physical model")
    theta = em.EMParams(nu=model.nu, alpha=model.alpha, P=model.P)
    y = modelio.read_samples(_require(args, "sample"))
    stats = em.e_step(theta, y)
    report = em.kkt_residuals(theta, y, stats)
    lines = ["quantity,value", f"r_nu,{_FMT(report.r_nu)}", f"r_alpha,{_FMT(report.r_alpha)}"]
    m = theta.order
    for i in range(m):
        for j in range(m):
            value = "inactive" if report.inactive[i, j] else _FMT(report.R_P[i, j])
            lines.append(f"R_P_{i + 1}_{j + 1},{value}")
    lines.append(f"# max_abs = {_FMT(report.max_abs())}")
    _emit(args, "\n".join(lines) + "\n")


if __name__ == "__main__":
    sys.exit(main())
