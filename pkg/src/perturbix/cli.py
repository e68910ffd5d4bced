"""Command-line front end: ``perturbix <subcommand> [--flags] [--config run.json]``.

Every run writes its resolved configuration (minus the output directory)
to ``<out>/config.json``; passing that file back through ``--config``
reproduces the run. Values in a config file override command-line flags.
Negative numbers at the start of a value need the ``--flag=value`` form.

Exit codes: 0 success, 2 usage error, 3 invalid input, 4 estimation or
mixing failure, 5 optimizer failure, 6 numerical failure, 1 anything else.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import errors, io
from .markov_core import (
    StochasticMatrix,
    invariant_vector,
    perturbed_invariant,
    response_operator,
    transient_response,
)

EXIT_CODES = [
    ((errors.EmptyEstimate, errors.NonMixing, errors.ZeroBudget, errors.SingularSystem), 4),
    (
        (
            errors.DegenerateObjective,
            errors.EmptyFeasibleSpace,
            errors.InfeasibleEpsilon,
            errors.ZeroProjection,
            errors.SingularMultiplierSystem,
            errors.AsymmetricMask,
        ),
        5,
    ),
    ((errors.NumericalBlowup, errors.SeriesDivergence, errors.ComplexLogBranch), 6),
    ((errors.DomainError, errors.ParameterError, errors.LengthMismatch, errors.GridMismatch,
      errors.UnknownObservable, FileNotFoundError, ValueError, KeyError), 3),
]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _bounds(text):
    """``"lo,hi;lo,hi"`` or a JSON list of pairs."""
    if isinstance(text, list):
        return text
    text = str(text).strip()
    if text.startswith("["):
        return json.loads(text)
    return [_floats(axis) for axis in text.split(";")]


def _out(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_matrix(path) -> StochasticMatrix:
    a = io.load_triplets(path)
    # text round-off: renormalise columns that are stochastic to ~1e-15
    s = a.sum(axis=0)
    if np.all(np.abs(s - 1.0) < 1e-9):
        a = a / s
    return StochasticMatrix(a)


def _load_partition(path):
    from .ulam import BoxPartition

    d = io.load_json(path)
    return BoxPartition(d["bounds"], d["counts"])


def _load_index(path):
    return io.load_vector(path).astype(int)


def cmd_simulate(cfg):
    from .dynamics import PRESET_DEFAULTS, run_preset

    out = _out(cfg)
    keys = PRESET_DEFAULTS.get(cfg["preset"], {})
    overrides = {k: cfg[k] for k in keys if cfg.get(k) is not None}
    if "steps" in overrides:
        overrides["steps"] = int(float(overrides["steps"]))
    traj, resolved = run_preset(cfg["preset"], **overrides)
    name = "trajectory.csv" if cfg["format"] == "csv" else "trajectory.bin"
    io.save_trajectory(out / name, traj.points, traj.dt, fmt=cfg["format"])
    cfg.update(resolved)
    return [out / name]


def cmd_ulam(cfg):
    from .ulam import BoxPartition, Trajectory, estimate_transition_matrix

    out = _out(cfg)
    pts, dt = io.load_trajectory(cfg["trajectory"], cfg.get("dt"))
    if pts.shape[0] == 0:
        raise errors.EmptyEstimate("trajectory file is empty")
    if cfg.get("columns"):
        pts = pts[:, _ints(cfg["columns"])]
    part = BoxPartition(_bounds(cfg["bounds"]), _ints(cfg["counts"]))
    est = estimate_transition_matrix(
        Trajectory(pts, dt), part, cfg["tau"], min_occupancy=cfg["min_occupancy"],
        symmetric_mask=cfg["symmetric_mask"], min_count=cfg["min_count"],
    )
    u = invariant_vector(est.matrix)
    io.save_triplets(out / "matrix.txt", est.matrix.entries, header=f"tau {est.tau}")
    io.save_vector(out / "stationary.csv", u, "u")
    io.save_table(out / "occupancy.csv", {"box": est.retained_index, "occupancy": est.retained_occupancy})
    io.save_vector(out / "retained_index.csv", est.retained_index, "box")
    io.save_json(out / "partition.json", {"bounds": part.bounds.tolist(), "counts": part.counts.tolist()})
    return [out / f for f in ("matrix.txt", "stationary.csv", "occupancy.csv", "retained_index.csv", "partition.json")]


def _optimize_result(cfg, m, u):
    from . import optimize

    horizon = np.inf if cfg.get("horizon") is None else int(cfg["horizon"])
    g = response_operator(m, u, horizon)
    name = cfg["optimizer"]
    direction = cfg["direction"]
    sym = name in ("entropy-production", "linear-C")
    if name == "entropy":
        def solve(mask):
            return optimize.maximize_linear_functional(m, u, g, np.log(u), direction, mask=mask)
    elif name == "kl":
        target = None if not cfg.get("target") else io.load_vector(cfg["target"])

        def solve(mask):
            return optimize.maximize_kl(m, u, g, target=target, mask=mask)
    elif name in ("entropy-production", "linear-C"):
        if name == "entropy-production":
            coeffs = optimize.entropy_production_coefficients(m, u)
        else:
            if not cfg.get("coefficients"):
                raise errors.ParameterError("linear-C needs --coefficients")
            coeffs = optimize.LinearCoefficients(io.load_triplets(cfg["coefficients"], m.n), m.mask)

        def solve(mask):
            c = coeffs if mask is None else optimize.LinearCoefficients(coeffs.c, coeffs.mask & mask)
            return optimize.minimize_measure_preserving(m, u, c, direction)
    elif name == "upo-observable":
        from .upo_reduced import load_model, maximize_weighted_observable

        model = load_model(cfg["model"])
        if model.n != m.n:
            raise errors.LengthMismatch("model and matrix sizes differ")

        def solve(mask):
            if mask is not None:
                raise errors.InfeasibleEpsilon("support restriction not available for orbit models")
            return maximize_weighted_observable(model, u, g, cfg["observable"], direction)
    else:
        raise errors.ParameterError(f"unknown optimizer {name!r}")
    if cfg.get("eps"):
        res, _ = optimize.feasible_support_search(solve, m, float(cfg["eps"]), symmetric=sym)
        return res, g
    return solve(None), g


def cmd_optimize(cfg):
    out = _out(cfg)
    if cfg["optimizer"] == "upo-observable" and not cfg.get("matrix"):
        from .upo_reduced import load_model

        m = load_model(cfg["model"]).m
    else:
        m = _load_matrix(cfg["matrix"])
    u = invariant_vector(m)
    res, g = _optimize_result(cfg, m, u)
    written = [out / "perturbation.txt", out / "metadata.json"]
    io.save_triplets(out / "perturbation.txt", res.p, header=f"method {res.method_tag}")
    io.save_json(out / "metadata.json", res.metadata())
    if cfg.get("transient"):
        t = int(cfg["transient"])
        tr = transient_response(m, res.p, u, t)
        io.save_table(out / "transient.csv", {f"t{k}": tr[k] for k in range(t + 1)})
        written.append(out / "transient.csv")
    return written


def cmd_respond(cfg):
    from .ulam import marginal

    out = _out(cfg)
    m = _load_matrix(cfg["matrix"])
    p = io.load_triplets(cfg["perturbation"], m.n)
    eps = float(cfg["eps"])
    u = invariant_vector(m)
    g = response_operator(m, u)
    v1 = g.apply(p @ u)
    times = _ints(cfg["times"]) if cfg.get("times") else []
    cols = {"u": u, "linear": u + eps * v1, "perturbed": perturbed_invariant(m, p, eps)}
    if times:
        tr = transient_response(m, p, u, max(times))
        for t in times:
            cols[f"linear_t{t}"] = u + eps * tr[t]
    io.save_table(out / "response.csv", cols)
    written = [out / "response.csv"]
    if cfg.get("partition") and cfg.get("axes"):
        part = _load_partition(cfg["partition"])
        idx = _load_index(cfg["retained"]) if cfg.get("retained") else None
        for ax in _ints(cfg["axes"]):
            path = out / f"marginal_axis{ax}.csv"
            io.save_table(path, {k: marginal(v, part, idx, ax) for k, v in cols.items()})
            written.append(path)
    return written


def cmd_reconstruct(cfg):
    from .reconstruct import matrix_log, reconstruct_drift

    out = _out(cfg)
    part = _load_partition(cfg["partition"])
    idx = _load_index(cfg["retained"]) if cfg.get("retained") else None
    if cfg.get("perturbation"):
        n = idx.size if idx is not None else part.n
        rate = io.load_triplets(cfg["perturbation"], n)
    else:
        m = _load_matrix(cfg["matrix"])
        rate = matrix_log(m, cfg["tau"], cfg["method"], min_modulus=cfg["min_modulus"])
    occ = None
    if cfg.get("occupancy"):
        occ = io.load_table(cfg["occupancy"])["occupancy"]
    field = reconstruct_drift(rate, part, idx, occupancy=occ, min_occupancy=cfg["min_occupancy"])
    centers = part.centers(idx)
    cols = {f"c{k}": centers[:, k] for k in range(part.dims)}
    cols.update({f"f{k}": field[:, k] for k in range(part.dims)})
    io.save_table(out / "field.csv", cols)
    return [out / "field.csv"]


def cmd_upo(cfg):
    from .upo_reduced import (
        load_model,
        maximize_weighted_observable,
        synthetic_model,
        weight_response,
        weighted_average,
    )

    out = _out(cfg)
    model = load_model(cfg["model"]) if cfg.get("model") else synthetic_model(seed=cfg["seed"])
    u = invariant_vector(model.m)
    g = response_operator(model.m, u)
    avg, w = weighted_average(model, u, cfg["observable"])
    res = maximize_weighted_observable(model, u, g, cfg["observable"], cfg["direction"])
    v1 = g.apply(res.p @ u)
    dw = weight_response(model, u, v1)
    report = {
        "observable": cfg["observable"],
        "average": avg,
        "weights": w.tolist(),
        "weight_response": dw.tolist(),
        "average_response": float(dw @ model.observable(cfg["observable"])),
        **res.metadata(),
    }
    io.save_json(out / "upo.json", report)
    io.save_triplets(out / "perturbation.txt", res.p)
    return [out / "upo.json", out / "perturbation.txt"]


def cmd_ensemble_compare(cfg):
    from .constraint_space import ensemble_compare

    out = _out(cfg)
    rep = ensemble_compare(
        int(cfg["count"]), int(cfg["n"]), cfg["sparsity"], cfg["dominance"], cfg["eps"], cfg["seed"],
        workers=cfg.get("workers"),
    )
    io.save_json(out / "report.json", rep)
    return [out / "report.json"]


COMMANDS = {
    "simulate": cmd_simulate,
    "ulam": cmd_ulam,
    "optimize": cmd_optimize,
    "respond": cmd_respond,
    "reconstruct": cmd_reconstruct,
    "upo": cmd_upo,
    "ensemble-compare": cmd_ensemble_compare,
}


def build_parser() -> argparse.ArgumentParser:
    from .dynamics import PRESETS

    ap = argparse.ArgumentParser(prog="perturbix", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command")

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON file whose keys override flags")
        sp.add_argument("--out", default="out", help="output directory")
        return sp

    sp = add("simulate", "run a reference simulator")
    sp.add_argument("--preset", choices=PRESETS)
    sp.add_argument("--steps", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--transient", type=float)
    sp.add_argument("--format", choices=("binary", "csv"), default="binary")

    sp = add("ulam", "estimate a transition matrix from a trajectory")
    sp.add_argument("--trajectory")
    sp.add_argument("--bounds", help='"lo,hi;lo,hi" per axis; write --bounds=-2,2 when lo is negative')
    sp.add_argument("--counts", help="boxes per axis, comma separated")
    sp.add_argument("--tau", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--columns", help="trajectory columns to use, comma separated")
    sp.add_argument("--min-occupancy", type=int, default=5)
    sp.add_argument("--min-count", type=int, default=1)
    sp.add_argument("--symmetric-mask", action="store_true")

    sp = add("optimize", "compute an optimal perturbation")
    sp.add_argument("--matrix")
    sp.add_argument("--optimizer",
                    choices=("entropy", "kl", "entropy-production", "linear-C", "upo-observable"))
    sp.add_argument("--direction", choices=("max", "min"))
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--target")
    sp.add_argument("--coefficients")
    sp.add_argument("--model")
    sp.add_argument("--observable", default="energy")
    sp.add_argument("--eps", type=float, help="restrict the support until M + eps P >= 0")
    sp.add_argument("--transient", type=int, help="write v1(t) for t = 0..T")

    sp = add("respond", "linear and exact responses to a perturbation")
    sp.add_argument("--matrix")
    sp.add_argument("--perturbation")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--times")
    sp.add_argument("--partition")
    sp.add_argument("--retained")
    sp.add_argument("--axes")

    sp = add("reconstruct", "drift field from a Markov or perturbation matrix")
    sp.add_argument("--matrix")
    sp.add_argument("--perturbation")
    sp.add_argument("--partition")
    sp.add_argument("--retained")
    sp.add_argument("--occupancy")
    sp.add_argument("--tau", type=float, default=1.0)
    sp.add_argument("--method", choices=("auto", "series", "eigen"), default="auto")
    sp.add_argument("--min-modulus", type=float, default=0.0)
    sp.add_argument("--min-occupancy", type=int, default=100)

    sp = add("upo", "weights, responses and optimal perturbation of an orbit model")
    sp.add_argument("--model", help="model JSON; the synthetic 17-orbit model if omitted")
    sp.add_argument("--observable", default="energy")
    sp.add_argument("--direction", choices=("max", "min"), default="max")
    sp.add_argument("--seed", type=int, default=17)

    sp = add("ensemble-compare", "compare the two entropy-production minimisers on random chains")
    sp.add_argument("--count", type=int, default=200)
    sp.add_argument("--n", type=int, default=50)
    sp.add_argument("--sparsity", type=float, default=0.5)
    sp.add_argument("--dominance", type=float, default=1.0)
    sp.add_argument("--eps", type=float, default=1e-3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int)
    return ap


def _defaults(cfg):
    if cfg["command"] == "optimize" and cfg.get("direction") is None:
        cfg["direction"] = "min" if cfg["optimizer"] in ("entropy-production", "linear-C") else "max"
    if cfg["command"] == "ensemble-compare" and cfg.get("workers") is None and os.environ.get("PERTURBIX_THREADS"):
        cfg["workers"] = int(os.environ["PERTURBIX_THREADS"])
    return cfg


REQUIRED = {
    "simulate": ("preset",),
    "ulam": ("trajectory", "bounds", "counts", "tau"),
    "optimize": ("optimizer",),
    "respond": ("matrix", "perturbation", "eps"),
    "reconstruct": ("partition",),
}


def resolve_config(argv) -> dict:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = vars(args)
    if cfg["command"] is None:
        parser.error("a subcommand is required")
    path = cfg.pop("config")
    if path:
        extra = io.load_json(path)
        extra.pop("command", None)
        for k, v in extra.items():
            cfg[k.replace("-", "_")] = v
    missing = [k for k in REQUIRED.get(cfg["command"], ()) if cfg.get(k) is None]
    if missing:
        parser.error(f"{cfg['command']}: missing " + ", ".join("--" + k.replace("_", "-") for k in missing))
    if cfg["command"] == "simulate":
        from .dynamics import PRESETS

        if cfg["preset"] not in PRESETS:
            parser.error(f"unknown preset {cfg['preset']!r}")
    return _defaults(cfg)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = resolve_config(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[cfg["command"]](cfg)
        io.save_json(_out(cfg) / "config.json", {k: v for k, v in cfg.items() if k != "out"})
    except Exception as exc:  # map library failures to exit codes
        for kinds, code in EXIT_CODES:
            if isinstance(exc, kinds):
                print(f"perturbix {cfg['command']}: {type(exc).__name__}: {exc}", file=sys.stderr)
                return code
        if isinstance(exc, errors.PerturbixError):
            print(f"perturbix {cfg['command']}: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
