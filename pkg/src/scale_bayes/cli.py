"""Command-line entry point ``scale-bayes``.

Exit codes: 0 success, 2 configuration error, 3 numerical error,
4 acceptance-tolerance failure in ``run --check`` mode.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .galerkin import galerkin_error_curve
from .harness import (
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    emit_outputs,
    run_experiment,
    truth_from_spec,
)
from .model import TruncationLossError, load_observation, save_observation, simulate
from .operators import SingularGramError, operator_from_spec
from .posterior import (
    GridTooNarrowError,
    LowAcceptanceError,
    conjugate_posterior,
    contraction_radii,
    mixture_posterior,
    series_posterior_mcmc,
)
from .priors import prior_from_spec, prior_mass_curve
from .rates import HypothesisError, RateQuery, auxiliary_sequences, fit_slope
from .scales import scale_from_spec

log = logging.getLogger("scale_bayes")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4
NUMERIC_ERRORS = (np.linalg.LinAlgError, SingularGramError, GridTooNarrowError, LowAcceptanceError,
                  TruncationLossError, FloatingPointError)


def _load_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _write_csv(path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    res = run_experiment(cfg, threads=args.threads)
    out = args.out or cfg.output or "results"
    paths = emit_outputs(res, out)
    summary = res.summary()
    print(json.dumps({k: summary[k] for k in ("name", "slope", "theoretical_exponent", "passed")}))
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    if args.check and not res.passed:
        return EXIT_CHECK
    return EXIT_OK


def cmd_galerkin(args) -> int:
    cfg = _load_json(args.config)
    try:
        scale = scale_from_spec(cfg.get("scale", {}))
        op = operator_from_spec(cfg["operator"], scale, base_dir=Path(args.config).parent)
        f0 = truth_from_spec(cfg["truth"], scale.d)
        j_list = [int(j) for j in cfg["j_list"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"galerkin config: {exc}") from None
    curve = galerkin_error_curve(op, scale, f0, j_list)
    positive = [(j, e) for j, e in curve if e > 0]
    slope = fit_slope(positive).slope if len(positive) >= 3 else float("nan")
    _write_csv(args.out, ["j", "error", "slope_fit"], [(j, e, slope) for j, e in curve])
    print(json.dumps({"slope": slope}))
    return EXIT_OK


def _posterior_for(cfg: dict, obs, base_dir):
    scale = scale_from_spec(cfg.get("scale", {}))
    op = operator_from_spec(cfg["operator"], scale, base_dir=base_dir)
    prior = prior_from_spec(cfg["prior"], scale)
    if prior.kind == "gaussian":
        return conjugate_posterior(obs, op, prior), scale
    if prior.kind == "mixture":
        return mixture_posterior(obs, op, prior), scale
    m = cfg.get("mcmc", {})
    return series_posterior_mcmc(obs, op, prior, n_iter=int(m.get("n_iter", 4000)), burn_in=m.get("burn_in"),
                                 chains=int(m.get("chains", 4)), seed=int(cfg.get("seed", 0))), scale


def cmd_posterior(args) -> int:
    cfg = _load_json(args.config)
    obs = load_observation(args.obs)
    try:
        post, scale = _posterior_for(cfg, obs, Path(args.config).parent)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"posterior config: {exc}") from None
    center = truth_from_spec(cfg["truth"], scale.d) if "truth" in cfg else post.mean
    radii = contraction_radii(post, center, (0.5, 0.9, 0.95), seed=int(cfg.get("seed", 0)))
    doc = {
        "kind": post.kind,
        "means": post.mean.tolist(),
        "variances": post.var.tolist(),
        "radii": {str(q): r for q, r in radii.items()},
        "radius_center": "truth" if "truth" in cfg else "posterior_mean",
        "tau_weights": None if post.tau_weights is None else
        [[float(t), float(w)] for t, w in zip(post.tau_grid, post.tau_weights)],
        "diagnostics": post.diagnostics,
    }
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_json(args.config)
    try:
        scale = scale_from_spec(cfg.get("scale", {}))
        op = operator_from_spec(cfg["operator"], scale, base_dir=Path(args.config).parent)
        f0 = truth_from_spec(cfg["truth"], scale.d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"simulate config: {exc}") from None
    J_obs = args.J_obs or cfg.get("J_obs") or op.range_dim(f0.size)
    save_observation(simulate(op, f0, args.n, int(J_obs), args.seed), args.out)
    return EXIT_OK


def cmd_rates(args) -> int:
    try:
        q = RateQuery(args.prior, beta=args.beta, gamma=args.gamma, d=args.d, alpha=args.alpha)
        report = auxiliary_sequences(q, strict=not args.lenient)
    except (HypothesisError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    report["exponent"] = report.pop("rate_exponent")
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_prior_mass(args) -> int:
    cfg = _load_json(args.config)
    try:
        scale = scale_from_spec(cfg.get("scale", {}))
        op = operator_from_spec(cfg["operator"], scale, base_dir=Path(args.config).parent)
        prior = prior_from_spec(cfg["prior"], scale)
        f0 = truth_from_spec(cfg["truth"], scale.d) if "truth" in cfg else None
        eps = [float(e) for e in cfg["epsilons"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"prior-mass config: {exc}") from None
    pts = prior_mass_curve(prior, op, f0, eps, int(cfg.get("n_draws", 100_000)), int(cfg.get("seed", 0)))
    _write_csv(args.out, ["epsilon", "neg_log_prob", "stderr", "hits", "reliable"],
               [(p.epsilon, p.neg_log_prob, p.stderr, p.hits, int(p.reliable)) for p in pts])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scale-bayes", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a rate experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--check", action="store_true", help="exit 4 if the fitted slope misses the tolerance")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("galerkin", help="Galerkin error curve for a noiseless truth")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_galerkin)

    p = sub.add_parser("posterior", help="posterior summaries for a stored observation")
    p.add_argument("--config", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_posterior)

    p = sub.add_parser("simulate", help="simulate and store one observation")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--J-obs", dest="J_obs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rates", help="theoretical contraction exponents")
    p.add_argument("--prior", required=True, choices=["series", "gaussian", "mixture"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--d", type=float, default=1.0)
    p.add_argument("--lenient", action="store_true", help="evaluate even if a rate hypothesis fails")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("prior-mass", help="Monte-Carlo prior small-ball curve")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prior_mass)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentError as exc:
        code = EXIT_NUMERIC if isinstance(exc.cause, NUMERIC_ERRORS) else EXIT_CONFIG
        print(f"experiment failed: {exc}", file=sys.stderr)
        return code
    except NUMERIC_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
