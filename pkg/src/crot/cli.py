"""Command-line interface.

Exit codes: 0 on success, 1 on invalid input, 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .bounds import (
    BoundRecord,
    BoundReport,
    chi2_kl_bound,
    empirical_w2_ub,
    expfam_kl_bound,
    gelbrich_lb,
    hungarian_bound,
    max_bound,
    scub,
)
from .distances import GroundDistanceSpec, cost_matrix
from .estimators import McConfig, kl_eval_bound, mc_js_alpha, mc_js_alpha_sqrt, mc_kl, mc_renyi, mc_tv
from .experiments import ExperimentConfig, rows_to_csv, run_figure_sweep, run_table, summarize
from .learn import LearnConfig, fit_em, fit_scrot
from .mixture import is_gaussian, kde_build
from .transport import SinkhornConfig, crot

EXIT_INPUT = 1
EXIT_NUMERIC = 2


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _spec(args) -> GroundDistanceSpec:
    return GroundDistanceSpec.parse(args.ground, mc_samples=args.mc_samples, quad_tol=args.quad_tol, seed=args.seed)


def _solver(args):
    if args.solver == "exact":
        return "exact"
    return SinkhornConfig(
        gamma=args.gamma, lambda_level=args.lambda_level, max_iterations=args.max_iter, stop_threshold=args.stop_tol
    )


def _pair(args):
    return io.load(args.mixture_a, "mixture"), io.load(args.mixture_b, "mixture")


def cmd_dist(args) -> int:
    m1, m2 = _pair(args)
    value, plan, M = crot(m1, m2, _spec(args), _solver(args))
    if args.plan_out:
        io.save(plan, args.plan_out)
    result = {
        "value": value,
        "ground": M.spec.label(),
        "solver": plan.solver,
        "iterations": plan.iterations,
        "residual": plan.residual,
    }
    _emit(json.dumps(result, indent=1), args.out)
    return 0


def _reference(m1, m2, spec, mc):
    if spec.kind == "kl":
        return mc_kl(m1, m2, mc)
    if spec.kind == "tv":
        return mc_tv(m1, m2, mc)
    if spec.kind == "renyi":
        return mc_renyi(m1, m2, spec.alpha, mc)
    if spec.kind == "js_alpha_sqrt":
        return mc_js_alpha_sqrt(m1, m2, spec.alpha, mc)
    return None


def build_report(m1, m2, spec: GroundDistanceSpec, mc: McConfig, w2_samples: int = 1000) -> BoundReport:
    """Every applicable bound for ``spec`` on the pair ``(m1, m2)``."""
    if spec.kind in ("w2", "w2_squared"):
        sq = GroundDistanceSpec("w2_squared")
        report = BoundReport("w2")
        M = cost_matrix(m1, m2, sq)
        report.add("crot_exact", "upper", lambda: np.sqrt(crot(m1, m2, sq, "exact", M)[0]))
        report.add("crot_sinkhorn", "upper", lambda: np.sqrt(crot(m1, m2, sq, "sinkhorn", M)[0]))
        report.add("scub", "upper", lambda: np.sqrt(scub(m1, m2, sq, M)))
        report.add("gelbrich", "lower", lambda: gelbrich_lb(m1, m2))
        t0 = time.perf_counter()
        ub, se = empirical_w2_ub(m1, m2, w2_samples, 2.0, np.random.default_rng(mc.seed), replicates=5)
        report.records.append(BoundRecord("empirical", ub, "upper", time.perf_counter() - t0))
        report.reference = (ub, se)
        return report
    report = BoundReport(spec.label())
    M = cost_matrix(m1, m2, spec)
    report.add("crot_exact", "upper", lambda: crot(m1, m2, spec, "exact", M)[0])
    report.add("crot_sinkhorn", "upper", lambda: crot(m1, m2, spec, "sinkhorn", M)[0])
    report.add("scub", "upper", lambda: scub(m1, m2, spec, M))
    report.add("max", "upper", lambda: max_bound(M))
    if spec.kind == "kl" and is_gaussian(m1.components[0]):
        if m1.k == m2.k:
            report.add("hungarian", "upper", lambda: hungarian_bound(m1, m2)[0])
        if m1.dim == 1 or (m1.k == 1 and m2.k == 1):
            report.add("chi2", "upper", lambda: chi2_kl_bound(m1, m2))
        report.add("expfam", "upper", lambda: expfam_kl_bound(m1, m2).value)
    report.reference = _reference(m1, m2, spec, mc)
    return report


def cmd_bounds(args) -> int:
    m1, m2 = _pair(args)
    report = build_report(m1, m2, _spec(args), McConfig(args.mc_samples, args.seed), args.w2_samples)
    _emit(io.to_json(report), args.out)
    return 0


def cmd_estimate(args) -> int:
    m1, m2 = _pair(args)
    spec = GroundDistanceSpec.parse(args.kind)
    cfg = McConfig(args.mc_samples, args.seed)
    if spec.kind == "js_alpha_sqrt":
        est, se = mc_js_alpha(m1, m2, spec.alpha, cfg)
    else:
        ref = _reference(m1, m2, spec, cfg)
        if ref is None:
            raise ValueError(f"no Monte Carlo estimator for {args.kind}")
        est, se = ref
    _emit(json.dumps({"estimate": est, "stderr": se, "samples": args.mc_samples}), args.out)
    return 0


def cmd_learn(args) -> int:
    train = io.load_points(args.data)
    test = io.load_points(args.test) if args.test else None
    cfg = LearnConfig(
        components=args.components,
        lam=args.lam,
        bandwidth=args.bandwidth,
        batch_size=args.batch,
        epochs=args.epochs,
        step_size=args.step_size,
        seed=args.seed,
    )
    state = fit_scrot(train, cfg, test=test)
    if state.aborted:
        print(f"warning: training stopped at epoch {state.epoch} on a non-finite objective", file=sys.stderr)
    io.save(state.gmm, args.out)
    if args.curve:
        em_eval = ""
        if test is not None:
            em = fit_em(train, args.components, seed=args.seed)
            em_eval = repr(kl_eval_bound(kde_build(test, args.bandwidth), em, McConfig(cfg.eval_samples, args.seed))[0])
        lines = ["epoch,scrot_objective,kl_eval,kl_eval_em_baseline"]
        for row in state.trajectory:
            kl = repr(row["kl_eval"]) if "kl_eval" in row else ""
            lines.append(f"{row['epoch']},{row['objective']!r},{kl},{em_eval}")
        Path(args.curve).write_text("\n".join(lines) + "\n")
    if state.aborted:
        return EXIT_NUMERIC
    return 0


def cmd_table(args) -> int:
    data = io.load_points(args.data, args.format)
    if args.max_points and data.shape[0] > args.max_points:
        data = data[np.random.default_rng(args.seed).permutation(data.shape[0])[: args.max_points]]
    cfg = ExperimentConfig(
        ground=_spec(args),
        pca_dim=args.pca,
        tau=args.tau,
        repeats=args.repeats,
        components=args.components,
        mc_samples=args.mc_samples,
        seed=args.seed,
    )
    rows, failures = run_table(data, cfg)
    for msg in failures:
        print(f"warning: {msg}", file=sys.stderr)
    if not rows:
        print("error: every repeat failed", file=sys.stderr)
        return EXIT_NUMERIC
    _emit(rows_to_csv(rows), args.out)
    if args.summary:
        _emit(rows_to_csv([summarize(rows)]), args.summary)
    return 0


def cmd_sweep(args) -> int:
    seps = [float(s) for s in args.separations.split(",")]
    spec = GroundDistanceSpec.parse(args.ground, mc_samples=args.mc_samples, seed=args.seed)
    rows = run_figure_sweep(args.family, seps, spec, args.mc_samples, args.seed, args.lambda_level)
    _emit(rows_to_csv(rows), args.out)
    return 0


def cmd_idx_info(args) -> int:
    t = io.load_idx(args.path)
    info = {"shape": list(t.shape), "dtype": str(t.dtype), "min": int(t.min(initial=0)), "max": int(t.max(initial=0))}
    _emit(json.dumps(info), None)
    return 0


def _common(p: argparse.ArgumentParser, ground: str | None = "tv") -> None:
    if ground is not None:
        p.add_argument("--ground", default=ground, help="kl|tv|w2|w2sq|renyi:<a>|js:<a>|w1d:<p>")
    p.add_argument("--mc-samples", type=int, default=5000)
    p.add_argument("--quad-tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)


def _mixtures(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mixture-a", required=True)
    p.add_argument("--mixture-b", required=True)


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors, not numerical ones
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crot", description="Optimal transport distances and bounds between mixtures.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dist", help="CROT distance between two mixtures")
    _mixtures(p)
    _common(p)
    p.add_argument("--solver", choices=("exact", "sinkhorn"), default="exact")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--lambda-level", type=float, default=10.0)
    g.add_argument("--gamma", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--stop-tol", type=float, default=1e-10)
    p.add_argument("--plan-out", default=None)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("bounds", help="bound report for one divergence")
    _mixtures(p)
    _common(p, "kl")
    p.add_argument("--w2-samples", type=int, default=1000)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("estimate", help="Monte Carlo divergence estimate")
    _mixtures(p)
    _common(p, None)
    p.add_argument("--kind", required=True, help="kl|tv|renyi:<a>|js:<a>")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("learn", help="fit a GMM by SCROT.KL")
    p.add_argument("--data", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--components", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=0.005)
    p.add_argument("--bandwidth", type=float, default=1e-6)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--step-size", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--curve", default=None)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("table", help="CROT vs Monte Carlo on GMMs fit to data halves")
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=("csv", "idx"), default=None)
    p.add_argument("--pca", type=int, default=None)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--components", type=int, default=10)
    p.add_argument("--max-points", type=int, default=None)
    p.add_argument("--summary", default=None)
    _common(p)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("sweep", help="separation sweep for 1D mixture families")
    p.add_argument("--family", choices=("gaussian", "gamma", "rayleigh"), default="gaussian")
    p.add_argument("--separations", default="0,0.5,1,2,4,8")
    p.add_argument("--lambda-level", type=float, default=10.0)
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("idx-info", help="describe an IDX file")
    p.add_argument("path")
    p.set_defaults(func=cmd_idx_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ArithmeticError, RuntimeError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
