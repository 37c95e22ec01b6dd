"""carnot-lab command line.

Exit codes: 0 success, 2 usage or configuration error, 3 optimizer infeasible.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments as ex
from .abnormal import abnormal_distance
from .controls import Control, endpoint, length
from .distance import OptimizerConfig, estimate_dcc, exact_heisenberg_l1
from .errors import (CarnotLabError, ConfigError, OptimizerInfeasibleError,
                     UnsupportedFamilyError)
from .group import GroupElement, GroupModel, multiply
from .heights import max_volume_certificate, min_height, volume_m
from .norms import SubFinslerNorm
from .report import load_config, render_rows, resolve_seed
from .surgery import SurgeryPlan, plan_central_correction

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3


def _json_arg(text: str):
    """Inline JSON, or @path to a JSON file."""
    try:
        if text.startswith("@"):
            return json.loads(Path(text[1:]).read_text())
        return json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse JSON argument {text[:40]!r}: {exc}") from exc


def _element(text: str) -> GroupElement:
    return GroupElement.from_vector(np.asarray(_json_arg(text), dtype=float))


def _norm(args, n: int) -> SubFinslerNorm:
    if args.norm == "polyhedral":
        if not args.vertices:
            raise ConfigError("polyhedral norm needs --vertices")
        return SubFinslerNorm.polyhedral(_json_arg(args.vertices))
    return SubFinslerNorm(args.norm, n)


def _pick(args, section: dict, name: str, default):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return section.get(name, default)


def _optimizer(cfg: dict, seed: int) -> OptimizerConfig:
    opt = dict(cfg.get("optimizer", {}))
    opt.setdefault("seed", seed)
    return OptimizerConfig.from_mapping(opt)


# --- commands ---------------------------------------------------------------

def cmd_mul(args, cfg, seed):
    a, b = _element(args.a), _element(args.b)
    g = multiply(a, b)
    return [{"x": g.x.tolist(), "Y": g.Y.tolist()}]


def cmd_endpoint(args, cfg, seed):
    u = Control.from_json_obj(_json_arg(args.control))
    g = endpoint(u)
    return [{"x": g.x.tolist(), "Y": g.Y.tolist(), "segments": len(u)}]


def cmd_dcc(args, cfg, seed):
    g = _element(args.target)
    N = _norm(args, g.n)
    est = estimate_dcc(g, N, _optimizer(cfg, seed))
    row = {"upper": est.upper, "lower": est.lower, "residual": est.residual, "starts": est.starts}
    if N.kind == "l1":
        try:
            row["exact"] = exact_heisenberg_l1(g)
        except UnsupportedFamilyError:
            row["exact"] = None
    if args.certificate_out:
        Path(args.certificate_out).write_text(est.certificate.to_json())
    return [row]


def cmd_abn(args, cfg, seed):
    g = _element(args.target)
    r = abnormal_distance(g, starts=args.starts, seed=seed)
    return [{"distance": r.distance, "converged": r.converged,
             "normal_frame": r.plane.normal_frame.T.tolist()}]


def cmd_minheight(args, cfg, seed):
    P = np.atleast_2d(np.asarray(_json_arg(args.points), dtype=float))
    row = {"m": P.shape[0], "volume": volume_m(P), "min_height": min_height(P)}
    if args.certificate_m is not None:
        c = max_volume_certificate(P, args.certificate_m, args.delta or 0.0)
        row["certificate"] = list(c.indices) if c else None
        row["certificate_min_height"] = c.min_height if c else None
    return [row]


def _random_plan(n: int, N: SubFinslerNorm, rng) -> SurgeryPlan:
    legs = [Control.from_displacements(rng.standard_normal((3, n))) for _ in range(n - 1)]
    xs = np.cumsum([endpoint(l).x for l in legs], axis=0)
    Z = rng.standard_normal(n * (n - 1) // 2)
    eps = min_height(xs)
    return plan_central_correction(legs, Z, eps, N)


def cmd_surgery(args, cfg, seed):
    if args.plan:
        plan = SurgeryPlan.from_json_obj(_json_arg(args.plan))
        N = plan.norm or SubFinslerNorm(args.norm, plan.n)
    else:
        n = args.n
        N = SubFinslerNorm(args.norm, n)
        plan = _random_plan(n, N, np.random.default_rng(seed))
    u = plan.assemble()
    got, want = endpoint(u), plan.expected_endpoint()
    err = float(np.linalg.norm(got.as_vector() - want.as_vector()))
    L = length(u, N)
    if args.save_plan:
        Path(args.save_plan).write_text(plan.to_json())
    return [{"n": plan.n, "eps": plan.eps, "length": L, "bound": plan.bound,
             "endpoint_error": err, "ok": bool(err <= 1e-9 * max(1.0, np.linalg.norm(want.as_vector()))
                                               and L <= plan.bound * (1 + 1e-12))}]


def cmd_exp_sharp(args, cfg, seed):
    sec = cfg.get("sharp", {})
    return ex.exp_sharp(_pick(args, sec, "deltas", (0.1, 0.2, 0.3, 0.4, 0.5)),
                        float(_pick(args, sec, "ratio", 0.5)), seed, _optimizer(cfg, seed))


def cmd_exp_tube(args, cfg, seed):
    sec = cfg.get("tube", {})
    return ex.exp_tube(int(_pick(args, sec, "n", 4)), int(_pick(args, sec, "samples", 200_000)),
                       _pick(args, sec, "deltas", ex.DEFAULT_DELTAS), seed,
                       iters=int(_pick(args, sec, "iters", 50)))


def cmd_exp_lipschitz(args, cfg, seed):
    sec = cfg.get("lipschitz", {})
    return ex.exp_lipschitz(int(_pick(args, sec, "n", 4)), _pick(args, sec, "norm", "l1"),
                            _pick(args, sec, "deltas", (0.05, 0.1, 0.2, 0.3, 0.4)),
                            int(_pick(args, sec, "pairs", 4)), seed, _optimizer(cfg, seed),
                            M=_pick(args, sec, "M", None),
                            M_samples=int(_pick(args, sec, "m_samples", 8)),
                            step_ratio=float(_pick(args, sec, "step_ratio", 0.1)))


def cmd_exp_dyadic(args, cfg, seed):
    sec = cfg.get("dyadic", {})
    return ex.exp_dyadic(int(_pick(args, sec, "n", 4)), int(_pick(args, sec, "levels", 4)),
                         int(_pick(args, sec, "samples", 200_000)), int(_pick(args, sec, "pairs", 4)),
                         seed, _pick(args, sec, "norm", "l1"), _optimizer(cfg, seed),
                         M=_pick(args, sec, "M", None), M_samples=int(_pick(args, sec, "m_samples", 8)))


COMMANDS = {
    "mul": cmd_mul, "endpoint": cmd_endpoint, "dcc": cmd_dcc, "abn-dist": cmd_abn,
    "minheight": cmd_minheight, "surgery": cmd_surgery, "exp-sharp": cmd_exp_sharp,
    "exp-tube": cmd_exp_tube, "exp-lipschitz": cmd_exp_lipschitz, "exp-dyadic": cmd_exp_dyadic,
}


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON or TOML config file")
    p.add_argument("--seed", type=int, default=d, help="master seed (default 0; env CARNOT_LAB_SEED)")
    p.add_argument("--out", default=d, help="write output here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default=d)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carnot-lab", description=__doc__.splitlines()[0])
    _global_flags(p, suppress=False)
    p.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    s = add("mul", "group product of two points given as flat [x..., Y...] lists")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s = add("endpoint", "endpoint of a control [{duration, value}]")
    s.add_argument("--control", required=True, help="JSON or @file")
    s = add("dcc", "bracket for the sub-Finsler distance from the identity")
    s.add_argument("--n", type=int)
    s.add_argument("--norm", default="l1", choices=("l1", "l2", "linf", "polyhedral"))
    s.add_argument("--vertices", help="unit-ball vertices for a polyhedral norm (JSON or @file)")
    s.add_argument("--target", required=True)
    s.add_argument("--certificate-out")
    s = add("abn-dist", "distance to the abnormal set")
    s.add_argument("--target", required=True)
    s.add_argument("--starts", type=int, default=64)
    s = add("minheight", "volume and minimal height of a tuple of vectors")
    s.add_argument("--points", required=True)
    s.add_argument("--certificate-m", type=int)
    s.add_argument("--delta", type=float)
    s = add("surgery", "build or replay a central-correction plan")
    s.add_argument("--n", type=int, default=4)
    s.add_argument("--norm", default="l1", choices=("l1", "l2", "linf"))
    s.add_argument("--plan", help="plan JSON or @file to replay")
    s.add_argument("--save-plan")
    s = add("exp-sharp", "exact versus numerical gap on the sharp family")
    s.add_argument("--deltas")
    s.add_argument("--ratio", type=float)
    s = add("exp-tube", "tube measure versus delta")
    s.add_argument("--n", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--deltas", help="lo:hi:k geometric grid or comma list")
    s.add_argument("--iters", type=int)
    s = add("exp-lipschitz", "Lipschitz quotients versus delta")
    s.add_argument("--n", type=int)
    s.add_argument("--norm", choices=("l1", "l2", "linf"))
    s.add_argument("--deltas")
    s.add_argument("--pairs", type=int)
    s.add_argument("--M", type=float, dest="M")
    s.add_argument("--m-samples", type=int, dest="m_samples")
    s.add_argument("--step-ratio", type=float, dest="step_ratio")
    s = add("exp-dyadic", "dyadic strata measures times Lipschitz proxies")
    s.add_argument("--n", type=int)
    s.add_argument("--norm", choices=("l1", "l2", "linf"))
    s.add_argument("--levels", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--pairs", type=int)
    s.add_argument("--M", type=float, dest="M")
    s.add_argument("--m-samples", type=int, dest="m_samples")
    return p


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config) if args.config else {}
        seed = resolve_seed(args.seed, cfg)
        fmt_name = args.format or cfg.get("format", "csv")
        if fmt_name not in ("csv", "json"):
            raise ConfigError(f"unknown format {fmt_name!r}")
        result = COMMANDS[args.command](args, cfg, seed)
        if isinstance(result, ex.ExperimentReport):
            text = result.render(fmt_name)
        else:
            text = render_rows(result, fmt_name,
                               {"seed": seed, "command": args.command,
                                "runtime_s": time.perf_counter() - t0})
    except OptimizerInfeasibleError as exc:
        print(f"error: {exc} (best residual {exc.best_residual:.3e})", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (CarnotLabError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
