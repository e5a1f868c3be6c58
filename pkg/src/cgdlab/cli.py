"""Command-line frontend: ``cgdlab run|experiment|plot|validate``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from . import records
from .core import HyperParams, random_states, validate_oracle
from .experiments import PRESETS, run_name
from .games import GAME_NAMES, bilinear_oracle, covariance_oracle, make_game, quadratic_oracle
from .harness import ConfigError, RunConfig, Trajectory, run, run_many
from .nets import GanConfig, gan_oracle
from .oracles import FdConfig, fd_agreement
from .rules import RULE_NAMES, RuleSpec, UnsupportedRuleError
from .svgplot import line_plot, scatter_plot

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 3
PLOT_KINDS = ("trajectory", "lognorm", "residual-vs-passes", "scatter2d")


class UsageError(Exception):
    pass


# config-file key (flag name with underscores) -> value type
_RUN_KEYS = {
    "game": str, "rule": str, "eta": float, "gamma": float, "cg_eps": float,
    "iters": int, "seed": int, "init": str, "out": str, "record_every": int,
    "max_passes": int, "json": str,
}


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes in keys are underscores."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from None
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _RUN_KEYS:
            raise UsageError(f"{path}:{no}: unknown key {key!r}; valid keys: {', '.join(sorted(_RUN_KEYS))}")
        try:
            out[key] = _RUN_KEYS[key](val)
        except ValueError:
            raise UsageError(f"{path}:{no}: bad value for {key}: {val!r}") from None
    return out


def _parse_init(text: str):
    if text in ("default", "random"):
        return text
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--init must be 'default', 'random' or comma-separated numbers, got {text!r}") from None


def _check_names(game: Optional[str], rule: Optional[str]):
    if rule is not None:
        try:
            RuleSpec.parse(rule)
        except ValueError:
            raise UsageError(f"unknown rule {rule!r}; valid rules: {', '.join(RULE_NAMES)}") from None
    if game is not None:
        try:
            make_game(game, 0) if not game.startswith("gmm-gan") else None
        except ValueError:
            raise UsageError(f"unknown game {game!r}; valid games: {', '.join(GAME_NAMES)}") from None


def _summary(name: str, t: Trajectory) -> str:
    last = t.metric()[-1] if t.iterations else float("nan")
    line = (f"{name}: verdict={records.safe_verdict(t)} termination={t.termination} "
            f"iters={t.iterations[-1] if t.iterations else 0} final_metric={last:.6g} "
            f"fwd_passes={t.fwd_passes[-1] if t.fwd_passes else 0}")
    if "mode_coverage" in t.extras:
        f1, f2, other = t.extras["mode_coverage"]
        line += f" coverage=({f1:.3f},{f2:.3f},other {other:.3f})"
    return line


def _write_outputs(t: Trajectory, csv_path: Path, json_path: Optional[Path]) -> List[str]:
    written = [str(records.write_csv(t, csv_path))]
    if json_path is not None:
        written.append(str(records.write_json(t, json_path)))
    if "samples" in t.extras:
        sp = csv_path.with_name(csv_path.stem + ".samples.csv")
        written.append(str(records.write_samples(t.extras["samples"], sp)))
    return written


def cmd_run(args) -> int:
    vals = read_config(args.config) if args.config else {}
    for key in _RUN_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            vals[key] = v
    if "game" not in vals or "rule" not in vals or "eta" not in vals:
        raise UsageError("run needs --game, --rule and --eta (on the command line or in --config)")
    _check_names(vals["game"], vals["rule"])
    try:
        hyper = HyperParams(vals["eta"], vals.get("gamma", 1.0), vals.get("cg_eps", 1e-6))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = RunConfig(
        game=vals["game"], rule=vals["rule"], hyper=hyper,
        iterations=vals.get("iters", 50), init=_parse_init(vals.get("init", "default")),
        seed=vals.get("seed", 0), record_every=vals.get("record_every", 1),
        max_passes=vals.get("max_passes"),
    )
    t = run(cfg)
    name = run_name(cfg)
    out = Path(vals.get("out") or f"{name}.csv")
    json_path = Path(vals["json"]) if vals.get("json") else None
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_outputs(t, out, json_path)
    print(_summary(name, t))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    kw = {}
    if args.eta:
        kw["etas" if args.name != "exp1" else "eta"] = args.eta if args.name != "exp1" else args.eta[0]
        if args.name == "exp1" and len(args.eta) > 1:
            raise UsageError("exp1 takes a single --eta")
    if args.rule:
        for r in args.rule:
            _check_names(None, r)
        kw["rules"] = args.rule
    if args.gamma is not None:
        kw["gamma"] = args.gamma
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.cg_eps is not None:
        kw["cg_eps"] = args.cg_eps
    if args.name == "exp1":
        if args.alpha:
            kw["alphas"] = args.alpha
        if args.test:
            kw["tests"] = args.test
        if args.iters is not None:
            kw["iterations"] = args.iters
    elif args.name == "exp2":
        if args.d:
            kw["dims"] = args.d
        if args.iters is not None:
            kw["max_passes"] = args.iters
    else:
        if args.iters is not None:
            kw["iterations"] = args.iters
        if args.full:
            kw["full"] = True
    if args.record_every is not None and args.name != "exp1":
        kw["record_every"] = args.record_every
    for flag, ok in (("alpha", "exp1"), ("test", "exp1"), ("d", "exp2")):
        if getattr(args, flag) and args.name != ok:
            raise UsageError(f"--{flag} applies to {ok} only")

    try:
        plan = PRESETS[args.name](**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out_dir = Path(args.out or args.name)
    trajectories = run_many([cfg for _, cfg in plan])
    entries = []
    for (rel, cfg), t in zip(plan, trajectories):
        csv_path = out_dir / f"{rel}.csv"
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        written = _write_outputs(t, csv_path, None)
        echo = cfg.echo()
        entries.append({
            "file": f"{rel}.csv",
            "config": echo,
            "config_hash": records.config_hash(echo),
            "columns": records.columns_for(t),
            "verdict": records.safe_verdict(t),
            "termination": t.termination,
            "extra_files": [str(Path(w).relative_to(out_dir)) for w in written[1:]],
        })
        print(_summary(rel, t))
    records.write_manifest(entries, out_dir / "manifest.json")
    print(f"wrote {len(entries)} result files and {out_dir / 'manifest.json'}")
    return EXIT_OK


def _load(paths) -> list:
    return [(Path(p).stem, records.read_csv(p)) for p in paths]


def cmd_plot(args) -> int:
    if not args.inputs:
        raise UsageError("plot needs at least one input file")
    kind = args.kind
    if kind == "scatter2d":
        groups = []
        for p in args.inputs:
            try:
                groups.append((Path(p).stem, records.read_samples(p)))
            except records.SchemaError as exc:
                raise records.SchemaError(f"scatter2d expects samples files: {exc}") from None
        means = GanConfig().means
        svg = scatter_plot(groups, args.title or "generator samples", "s1", "s2",
                           markers=[tuple(m) for m in means])
    else:
        data = _load(args.inputs)
        if kind == "trajectory":
            series = []
            for (label, cols), p in zip(data, args.inputs):
                if "x0" not in cols or "y0" not in cols or "x1" in cols or "y1" in cols:
                    raise records.SchemaError(f"{p}: trajectory plots need exactly one x and one y coordinate")
                series.append((label, cols["x0"], cols["y0"]))
            svg = line_plot(series, args.title or "trajectory", "x", "y")
        elif kind == "lognorm":
            series = [(label, cols["iter"], cols["norm"]) for label, cols in data]
            svg = line_plot(series, args.title or "log10 norm", "iteration k", "log10 ||(x, y)||", log_y=True)
        else:
            series = [(label, cols["fwd_passes"], cols["residual"]) for label, cols in data]
            svg = line_plot(series, args.title or "residual vs forward passes", "forward passes",
                            "log10 residual", log_y=True)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg, encoding="utf-8")
    print(f"wrote {out}")
    return EXIT_OK


def builtin_oracles(seed: int = 0):
    out = []
    for a in (1.0, 3.0, 6.0):
        out.append((f"bilinear:{a}", bilinear_oracle(a)))
        out.append((f"quadratic-cc:{a}", quadratic_oracle(a, "convex-concave")))
        out.append((f"quadratic-xc:{a}", quadratic_oracle(a, "concave-convex")))
    out.append(("covariance:4", covariance_oracle(4, seed)[0]))
    out.append(("covariance-verbatim:4", covariance_oracle(4, seed, payoff="verbatim")[0]))
    return out


def cmd_validate(args) -> int:
    failed = 0
    for name, o in builtin_oracles(args.seed):
        probes = random_states(o, args.probes, seed=args.seed)
        bad = validate_oracle(o, probes, args.tol, seed=args.seed)
        worst = fd_agreement(o, probes, FdConfig("central"), seed=args.seed)
        ok = not bad and worst <= args.fd_tol
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {len(bad)} violations, fd max rel err {worst:.2e}")
        for v in bad[:5]:
            print(f"    {v}")
    if args.gan:
        o = gan_oracle(GanConfig(), seed=args.seed)
        probes = [o.default_state()]
        bad = validate_oracle(o, probes, 1e-6, seed=args.seed)
        failed += bool(bad)
        print(f"{'PASS' if not bad else 'FAIL'} gmm-gan: {len(bad)} violations")
    return EXIT_OK if not failed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgdlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one rule on one game")
    r.add_argument("--config", help="flat key = value file; flags override it")
    r.add_argument("--game")
    r.add_argument("--rule")
    r.add_argument("--eta", type=float)
    r.add_argument("--gamma", type=float)
    r.add_argument("--cg-eps", dest="cg_eps", type=float, help="CG tolerance (default 1e-6)")
    r.add_argument("--iters", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--init", help="default, random, or comma-separated x..,y.. coordinates")
    r.add_argument("--out", help="CSV path")
    r.add_argument("--json", help="also write a JSON record here")
    r.add_argument("--record-every", dest="record_every", type=int)
    r.add_argument("--max-passes", dest="max_passes", type=int)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("experiment", help="run a preset grid")
    e.add_argument("name", choices=sorted(PRESETS))
    e.add_argument("--alpha", type=float, action="append")
    e.add_argument("--test", action="append", choices=["bilinear", "quadratic-cc", "quadratic-xc"])
    e.add_argument("--d", type=int, action="append")
    e.add_argument("--eta", type=float, action="append")
    e.add_argument("--rule", action="append")
    e.add_argument("--gamma", type=float)
    e.add_argument("--cg-eps", dest="cg_eps", type=float)
    e.add_argument("--iters", type=int, help="iterations (exp1, exp3) or pass budget (exp2)")
    e.add_argument("--seed", type=int)
    e.add_argument("--record-every", dest="record_every", type=int)
    e.add_argument("--full", action="store_true", help="exp3 at the original architecture")
    e.add_argument("--out", help="output directory (default: the experiment name)")
    e.set_defaults(func=cmd_experiment)

    pl = sub.add_parser("plot", help="render result files as SVG")
    pl.add_argument("inputs", nargs="*")
    pl.add_argument("--kind", choices=PLOT_KINDS, default="lognorm")
    pl.add_argument("--out", required=True)
    pl.add_argument("--title")
    pl.set_defaults(func=cmd_plot)

    v = sub.add_parser("validate", help="self-check the built-in oracles")
    v.add_argument("--probes", type=int, default=100)
    v.add_argument("--tol", type=float, default=1e-8)
    v.add_argument("--fd-tol", dest="fd_tol", type=float, default=1e-6)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--gan", action="store_true", help="also check the GAN oracle")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, UnsupportedRuleError) as exc:
        print(f"cgdlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, records.SchemaError) as exc:
        print(f"cgdlab: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
