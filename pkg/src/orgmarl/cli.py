"""Command line entry point: ``orgmarl {run,sweep,oracle,export,gradcheck}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import harness, nn, oracle
from .config import load_config

# flag -> RunConfig field
DOMAIN_FLAGS = {
    "agents": "n_agents",
    "algo": "algo",
    "episodes": "episodes",
    "horizon": "horizon",
    "phi": "phi",
    "beta": "beta",
    "alpha": "alpha",
    "c": "c",
    "r": "r",
    "penalty": "penalty",
    "gamma": "gamma",
    "private_noise": "private_noise",
    "public_noise": "public_noise",
    "seed": "seed",
    "out": "out",
    "name": "name",
}


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--agents", type=int)
    p.add_argument("--algo", help="ia2c+, iac or ia2c- (comma list for one kind per seat)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--phi", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--penalty", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--private-noise", dest="private_noise", type=float)
    p.add_argument("--public-noise", dest="public_noise", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--name", help="run name (subdirectory of --out)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="any other config field, repeatable")


def _config_from(args):
    overrides = {field: getattr(args, flag) for flag, field in DOMAIN_FLAGS.items()
                 if getattr(args, flag, None) is not None}
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip().replace("-", "_")] = value
    return load_config(args.config, **overrides)


def _floats(text: str) -> list[float]:
    """``a,b,c`` or ``start:stop:step`` (stop inclusive)."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        n = int(round((stop - start) / step)) + 1
        return [round(start + k * step, 10) for k in range(n)]
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_run(args) -> int:
    cfg = _config_from(args)
    out = harness.run(cfg)
    rep = out.certification
    print(f"run {cfg.name}: training {out.status} after {out.episodes} episodes")
    if rep is not None:
        print(f"certification {rep.status} gap {rep.gap!r}")
        for i, p in enumerate(rep.policies):
            print(f"  agent {i}: {oracle.policy_name(p)}")
    if out.message:
        print(out.message)
    print(f"output in {out.directory}")
    return out.exit_code


def cmd_sweep(args) -> int:
    cfg = _config_from(args)
    levels = _floats(args.levels)
    out_dir = harness.run_directory(cfg)
    res = harness.sweep_noise(cfg, levels, args.runs, args.workers, out_dir)
    sys.stdout.write(res.summary_csv())
    print(f"output in {out_dir}")
    return 0


def cmd_oracle(args) -> int:
    cfg = _config_from(args)
    params = cfg.domain()
    gamma = args.discount if args.discount is not None else params.gamma
    writer = csv.writer(sys.stdout, lineterminator="\n")
    if args.what == "crossover":
        grid = oracle.policy_crossover(_floats(args.betas), _floats(args.phis), args.H, params.d, params.r)
        writer.writerow(["beta", "phi", "H", "winner"])
        for b, p, h, w in grid.rows():
            writer.writerow([repr(b), repr(p), h, w])
        print(f"# phi decides the winner for some beta: {grid.phi_is_deciding()}", file=sys.stderr)
    elif args.what == "table":
        v = oracle.value_triple(params, args.H, gamma)
        writer.writerow(["optimal", "balance_only", "group_only", "optimal_policy"])
        writer.writerow([repr(v.optimal), repr(v.balance_only), repr(v.group_only),
                         " / ".join(oracle.policy_name(p) for p in v.optimal_policies)])
    elif args.what == "best":
        best = oracle.enumerate_best(params, args.H, gamma)
        print(json.dumps({
            "team_value": best.team,
            "per_agent": best.per_agent.tolist(),
            "policies": [oracle.policy_name(p) for p in best.policies],
            "deviation_gain": best.deviation_gain.tolist(),
            "evaluated": best.evaluated,
        }, indent=2))
    elif args.what == "certify":
        if not args.policy:
            raise ValueError("oracle certify needs --policy once per agent, e.g. --policy balance,self,self")
        pols = [tuple(p.split(",")) for p in args.policy]
        rep = oracle.certify(pols, params, args.H, gamma)
        print(json.dumps(rep.to_dict(), indent=2))
        return 0 if rep.optimal else 1
    return 0


def cmd_export(args) -> int:
    paths = harness.emit_plot_data(args.runs, args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    ok = True
    for k in range(args.nets):
        for n_out, label in ((3, "actor"), (9, "critic")):
            net = nn.init_net(7, args.hidden, n_out, rng)
            x = rng.normal(size=(args.batch, 7))
            if label == "actor":
                a, adv = rng.integers(3, size=args.batch), rng.normal(size=args.batch)
                params, fn = nn.net_loss_checker(net, x, lambda o, a=a, adv=adv: nn.policy_loss_grad(o, a, adv, 0.01))
            else:
                idx, tgt = rng.integers(9, size=args.batch), rng.normal(size=args.batch)
                params, fn = nn.net_loss_checker(net, x, lambda o, idx=idx, tgt=tgt: nn.critic_loss_grad(o, idx, tgt))
            rep = nn.grad_check(params, fn, args.tolerance, names=list(nn.PARAM_NAMES))
            worst = max(worst, rep.max_rel_error)
            ok &= rep.passed
            if args.verbose or not rep.passed:
                print(f"{label} {k}: max rel error {rep.max_rel_error:.3e} at {rep.worst}")
    print(f"{'pass' if ok else 'FAIL'}: worst relative error {worst:.3e} (tolerance {args.tolerance:g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orgmarl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one configuration and certify the result")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="private-noise sweep with success counts")
    _add_config_flags(p)
    p.add_argument("--levels", default="0:0.5:0.05", help="a,b,c or start:stop:step")
    p.add_argument("--runs", type=int, default=5, help="seeds per level")
    p.add_argument("--workers", type=int, help="worker processes (capped by ORGMARL_WORKERS)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="exact analysis: crossover grid, value table, best policy, certify")
    p.add_argument("what", choices=["crossover", "table", "best", "certify"])
    _add_config_flags(p)
    p.add_argument("--H", type=int, default=20, help="horizon")
    p.add_argument("--discount", type=float, help="discount for evaluation (default: gamma)")
    p.add_argument("--betas", default="2.5:10:0.1")
    p.add_argument("--phis", default="0.05:0.95:0.05")
    p.add_argument("--policy", action="append", help="per-symbol policy for certify, e.g. balance,self,self")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("export", help="plot-data CSVs from run directories")
    p.add_argument("runs", nargs="*", help="run or sweep directories")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("gradcheck", help="finite-difference check of actor and critic gradients")
    p.add_argument("--nets", type=int, default=20)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--batch", type=int, default=5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"orgmarl {args.command}: error: {exc}", file=sys.stderr)
        return harness.EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
