"""Command line entry point: train, evaluate, sweep, tune-threshold, validate."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from mmwave_handover.errors import ConfigurationError
from mmwave_handover.handover import HandoverConfig
from mmwave_handover.harness import experiment as ex
from mmwave_handover.harness import io
from mmwave_handover.harness.config import POLICIES, SimConfig, load_scenario
from mmwave_handover.harness.world import build_world
from mmwave_handover.learning import LearningConfig

log = logging.getLogger("mmwave_handover")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _policies(text: str) -> list[str]:
    names = list(POLICIES) if text == "all" else [p.strip() for p in text.split(",") if p.strip()]
    bad = [p for p in names if p not in POLICIES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown policy {bad[0]!r}; choose from {', '.join(POLICIES)} or all")
    return names


def _common(p: argparse.ArgumentParser, seed_required: bool = False, grid: bool = False) -> None:
    p.add_argument("--scenario", type=Path, help="YAML scenario file (defaults to the built-in sparse scenario)")
    p.add_argument("--seed", type=int, required=seed_required, help="master seed")
    if grid:
        p.add_argument("--density", type=_floats, dest="density_grid", help="comma-separated densities per m^2")
        p.add_argument("--t-ho", type=_floats, dest="t_ho_grid", help="comma-separated thresholds in dB")
        p.set_defaults(density=None, t_ho=None)
    else:
        p.add_argument("--density", type=float, help="BS density per m^2")
        p.add_argument("--t-ho", type=float, dest="t_ho", help="handover threshold in dB (two-level quantiser)")
    p.add_argument("--episodes", type=int, help="training episodes")
    p.add_argument("--bank-size", type=int, help="channel realizations used for training")
    p.add_argument("--tune-episodes", type=int, help="realizations used to tune T_D")
    p.add_argument("--trace", type=Path, help="channel-trace CSV replacing the built-in generator")
    p.add_argument("-v", "--verbose", action="store_true")


def config_from_args(args) -> SimConfig:
    cfg = load_scenario(args.scenario) if args.scenario else SimConfig()
    ch = {}
    if args.seed is not None:
        ch["seed"] = args.seed
    if args.density is not None:
        ch["density"] = args.density
    if args.t_ho is not None:
        ch["handover"] = HandoverConfig.two_level(args.t_ho, trigger_window=cfg.handover.trigger_window)
    if args.episodes is not None:
        lc = cfg.learning
        ch["learning"] = LearningConfig(lc.alpha, lc.gamma, lc.epsilon, args.episodes)
    if args.bank_size is not None:
        ch["bank_size"] = args.bank_size
    if args.tune_episodes is not None:
        ch["skeleton"] = cfg.skeleton.__class__(**{**cfg.skeleton.__dict__, "tune_episodes": args.tune_episodes})
    if args.trace is not None:
        ch["trace"] = str(args.trace)
    if getattr(args, "replications", None) is not None:
        ch["replications"] = args.replications
    return cfg.replace(**ch) if ch else cfg


def _print_summary(summaries, out=sys.stdout) -> None:
    out.write(f"{'policy':20s} {'mean R_traj (Gbps)':>18s} {'std':>8s} {'handovers':>9s} {'median':>6s} {'U':>6s}\n")
    for s in summaries:
        out.write(
            f"{s.policy:20s} {s.mean_Rtraj_bps / 1e9:18.3f} {s.std_Rtraj_bps / 1e9:8.3f} "
            f"{s.mean_handovers:9.2f} {s.median_handovers:6.1f} {s.mean_U:6.1f}\n"
        )


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    world = build_world(cfg)
    art = ex.train_artifacts(world, args.policies)
    io.save_policy(args.out, art)
    print(f"wrote {args.out} (N={world.N}, M={world.M}, T_D={[round(t, 4) for t in art.T_D]})")
    return 0


def _artifacts_for(world, cfg, policies, policy_file):
    if policy_file is not None:
        return io.load_policy(policy_file)
    if set(policies) & {"ours", "ours-ed", "smart-ucb"}:
        log.warning("no --policy-file given; training in-process")
    return ex.train_artifacts(world, policies)


def cmd_evaluate(args) -> int:
    cfg = config_from_args(args)
    world = build_world(cfg)
    art = _artifacts_for(world, cfg, args.policy, args.policy_file)
    metrics = ex.evaluate(world, art, args.policy, cfg.replications)
    summaries = ex.summarize(metrics)
    files = io.write_outputs(args.out_dir, metrics, summaries)
    _print_summary(summaries)
    print(f"metrics: {files['metrics']}  summary: {files['summary']}")
    return 0


def cmd_sweep(args) -> int:
    base = config_from_args(args)
    densities = args.density_grid or [base.density]
    thresholds = args.t_ho_grid or list(base.handover.boundaries[:1]) or [40.0]
    lines = ["density,t_ho_db," + ",".join(io.SUMMARY_HEADER)]
    for rho in densities:
        for t in thresholds:
            cfg = base.replace(density=rho, handover=HandoverConfig.two_level(t, trigger_window=base.handover.trigger_window))
            metrics, _, world = ex.run_experiment(cfg, args.policies)
            summaries = ex.summarize(metrics)
            print(f"# scenario density={rho:g}/m^2 T_HO={t:g} dB N={world.N}")
            _print_summary(summaries)
            for s in summaries:
                lines.append(f"{rho!r},{t!r},{s.policy},{s.mean_Rtraj_bps!r},{s.std_Rtraj_bps!r},{s.mean_handovers!r}")
    io.write_text(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    return 0


def cmd_tune(args) -> int:
    cfg = config_from_args(args)
    world = build_world(cfg)
    T_D, info = ex.tune_thresholds(world)
    sk = cfg.skeleton
    print(f"T_D* per BS (U_max={sk.U_max}, delta={sk.delta}, {info['episodes']} realizations)")
    for j, (t, p) in enumerate(zip(T_D, info["p_exceed"])):
        print(f"  BS {j}: T_D* = {t:.6f}  Pr{{U > {sk.U_max}}} = {p:.3f}")
    return 0


def cmd_validate(args) -> int:
    from mmwave_handover.harness.checks import run_checks

    ok = True
    for name, passed, detail in run_checks():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmwave-handover", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="tune T_D, learn the Q-table and UCB statistics, write a policy file")
    _common(p)
    p.add_argument("--out", type=Path, default=Path("policy.npz"))
    p.add_argument("--policies", type=_policies, default=["ours", "smart-ucb"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run replications and write metrics CSVs")
    _common(p, seed_required=True)
    p.add_argument("--policy", type=_policies, default=list(POLICIES), help="policy key, comma list or 'all'")
    p.add_argument("--policy-file", type=Path)
    p.add_argument("--replications", type=int)
    p.add_argument("--out-dir", type=Path, default=Path("results"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="repeat train+evaluate over densities and thresholds")
    _common(p, grid=True)
    p.add_argument("--policies", type=_policies, default=list(POLICIES))
    p.add_argument("--replications", type=int)
    p.add_argument("--out", type=Path, default=Path("sweep.csv"))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tune-threshold", help="optimise the skeleton distance threshold and print T_D*")
    _common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("validate", help="run the built-in oracle checks")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
