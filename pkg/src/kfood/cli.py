"""Command-line pipeline: generate instances, solve offline, simulate online, report."""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import subprocess
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import instance as inst_mod
from .errors import KFoodError
from .flownet import build_network
from .metric import gen_erdos_renyi, load_graph
from .metrics import evaluate, fmt, lorenz_csv, lorenz_curve
from .offline.lpformat import export_milp_text, parse_external_solution
from .offline.model import InitialMode, Objective, build_flow_milp
from .offline.solution import Status, extract_rewards
from .offline.solver import Limits, solve_embedded
from .online.simulate import Policy, simulate

log = logging.getLogger("kfood")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INSTANCE = 0, 2, 3, 4
OFFLINE = ("FlowMILP", "FlowMILP2S", "MinCost")
ONLINE = tuple(p.value for p in Policy)
ALGORITHMS = OFFLINE + ONLINE


class ConfigError(KFoodError):
    pass


class SolverFailure(KFoodError):
    pass


@dataclass
class ExperimentConfig:
    instance: str | None = None
    generate: dict | None = None
    algorithms: list[str] = field(default_factory=lambda: list(ONLINE))
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    alpha: float | None = 1.2
    penalty: float | str = "auto"
    solver: str = "embedded"
    out: str = "results"
    initial_mode: str = "free"
    round_travel: bool = False
    trace: bool = False
    max_nodes: int = 10_000
    time_limit: float = 300.0
    jobs: int = 1

    def check(self):
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithms {unknown}; choose from {list(ALGORITHMS)}")
        if "FlowMILP2S" in self.algorithms and self.alpha is None:
            raise ConfigError("FlowMILP2S requires alpha")
        if (self.instance is None) == (self.generate is None):
            raise ConfigError("give exactly one of an instance file or a generate block")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not (self.solver == "embedded" or self.solver.startswith("external:")):
            raise ConfigError("solver must be 'embedded' or 'external:<command>'")
        if self.penalty != "auto":
            try:
                self.penalty = float(self.penalty)
            except ValueError:
                raise ConfigError("penalty must be a number or 'auto'") from None
        InitialMode(self.initial_mode)


def _pair(text, cast=int):
    a, b = text.split(",")
    return cast(a), cast(b)


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


# -- gen ---------------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.family == "syn":
        ms = gen_erdos_renyi(args.nodes, args.p, _pair(args.weights), seed=args.seed)
        inst = inst_mod.gen_synthetic(ms, args.requests, horizon=args.horizon,
                                      arrival_range=_pair(args.arrivals),
                                      prep_range=_pair(args.prep), k=args.k,
                                      seed=args.seed, speed=args.speed)
    elif args.family == "star":
        inst = inst_mod.gen_partition_instance(_ints(args.d), args.k, slack=args.slack)
    elif args.family == "tiny":
        inst = inst_mod.gen_tiny(args.seed)
    else:
        ms = load_graph(args.graph)
        inst = inst_mod.ingest_csv(args.orders, ms, args.k, seed=args.seed, eta=args.eta,
                                   speed=args.speed, horizon=args.horizon)
    problems = inst_mod.validate(inst)
    if problems:
        for v in problems:
            log.error("request %s: %s", v.request_id, v.reason)
        return EXIT_INSTANCE
    inst_mod.save_instance(inst, args.output)
    log.info("wrote %s (%d requests, k=%d)", args.output, inst.n, inst.k)
    return EXIT_OK


# -- run ---------------------------------------------------------------------


def _load_config(args, restrict=None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        with open(args.config) as fh:
            doc = json.load(fh)
        unknown = set(doc) - set(ExperimentConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key, val in doc.items():
            setattr(cfg, key, val)
    for key in ("instance", "alpha", "penalty", "solver", "out", "initial_mode",
                "max_nodes", "time_limit", "jobs"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "algorithms", None):
        cfg.algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    elif restrict is not None and not getattr(args, "config", None):
        cfg.algorithms = list(restrict)
    if getattr(args, "seeds", None):
        cfg.seeds = _ints(args.seeds)
    if getattr(args, "trace", False):
        cfg.trace = True
    if getattr(args, "round_travel", False):
        cfg.round_travel = True
    if cfg.instance is not None:
        cfg.generate = None
    cfg.check()
    if restrict is not None:
        stray = [a for a in cfg.algorithms if a not in restrict]
        if stray:
            raise ConfigError(f"{stray} not available in this subcommand")
    return cfg


def _instance_for(cfg: ExperimentConfig):
    if cfg.instance is not None:
        return inst_mod.load_instance(cfg.instance)
    g = dict(cfg.generate)
    family = g.pop("family", "syn")
    if family == "star":
        return inst_mod.gen_partition_instance(g["d"], g["k"], g.get("slack", 1))
    if family == "tiny":
        return inst_mod.gen_tiny(g.get("seed", 0))
    ms = gen_erdos_renyi(g.get("nodes", 500), g.get("p", 0.5), tuple(g.get("weights", (10, 10000))),
                         seed=g.get("seed"))
    return inst_mod.gen_synthetic(ms, g.get("requests", 250), horizon=g.get("horizon", 1000),
                                  arrival_range=tuple(g.get("arrivals", (100, 900))),
                                  prep_range=tuple(g.get("prep", (1, 100))), k=g.get("k", 100),
                                  seed=g.get("seed"))


def _solve(model, cfg: ExperimentConfig, workdir: Path):
    if cfg.solver == "embedded":
        return solve_embedded(model, Limits(cfg.max_nodes, cfg.time_limit))
    command = shlex.split(cfg.solver[len("external:"):])
    if not command:
        raise SolverFailure("empty external solver command")
    lp_path = workdir / "model.lp"
    lp_path.write_text(export_milp_text(model))
    try:
        proc = subprocess.run(command + [str(lp_path)], capture_output=True, text=True,
                              timeout=cfg.time_limit)
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise SolverFailure(f"external solver {command[0]!r} failed to run: {exc}") from None
    if proc.returncode != 0:
        raise SolverFailure(f"external solver exited with {proc.returncode}: {proc.stderr.strip()}")
    lines = [ln.strip() for ln in proc.stdout.splitlines() if ln.strip()]
    if not lines:
        raise SolverFailure("external solver printed no solution path")
    try:
        text = Path(lines[-1]).read_text()
    except OSError as exc:
        raise SolverFailure(f"cannot read solution file: {exc}") from None
    return parse_external_solution(model, text)


def _run_offline(inst, algorithm: str, cfg: ExperimentConfig, workdir: Path) -> dict:
    net = build_network(inst, round_travel=cfg.round_travel)
    penalty = None if cfg.penalty == "auto" else cfg.penalty
    objective = Objective.MINCOST if algorithm == "MinCost" else Objective.MAXMIN
    alpha = cfg.alpha if algorithm == "FlowMILP2S" else None
    model = build_flow_milp(net, penalty=penalty, objective=objective, alpha=alpha,
                            initial_mode=cfg.initial_mode)
    sol = _solve(model, cfg, workdir)
    if sol.x is None:
        raise SolverFailure(f"{algorithm}: solver returned {sol.status.value} without a solution")
    rep = extract_rewards(sol, net)
    return {"algorithm": algorithm, "seed": None, "status": sol.status.value,
            "objective": sol.objective_value, "unserved": len(rep.unserved),
            "rewards": rep.rewards, "total_cost": rep.total_cost, "k": model.k}


def _run_online(inst, algorithm: str, seed, cfg: ExperimentConfig, out: Path) -> dict:
    res = simulate(inst, algorithm, seed=seed, trace=cfg.trace)
    if cfg.trace:
        (out / f"trace_{algorithm}__seed{seed}.ndjson").write_text(res.trace_ndjson())
    return {"algorithm": algorithm, "seed": seed, "status": "Optimal",
            "unserved": res.unserved, "rewards": res.rewards, "k": inst.k,
            "divergence": res.divergence}


def _run_task(job):
    inst, algorithm, seed, cfg = job
    try:
        if algorithm in OFFLINE:
            with tempfile.TemporaryDirectory() as tmp:
                return _run_offline(inst, algorithm, cfg, Path(tmp)), None
        return _run_online(inst, algorithm, seed, cfg, Path(cfg.out)), None
    except KFoodError as exc:
        return None, str(exc)


def cmd_run(cfg: ExperimentConfig) -> int:
    try:
        inst = _instance_for(cfg)
    except KFoodError as exc:
        log.error("cannot load instance: %s", exc)
        return EXIT_INSTANCE
    problems = inst_mod.validate(inst)
    if problems:
        for v in problems:
            log.error("instance invalid: request %s: %s", v.request_id, v.reason)
        return EXIT_INSTANCE

    out = Path(cfg.out)
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(algorithm, seed) for algorithm in sorted(cfg.algorithms)
             for seed in (cfg.seeds if algorithm == Policy.RANDOM.value else [cfg.seeds[0]])]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(_run_task, [(inst, a, s, cfg) for a, s in tasks]))
    else:
        results = [_run_task((inst, a, s, cfg)) for a, s in tasks]
    failures = []
    for (algorithm, seed), (record, error) in zip(tasks, results):
        if error is not None:
            log.error("%s failed: %s", algorithm, error)
            failures.append({"algorithm": algorithm, "seed": seed, "error": error})
            continue
        name = f"{algorithm}__seed{seed}.json" if record["seed"] is not None else f"{algorithm}.json"
        (runs_dir / name).write_text(json.dumps(record, sort_keys=True, indent=1) + "\n")
    failure_path = out / "failures.json"
    if failures:
        failure_path.write_text(json.dumps(failures, indent=1) + "\n")
    elif failure_path.exists():
        failure_path.unlink()
    failed = {f["algorithm"] for f in failures}
    aggregate(out, exclude=failed)
    return EXIT_SOLVER if failures else EXIT_OK


def aggregate(out: Path, exclude=()) -> list[dict]:
    """Rebuild ``metrics.csv`` and the Lorenz files from ``out/runs``."""
    out = Path(out)
    records = {}
    for path in sorted((out / "runs").glob("*.json")):
        rec = json.loads(path.read_text())
        if rec["algorithm"] in exclude:
            continue
        records.setdefault(rec["algorithm"], []).append(rec)
    rows = []
    for algorithm in sorted(records):
        recs = sorted(records[algorithm], key=lambda r: (r["seed"] is None, r["seed"]))
        if algorithm == "MinCost":
            r = recs[0]
            rows.append({"algorithm": algorithm, "unserved": r["unserved"],
                         "cost": fmt(r["total_cost"] / r["k"]), "min_reward": "",
                         "zero_count": ""})
            continue
        per_seed = [evaluate(_exact(r["rewards"]), r["unserved"]) for r in recs]
        if len(per_seed) == 1:
            row = per_seed[0].as_row()
        else:
            row = {"unserved": fmt(_mean(m.unserved for m in per_seed)),
                   "cost": fmt(_mean(m.cost for m in per_seed)),
                   "min_reward": fmt(_mean(m.min_reward for m in per_seed)),
                   "zero_count": fmt(_mean(m.zero_reward_count for m in per_seed))}
        rows.append({"algorithm": algorithm, **row})
        curves = [lorenz_curve(r["rewards"], None) for r in recs]
        mean_curve = [(pts[0][0], sum(p[1] for p in pts) / len(pts)) for pts in zip(*curves)]
        (out / f"lorenz_{algorithm}.csv").write_text(lorenz_csv(mean_curve))
    lines = ["algorithm,unserved,cost,min_reward,zero_count"]
    lines += [f"{r['algorithm']},{r['unserved']},{r['cost']},{r['min_reward']},{r['zero_count']}"
              for r in rows]
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")
    return rows


def _exact(values):
    return [int(v) if float(v).is_integer() else v for v in values]


def _mean(values):
    vals = list(values)
    if all(isinstance(v, (int, Fraction)) for v in vals):
        return Fraction(sum(vals), len(vals))
    return sum(float(v) for v in vals) / len(vals)


# -- argument parsing ---------------------------------------------------------


def _add_run_flags(p):
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--config", help="JSON experiment config (flags override it)")
    p.add_argument("--algorithms", help=f"comma list from {','.join(ALGORITHMS)}")
    p.add_argument("--seeds", help="comma list of seeds (Random is averaged over all)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--trace", action="store_true", help="write NDJSON event traces")
    p.add_argument("--jobs", type=int, help="worker processes for the seed x algorithm fan-out")


def _add_offline_flags(p):
    p.add_argument("--alpha", type=float, help="two-sided bound for FlowMILP2S")
    p.add_argument("--penalty", help="per-request penalty, or 'auto'")
    p.add_argument("--solver", help="'embedded' or 'external:<command>'")
    p.add_argument("--initial-mode", dest="initial_mode", choices=["free", "fixed"])
    p.add_argument("--round-travel", dest="round_travel", action="store_true",
                   help="round travel times up to whole timesteps")
    p.add_argument("--max-nodes", dest="max_nodes", type=int)
    p.add_argument("--time-limit", dest="time_limit", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kfood", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate or ingest an instance")
    gsub = gen.add_subparsers(dest="family", required=True)
    syn = gsub.add_parser("syn", help="Erdos-Renyi synthetic workload")
    syn.add_argument("--nodes", type=int, default=500)
    syn.add_argument("--p", type=float, default=0.5)
    syn.add_argument("--requests", type=int, default=250)
    syn.add_argument("--k", type=int, default=100)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--horizon", type=int, default=1000)
    syn.add_argument("--arrivals", default="100,900")
    syn.add_argument("--prep", default="1,100")
    syn.add_argument("--weights", default="10,10000")
    syn.add_argument("--speed", type=float, default=1)
    star = gsub.add_parser("star", help="star-metric partition instance")
    star.add_argument("--d", required=True, help="comma list of leaf distances")
    star.add_argument("--k", type=int, required=True)
    star.add_argument("--slack", type=int, default=1)
    tiny = gsub.add_parser("tiny", help="small random instance for cross-checks")
    tiny.add_argument("--seed", type=int, default=0)
    ing = gsub.add_parser("csv", help="ingest a delivery trace")
    ing.add_argument("--graph", required=True, help='graph JSON {"nodes": m, "edges": [[u,v,w],...]}')
    ing.add_argument("--orders", required=True, help="CSV: " + ",".join(inst_mod.CSV_COLUMNS))
    ing.add_argument("--k", type=int, required=True)
    ing.add_argument("--seed", type=int, default=0)
    ing.add_argument("--eta", type=float, default=1)
    ing.add_argument("--speed", type=float, default=1)
    ing.add_argument("--horizon", type=int)
    for p in (syn, star, tiny, ing):
        p.add_argument("-o", "--output", required=True)

    run = sub.add_parser("run", help="offline and online algorithms on one instance")
    _add_run_flags(run)
    _add_offline_flags(run)
    solve = sub.add_parser("solve", help="offline MILP algorithms only")
    _add_run_flags(solve)
    _add_offline_flags(solve)
    solve.add_argument("--export-lp", dest="export_lp", help="also write the model in LP format")
    simulate_p = sub.add_parser("simulate", help="online policies only")
    _add_run_flags(simulate_p)
    report = sub.add_parser("report", help="re-aggregate an output directory")
    report.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "report":
            rows = aggregate(Path(args.out))
            log.info("aggregated %d algorithms", len(rows))
            return EXIT_OK
        restrict = {"solve": OFFLINE, "simulate": ONLINE}.get(args.command)
        cfg = _load_config(args, restrict)
        if getattr(args, "export_lp", None):
            inst = _instance_for(cfg)
            net = build_network(inst, round_travel=cfg.round_travel)
            model = build_flow_milp(net, initial_mode=cfg.initial_mode,
                                    penalty=None if cfg.penalty == "auto" else cfg.penalty)
            Path(args.export_lp).write_text(export_milp_text(model))
        return cmd_run(cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (KFoodError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INSTANCE if args.command == "gen" else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
