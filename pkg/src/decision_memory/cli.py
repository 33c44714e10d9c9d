"""Command-line entry point: ingest, form-memory, refine, run, eval.

Settings come from defaults, then an optional JSON config file, then flags.
Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

from .agent import AgentConfig, DecisionProcess, choose_final, run_episode
from .envs.experts import default_catalog, generate_expert_trajectories, substream
from .envs.toyhouse import GoalTemplate, ToyHouse, parse_house_goal, sample_house_goal
from .envs.toyshop import ToyShop, ToyShopCatalog, sample_goal
from .errors import ConfigError, DecisionMemoryError, EmptyInput
from .explorer import ExplorerConfig, refine_goal
from .formation import FormationConfig, form_memory
from .llm.backends import Backend, Fallback, HttpBackend, HttpBackendConfig, ScriptedBackend
from .memory import MemorySet, atomic_write, load_memory, read_trajectories, save_memory, write_trajectories

logger = logging.getLogger("decision_memory")

FAMILIES = ("toyshop", "toyhouse")
BACKENDS = ("scripted", "http")
HOUSE_COLUMNS = [t.value for t in GoalTemplate]


@dataclass
class RunConfig:
    environment: str = "toyhouse"
    backend: str = "scripted"
    fixtures: str | None = None
    fallback: str = Fallback.RULE_BASED.value
    http: dict[str, Any] = field(default_factory=dict)
    output_dir: str = "runs/default"
    trajectories: str | None = None
    catalog: str | None = None
    memory_dir: str | None = None
    goals: str | None = None
    trajectory_count: int = 200
    noise: float = 0.2
    eval_goal_count: int = 50
    refine_goal_count: int = 10
    rounds: int = 1
    workers: int = 1
    seed: int = 0
    method_name: str = "Memory agent"
    formation: dict[str, Any] = field(default_factory=dict)
    explorer: dict[str, Any] = field(default_factory=dict)
    agent: dict[str, Any] = field(default_factory=dict)

    # derived paths default to the output directory
    @property
    def trajectories_path(self) -> Path:
        return Path(self.trajectories or Path(self.output_dir) / "trajectories.jsonl")

    @property
    def catalog_path(self) -> Path:
        return Path(self.catalog or Path(self.output_dir) / "catalog.json")

    @property
    def memory_path(self) -> Path:
        return Path(self.memory_dir or Path(self.output_dir) / "memory")

    def validate(self) -> None:
        if self.environment not in FAMILIES:
            raise ConfigError(f"environment must be one of {FAMILIES}, got {self.environment!r}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.backend == "http" and not self.http.get("endpoint_url"):
            raise ConfigError("the http backend needs http.endpoint_url")
        if self.fixtures and not Path(self.fixtures).is_file():
            raise ConfigError(f"fixture file not found: {self.fixtures}")
        if self.goals and not Path(self.goals).is_file():
            raise ConfigError(f"goals file not found: {self.goals}")
        for name in ("trajectory_count", "eval_goal_count", "refine_goal_count", "rounds", "workers"):
            if getattr(self, name) < 0 or (name in ("rounds", "workers") and getattr(self, name) < 1):
                raise ConfigError(f"{name} is out of range: {getattr(self, name)}")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError("noise must lie in [0, 1]")
        try:
            Fallback(self.fallback)
            self.formation_config()
            self.explorer_config()
            self.agent_config()
            if self.backend == "http":
                HttpBackendConfig(**self.http)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def formation_config(self) -> FormationConfig:
        return FormationConfig(**{"workers": self.workers, **self.formation})

    def explorer_config(self) -> ExplorerConfig:
        return ExplorerConfig(**self.explorer)

    def agent_config(self) -> AgentConfig:
        return AgentConfig.for_family(self.environment, **self.agent)


_SCALAR_FIELDS = {f.name for f in fields(RunConfig) if f.name not in ("http", "formation", "explorer", "agent")}


def load_config(path: str | None, overrides: dict[str, Any]) -> RunConfig:
    data: dict[str, Any] = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - {f.name for f in fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    nested = {"formation": "batch_size", "agent": "max_steps", "explorer": "top_n"}
    for section, key in nested.items():
        if overrides.get(key) is not None:
            data[section] = {**data.get(section, {}), key: overrides.pop(key)}
    data.update({k: v for k, v in overrides.items() if v is not None and k in _SCALAR_FIELDS})
    try:
        config = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    config.validate()
    return config


def make_backend(config: RunConfig) -> Backend:
    if config.backend == "http":
        return HttpBackend(HttpBackendConfig(**config.http))
    fallback = Fallback(config.fallback)
    if config.fixtures:
        return ScriptedBackend.from_file(config.fixtures, fallback)
    return ScriptedBackend((), fallback)


def _load_catalog(config: RunConfig) -> ToyShopCatalog:
    path = config.catalog_path
    if not path.is_file():
        raise ConfigError(f"catalog not found: {path} (run ingest first)")
    return ToyShopCatalog.load(path)


def make_env(config: RunConfig, catalog: ToyShopCatalog | None = None):
    if config.environment == "toyshop":
        return ToyShop(catalog or _load_catalog(config))
    return ToyHouse()


def _dump(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=1, sort_keys=False) + "\n"


# --- goals ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoalSpec:
    goal: str
    seed: int = 0


def read_goals(path: str) -> list[GoalSpec]:
    specs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("{"):
            d = json.loads(line)
            specs.append(GoalSpec(d["goal"], int(d.get("seed", 0))))
        else:
            specs.append(GoalSpec(line))
    return specs


def sample_goals(config: RunConfig, count: int, stream: str, catalog: ToyShopCatalog | None = None) -> list[GoalSpec]:
    rng = substream(config.seed, stream)
    if config.environment == "toyshop":
        catalog = catalog or _load_catalog(config)
        return [GoalSpec(sample_goal(catalog, rng)[0], 0) for _ in range(count)]
    return [GoalSpec(sample_house_goal(rng).render(), rng.randrange(2**31)) for _ in range(count)]


def goals_for(config: RunConfig, count: int, stream: str, catalog=None) -> list[GoalSpec]:
    return read_goals(config.goals) if config.goals else sample_goals(config, count, stream, catalog)


# --- commands --------------------------------------------------------------------------


def cmd_ingest(config: RunConfig) -> dict:
    catalog = None
    if config.environment == "toyshop":
        catalog = default_catalog(config.seed)
        doc = json.loads(catalog.to_json())
        atomic_write(config.catalog_path, _dump({"seed": config.seed, **doc}))
    trajectories = generate_expert_trajectories(config.environment, config.trajectory_count, config.seed,
                                                config.noise, catalog)
    count = write_trajectories(config.trajectories_path, trajectories)
    meta = {"seed": config.seed, "environment": config.environment, "count": count, "noise": config.noise}
    atomic_write(config.trajectories_path.with_suffix(".meta.json"), _dump(meta))
    print(f"wrote {count} trajectories to {config.trajectories_path}")
    return meta


def cmd_form(config: RunConfig, backend: Backend) -> MemorySet:
    if not config.trajectories_path.is_file():
        raise ConfigError(f"trajectory file not found: {config.trajectories_path}")
    trajectories = read_trajectories(config.trajectories_path)
    if not trajectories:
        raise EmptyInput(f"{config.trajectories_path} holds no trajectories")
    memories = form_memory(backend, trajectories, config.formation_config(), seed=config.seed)
    save_memory(memories, config.memory_path)
    for b in memories.batches:
        print(f"batch {b.batch_id}: {len(b)} tuples")
    return memories


def _load_memories(config: RunConfig) -> MemorySet:
    if not (config.memory_path / "memory.json").is_file():
        raise ConfigError(f"no memory at {config.memory_path} (run form-memory first)")
    return load_memory(config.memory_path)


def cmd_refine(config: RunConfig, backend: Backend) -> dict:
    memories = _load_memories(config)
    catalog = _load_catalog(config) if config.environment == "toyshop" else None
    goals = goals_for(config, config.refine_goal_count, "refine-goals", catalog)
    if not goals:
        raise EmptyInput("no refinement goals")
    records, traces = [], []
    total = 0
    for round_no in range(1, config.rounds + 1):
        for spec in goals:
            for memory in memories.batches:
                env = make_env(config, catalog)
                rec = refine_goal(backend, env, memory, spec.goal, spec.seed, config.explorer_config(),
                                  config.agent_config())
                total += rec.tuples_added
                records.append({"round": round_no, "batch_id": memory.batch_id, **rec.to_dict()})
                traces.append({"round": round_no, "batch_id": memory.batch_id, **rec.to_dict(with_tree=True)})
    if total:
        save_memory(memories, config.memory_path)
    report = {"seed": config.seed, "tuples_added": total, "records": records}
    out = Path(config.output_dir)
    atomic_write(out / "refine_report.json", _dump(report))
    atomic_write(out / "refine_traces.jsonl", "".join(json.dumps(t, ensure_ascii=False) + "\n" for t in traces))
    print(f"refined {len(goals)} goals x {len(memories.batches)} batches x {config.rounds} rounds: "
          f"{total} tuples added")
    return report


def _episodes(config: RunConfig, backend: Backend, memories: MemorySet, specs: Sequence[GoalSpec],
              catalog) -> list[list[DecisionProcess]]:
    jobs = [(g, b) for g in range(len(specs)) for b in range(len(memories.batches))]

    def run(job: tuple[int, int]) -> DecisionProcess:
        spec, memory = specs[job[0]], memories.batches[job[1]]
        env = make_env(config, catalog)
        env.reset(spec.goal, spec.seed)
        return run_episode(backend, env, memory, config.agent_config())

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    per_goal: list[list[DecisionProcess]] = [[] for _ in specs]
    for (g, _), process in zip(jobs, results):
        per_goal[g].append(process)
    return per_goal


def cmd_run(config: RunConfig, backend: Backend, goal: str, seed: int = 0) -> dict:
    memories = _load_memories(config)
    catalog = _load_catalog(config) if config.environment == "toyshop" else None
    (processes,) = _episodes(config, backend, memories, [GoalSpec(goal, seed)], catalog)
    final = choose_final(backend, processes)
    trace = {"seed": config.seed, "goal_seed": seed, "final": final.to_trace(),
             "candidates": [p.to_trace() for p in processes]}
    atomic_write(Path(config.output_dir) / "run_trace.json", _dump(trace))
    print(f"batch {final.batch_id} chosen, reward {final.reward}, {final.terminated.value}")
    return trace


def score_and_sr(rewards: Sequence[float | None]) -> tuple[float, float]:
    if not rewards:
        raise EmptyInput("no rewards to score")
    known = [r or 0.0 for r in rewards]
    score = 100.0 * sum(known) / len(known)
    sr = 100.0 * sum(1 for r in known if r == 1.0) / len(known)
    return round(score, 2), round(sr, 2)


def format_table(method: str, rewards: Sequence[float | None], tasks: Sequence[str] | None = None) -> str:
    score, sr = score_and_sr(rewards)
    header, row = ["Method", "Score", "SR"], [method, f"{score:.2f}", f"{sr:.2f}"]
    if tasks is not None:
        for column in HOUSE_COLUMNS:
            picked = [r for r, t in zip(rewards, tasks) if t == column]
            header.append(column)
            row.append(f"{score_and_sr(picked)[1]:.2f}" if picked else "-")
        header.append("All")
        row.append(f"{sr:.2f}")
    widths = [max(len(h), len(c)) for h, c in zip(header, row)]
    line = lambda cells: "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
    return "\n".join([line(header), "|" + "|".join("-" * (w + 2) for w in widths) + "|", line(row)]) + "\n"


def cmd_eval(config: RunConfig, backend: Backend) -> dict:
    memories = _load_memories(config)
    catalog = _load_catalog(config) if config.environment == "toyshop" else None
    specs = goals_for(config, config.eval_goal_count, "eval-goals", catalog)
    if not specs:
        raise EmptyInput("no evaluation goals")
    per_goal = _episodes(config, backend, memories, specs, catalog)
    finals = [choose_final(backend, processes) for processes in per_goal]
    rewards = [f.reward for f in finals]
    tasks = None
    if config.environment == "toyhouse":
        tasks = [parse_house_goal(s.goal).template.value for s in specs]
    score, sr = score_and_sr(rewards)
    table = format_table(config.method_name, rewards, tasks)
    report = {
        "seed": config.seed, "environment": config.environment, "method": config.method_name,
        "score": score, "success_rate": sr, "goals": len(specs), "batches": len(memories.batches),
        "episodes": [{"goal": s.goal, "goal_seed": s.seed, "batch_id": f.batch_id, "reward": f.reward,
                      "terminated": f.terminated.value, "steps": len(f.steps)} for s, f in zip(specs, finals)],
    }
    if tasks is not None:
        report["per_task_success"] = {
            c: score_and_sr([r for r, t in zip(rewards, tasks) if t == c])[1] for c in HOUSE_COLUMNS if c in tasks}
    out = Path(config.output_dir)
    atomic_write(out / "eval_report.json", _dump(report))
    atomic_write(out / "eval_report.txt", f"seed: {config.seed}\n" + table)
    print(table, end="")
    return report


# --- argument parsing ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decision-memory", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config")
    common.add_argument("--environment", choices=FAMILIES)
    common.add_argument("--backend", choices=BACKENDS)
    common.add_argument("--fixtures")
    common.add_argument("--fallback", choices=[f.value for f in Fallback])
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--trajectories")
    common.add_argument("--catalog")
    common.add_argument("--memory-dir", dest="memory_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    sub.add_parser("ingest", parents=[common], help="generate expert trajectories").add_argument(
        "--count", dest="trajectory_count", type=int)
    sub.choices["ingest"].add_argument("--noise", type=float)
    form = sub.add_parser("form-memory", parents=[common], help="build batch memories from trajectories")
    form.add_argument("--batch-size", dest="batch_size", type=int)
    refine = sub.add_parser("refine", parents=[common], help="explore and enhance the memory")
    refine.add_argument("--goals")
    refine.add_argument("--goal-count", dest="refine_goal_count", type=int)
    refine.add_argument("--rounds", type=int)
    refine.add_argument("--top-n", dest="top_n", type=int)
    refine.add_argument("--max-steps", dest="max_steps", type=int)
    run = sub.add_parser("run", parents=[common], help="run one goal against every batch")
    run.add_argument("--goal", required=True)
    run.add_argument("--goal-seed", type=int, default=0)
    run.add_argument("--max-steps", dest="max_steps", type=int)
    ev = sub.add_parser("eval", parents=[common], help="evaluate on held-out goals")
    ev.add_argument("--goals")
    ev.add_argument("--goal-count", dest="eval_goal_count", type=int)
    ev.add_argument("--max-steps", dest="max_steps", type=int)
    ev.add_argument("--method-name", dest="method_name")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "command", "verbose", "goal", "goal_seed")}
    try:
        config = load_config(args.config, overrides)
        if args.command == "ingest":
            cmd_ingest(config)
            return 0
        backend = make_backend(config)
        if args.command == "form-memory":
            cmd_form(config, backend)
        elif args.command == "refine":
            cmd_refine(config, backend)
        elif args.command == "run":
            cmd_run(config, backend, args.goal, args.goal_seed)
        elif args.command == "eval":
            cmd_eval(config, backend)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DecisionMemoryError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
