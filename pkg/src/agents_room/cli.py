"""Command-line entry point: generate, synth, metrics, judge, rank, stats.

Settings resolve as command-line flag, then environment variable, then the
``[cli]`` section of the backend config file, then the built-in default.
Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import __version__
from .agreement import fleiss_kappa, latin_square_assign
from .backends import CLI_SECTION, CONFIG_ENV, Backend, build_backend, load_profiles
from .dataset import (
    DEFAULT_FIELD_MAP,
    corpus_stats,
    format_stats,
    load_dataset,
    parse_field_map,
    stats_to_json,
)
from .errors import AgentsRoomError, ConfigError, StepFailed
from .judge import (
    Dimension,
    accumulate_wins,
    consistency_rate,
    judge_pairs,
    read_verdicts,
    schedule_pairs,
    usable,
    write_verdicts,
)
from .metrics import CorpusReport, format_table, system_report
from .orchestrator import OrchestratorConfig, Variant, run_to_dir
from .ranking import DEFAULT_EPSILON, fit_bradley_terry
from .scratchpad import AgentLabel
from .synthdata import PLANNING_CONTEXTS, GoldExample, synthesize_all

logger = logging.getLogger("agents_room")

HUMAN_SYSTEM = "human"
ENV_PREFIX = "AGENTS_ROOM_"


@dataclass(frozen=True)
class CliConfig:
    config_path: str | None
    template_dir: str | None
    seed: int
    log_level: str
    parallel: int


def _config_path(flag: str | None) -> str | None:
    if flag:
        return flag
    env = os.environ.get(CONFIG_ENV)
    if env:
        return env
    return "backends.ini" if Path("backends.ini").is_file() else None


def _file_settings(path: str | None) -> Mapping[str, str]:
    if path is None:
        return {}
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read config file {path}")
    return dict(parser[CLI_SECTION]) if parser.has_section(CLI_SECTION) else {}


def resolve_config(args: argparse.Namespace) -> CliConfig:
    path = _config_path(args.config)
    file = _file_settings(path)

    def pick(name: str, default, convert: Callable = str):
        flag = getattr(args, name, None)
        if flag is not None:
            return convert(flag)
        env = os.environ.get(ENV_PREFIX + name.upper())
        if env:
            return convert(env)
        if name in file:
            return convert(file[name])
        return default

    try:
        return CliConfig(
            config_path=path,
            template_dir=pick("template_dir", None),
            seed=pick("seed", 0, int),
            log_level=pick("log_level", "WARNING", str.upper),
            parallel=max(1, pick("parallel", 1, int)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad setting: {exc}") from exc


# -- shared helpers ----------------------------------------------------------

_UNSAFE = re.compile(r"[^\w.-]+")


def safe_id(text: str) -> str:
    return _UNSAFE.sub("_", text).strip("_") or "task"


def read_prompts(path: str | os.PathLike, field_map: Mapping[str, str]) -> list[tuple[str, str]]:
    """(task_id, prompt) pairs from JSON Lines; the ``story`` field, if any,
    is ignored so dataset files work as prompt files."""
    out = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            raw = json.loads(line)
            data = {field_map.get(k, DEFAULT_FIELD_MAP.get(k, k)): v for k, v in raw.items()}
            prompt = data.get("prompt")
            if not isinstance(prompt, str) or not prompt.strip():
                raise ConfigError(f"{path}:{lineno}: missing prompt")
            task_id = safe_id(str(data.get("id", f"prompt-{lineno}")))
            if task_id in seen:
                raise ConfigError(f"{path}:{lineno}: duplicate id {task_id!r}")
            seen.add(task_id)
            out.append((task_id, prompt))
    return out


def _profile_backend(profiles: Mapping, name: str) -> Backend:
    if name not in profiles:
        raise ConfigError(f"unknown backend profile {name!r}; known: {', '.join(sorted(profiles))}")
    return build_backend(profiles[name])


def _parse_routes(items: Sequence[str]) -> dict[str, str]:
    routes = {}
    for item in items:
        label, sep, profile = item.partition("=")
        if not sep:
            raise ConfigError(f"bad --route {item!r}; expected LABEL=profile")
        routes[AgentLabel.from_name(label).name] = profile
    return routes


def discover_systems(runs: Sequence[str]) -> dict[str, dict[str, str]]:
    """Stories per system from run directories.

    Each entry is ``[name=]path``. Stories are read from
    ``path/<task_id>/<variant>/story.txt``; a root holding several variants
    yields one system per variant (``name/variant``). Flat directories of
    ``<task_id>.txt`` files are accepted too. Empty stories are skipped.
    """
    systems: dict[str, dict[str, str]] = {}
    for entry in runs:
        name, sep, path = entry.partition("=")
        if not sep:
            path, name = entry, Path(entry.rstrip("/")).name
        root = Path(path)
        if not root.is_dir():
            raise ConfigError(f"not a directory: {root}")
        found: dict[str, dict[str, str]] = {}
        for story in sorted(root.glob("*/*/story.txt")):
            found.setdefault(story.parent.name, {})[story.parent.parent.name] = story.read_text(encoding="utf-8")
        if not found:
            flat = {p.stem: p.read_text(encoding="utf-8") for p in sorted(root.glob("*.txt"))}
            if flat:
                found[""] = flat
        if not found:
            raise ConfigError(f"no stories under {root}")
        for variant, stories in found.items():
            system = name if len(found) == 1 else f"{name}/{variant}"
            if system in systems:
                raise ConfigError(f"duplicate system name {system!r}")
            kept = {k: v.strip() for k, v in stories.items() if v.strip()}
            if len(kept) < len(stories):
                logger.warning("%s: skipped %d empty stories", system, len(stories) - len(kept))
            systems[system] = kept
    return systems


def _human_stories(args: argparse.Namespace) -> tuple[dict[str, str], dict[str, str]]:
    """(prompts, stories) keyed by safe id for the chosen dataset split."""
    if not args.dataset:
        return {}, {}
    records = [
        r
        for r in load_dataset(args.dataset, parse_field_map(args.field_map))
        if args.split is None or r.split == args.split
    ]
    return {safe_id(r.id): r.prompt for r in records}, {safe_id(r.id): r.story for r in records}


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


# -- subcommands ---------------------------------------------------------------


def cmd_generate(args: argparse.Namespace, cfg: CliConfig) -> int:
    profiles = load_profiles(cfg.config_path)
    routes = _parse_routes(args.route or [])
    names = {args.backend, *routes.values()}
    backends = {name: _profile_backend(profiles, name) for name in names}
    backends["default"] = backends[args.backend]
    config = OrchestratorConfig(
        variant=args.variant,
        max_steps=args.max_steps,
        routing=routes,
        max_output_tokens=args.max_output_tokens,
        temperature=args.temperature,
        seed=cfg.seed,
        template_dir=cfg.template_dir,
    )
    prompts = read_prompts(args.prompts, parse_field_map(args.field_map))
    out = Path(args.out)

    def one(item: tuple[str, str]) -> bool:
        task_id, prompt = item
        try:
            trace = run_to_dir(prompt, config, backends, out / task_id / args.variant.value)
        except StepFailed as exc:
            logger.error("%s: %s", task_id, exc)
            return False
        if trace.budget_exhausted:
            logger.warning("%s: step budget exhausted", task_id)
        return True

    with ThreadPoolExecutor(max_workers=cfg.parallel) as pool:
        ok = list(pool.map(one, prompts))
    print(f"{sum(ok)}/{len(ok)} runs written to {out}")
    return 0 if all(ok) else 1


def cmd_synth(args: argparse.Namespace, cfg: CliConfig) -> int:
    teacher = _profile_backend(load_profiles(cfg.config_path), args.teacher)
    records = load_dataset(args.dataset, parse_field_map(args.field_map))
    golds = [GoldExample(r.id, r.prompt, r.story, r.split) for r in records if r.split == args.split]
    if not golds:
        raise ConfigError(f"no {args.split} records in {args.dataset}")
    counts = synthesize_all(
        golds,
        teacher,
        args.out,
        parallel=cfg.parallel,
        planning_context=args.planning_context,
        template_dir=cfg.template_dir,
        temperature=args.temperature,
        seed=cfg.seed,
    )
    for stem, n in counts.items():
        print(f"{stem}\t{n}")
    return 0


def cmd_metrics(args: argparse.Namespace, cfg: CliConfig) -> int:
    prompts, references = _human_stories(args)
    systems = discover_systems(args.runs.split(",")) if args.runs else {}
    if args.include_human:
        if not references:
            raise ConfigError("--include-human needs --dataset")
        systems[HUMAN_SYSTEM] = references
    if not systems:
        raise ConfigError("nothing to measure; pass --runs and/or --include-human")
    report = CorpusReport(
        [
            system_report(
                name,
                stories,
                prompts,
                None if name == HUMAN_SYSTEM else references,
            )
            for name, stories in systems.items()
        ]
    )
    out = Path(args.out)
    _write_json(out / "report.json", report.to_json())
    table = format_table(report)
    (out / "table.txt").write_text(table + "\n", encoding="utf-8")
    if not args.no_plot:
        from .plotting import plot_surface_metrics

        plot_surface_metrics(report, out / "metrics.png")
    print(table)
    return 0


def cmd_judge(args: argparse.Namespace, cfg: CliConfig) -> int:
    judge = _profile_backend(load_profiles(cfg.config_path), args.judge)
    systems = discover_systems(args.runs.split(","))
    if args.include_human:
        _, references = _human_stories(args)
        if not references:
            raise ConfigError("--include-human needs --dataset")
        systems[HUMAN_SYSTEM] = references
    common = sorted(set.intersection(*(set(s) for s in systems.values())))
    if not common:
        raise ConfigError("the systems share no prompt ids")
    for name, stories in systems.items():
        if len(stories) > len(common):
            logger.warning("%s: %d stories without a counterpart are ignored", name, len(stories) - len(common))
    tasks = schedule_pairs(sorted(systems), common, cfg.seed)
    if args.flip:
        tasks = [t.flipped() for t in tasks]
    stories = {(name, pid): text for name, by_id in systems.items() for pid, text in by_id.items()}
    records = judge_pairs(
        tasks,
        stories,
        judge,
        parallel=cfg.parallel,
        temperature=args.temperature,
        template_dir=cfg.template_dir,
    )
    write_verdicts(records, args.out)
    failed = sum(r.verdict is None for r in records)
    print(f"{len(records) - failed}/{len(records)} verdicts parsed; written to {args.out}")
    return 0


def cmd_rank(args: argparse.Namespace, cfg: CliConfig) -> int:
    records = []
    for path in args.verdicts.split(","):
        records.extend(usable(read_verdicts(path)))
    if not records:
        raise ConfigError("no usable verdicts")
    dimension = Dimension.parse(args.dimension)
    wins = accumulate_wins(records, dimension, args.tie_policy)
    strengths = fit_bradley_terry(wins, epsilon=args.epsilon)
    out = Path(args.out)
    result = {
        "dimension": dimension.value,
        "tie_policy": args.tie_policy,
        "epsilon": args.epsilon,
        "iterations": strengths.iterations,
        "wins": {"systems": list(wins.systems), "matrix": wins.wins.tolist()},
        "strengths": [{"rank": r, "system": s, "strength": p} for r, s, p in strengths.ranked()],
    }
    _write_json(out / "strengths.json", result)
    if not args.no_plot:
        from .plotting import plot_strengths

        plot_strengths(strengths, out / "strengths.png", title=dimension.value)
    width = max(len("system"), *(len(s) for s in wins.systems))
    print(f"{'rank':>4}  {'system':<{width}}  strength")
    for r, s, p in strengths.ranked():
        print(f"{r:>4}  {s:<{width}}  {p:.6f}")
    return 0


def cmd_stats(args: argparse.Namespace, cfg: CliConfig) -> int:
    records = load_dataset(args.dataset, parse_field_map(args.field_map))
    stats = corpus_stats(records)
    _write_json(Path(args.out) / "stats.json", stats_to_json(stats))
    print(format_stats(stats, Path(args.dataset).stem))
    return 0


def cmd_assign(args: argparse.Namespace, cfg: CliConfig) -> int:
    items = []
    with open(args.items, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                data = json.loads(line)
                items.append((str(data["item_id"]), str(data["prompt_id"])))
    assignment = latin_square_assign(args.raters.split(","), items, args.cap)
    _write_json(Path(args.out), assignment)
    for rater, assigned in assignment.items():
        print(f"{rater}\t{len(assigned)}")
    return 0


def cmd_agreement(args: argparse.Namespace, cfg: CliConfig) -> int:
    with open(args.ratings, encoding="utf-8") as fh:
        table = [json.loads(line) for line in fh if line.strip()]
    print(f"fleiss_kappa\t{fleiss_kappa(table):.6f}")
    return 0


def cmd_consistency(args: argparse.Namespace, cfg: CliConfig) -> int:
    first = usable(read_verdicts(args.first))
    second = usable(read_verdicts(args.second))
    dims = list(Dimension) if args.dimension == "all" else [Dimension.parse(args.dimension)]
    for dim in dims:
        print(f"{dim.value}\t{consistency_rate(first, second, dim):.4f}")
    return 0


# -- parser --------------------------------------------------------------------


def _variant(text: str) -> Variant:
    try:
        return Variant.parse(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"invalid variant {text!r} (choose from {', '.join(v.value for v in Variant)})"
        ) from None


def _dimension(text: str) -> str:
    if text != "all":
        try:
            Dimension.parse(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid dimension {text!r}") from None
    return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"backend/CLI config file (env {CONFIG_ENV}, else ./backends.ini)")
    common.add_argument("--template-dir", help="directory whose templates shadow the packaged ones")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING (default) or ERROR")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--field-map", help="renames as old=new[,old=new]; applies to field names and split values")

    parser = argparse.ArgumentParser(prog="agents-room", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("generate", parents=[common, data], help="write stories for a prompt file")
    p.add_argument("--variant", type=_variant, default=Variant.PLAN_WRITE, help="e2e, plan, write or plan-write")
    p.add_argument("--prompts", required=True, help="JSON Lines with 'prompt' and optional 'id'")
    p.add_argument("--backend", required=True, help="backend profile for every agent")
    p.add_argument("--route", action="append", metavar="LABEL=PROFILE", help="per-agent backend (repeatable)")
    p.add_argument("--out", required=True, help="output root; runs go to <out>/<task_id>/<variant>/")
    p.add_argument("--parallel", type=int, help="concurrent runs")
    p.add_argument("--max-steps", type=int, default=16)
    p.add_argument("--max-output-tokens", type=int, default=4096)
    p.add_argument("--temperature", type=float, default=1.0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("synth", parents=[common, data], help="build per-agent training files from gold stories")
    p.add_argument("--dataset", required=True)
    p.add_argument("--teacher", required=True, help="backend profile of the teacher model")
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train", choices=("train", "valid", "test"))
    p.add_argument("--planning-context", default="task-only", choices=PLANNING_CONTEXTS, help="what planning inputs see besides the task")
    p.add_argument("--parallel", type=int)
    p.add_argument("--temperature", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("metrics", parents=[common, data], help="surface metrics table and report.json")
    p.add_argument("--runs", help="comma-separated [name=]dir entries, one system each")
    p.add_argument("--dataset", help="dataset for prompts and reference stories")
    p.add_argument("--split", default="test", help="dataset split to use (default test)")
    p.add_argument("--include-human", action="store_true", help="add the reference stories as a system")
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("judge", parents=[common, data], help="pairwise judging of run directories")
    p.add_argument("--runs", required=True, help="comma-separated [name=]dir entries, one system each")
    p.add_argument("--judge", required=True, help="backend profile of the judge")
    p.add_argument("--out", required=True, help="verdicts JSON Lines file")
    p.add_argument("--dataset")
    p.add_argument("--split", default="test")
    p.add_argument("--include-human", action="store_true")
    p.add_argument("--flip", action="store_true", help="swap every presentation (second run for consistency)")
    p.add_argument("--parallel", type=int)
    p.add_argument("--temperature", type=float, default=1.0)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("rank", parents=[common], help="Bradley-Terry strengths from verdicts")
    p.add_argument("--verdicts", required=True, help="comma-separated verdict files")
    p.add_argument("--dimension", type=_dimension, default="overall")
    p.add_argument("--tie-policy", choices=("half", "drop"), default="half")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--out", default=".", help="directory for strengths.json and strengths.png")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("stats", parents=[common, data], help="dataset split counts and token lengths")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=".", help="directory for stats.json")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("assign", parents=[common], help="Latin-square rater assignment")
    p.add_argument("--raters", required=True, help="comma-separated rater names")
    p.add_argument("--items", required=True, help="JSON Lines with item_id and prompt_id")
    p.add_argument("--cap", type=int, default=5, help="items per rater per sitting")
    p.add_argument("--out", required=True, help="assignment JSON file")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("agreement", parents=[common], help="Fleiss' kappa of a ratings table")
    p.add_argument("--ratings", required=True, help="JSON Lines, one list of labels per item")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("consistency", parents=[common], help="judge consistency across swapped runs")
    p.add_argument("--first", required=True)
    p.add_argument("--second", required=True)
    p.add_argument("--dimension", type=_dimension, default="all")
    p.set_defaults(func=cmd_consistency)
    return parser


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"agents-room: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(
        level=getattr(logging, cfg.log_level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args, cfg)
    except (AgentsRoomError, OSError, ValueError, KeyError) as exc:
        logger.debug("command failed", exc_info=True)
        print(f"agents-room {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())
