"""Command-line entry point: ``coalition-scope <command> [flags]``.

Commands talk to each other only through files. Exit status is 0 on
success, 1 when inputs fail validation and 2 when a run fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from coalition_scope.coalition import Agreement, add_agreement, empty_structure, export_dot, set_weight
from coalition_scope.corpus import (
    Corpus,
    GeneratorConfig,
    dataset_stats,
    generate_labeled_corpus,
    load_corpus,
    save_corpus,
    save_game_log,
)
from coalition_scope.detection.classifier import LogisticModel
from coalition_scope.detection.pipeline import construct_agreements, detect, round_view
from coalition_scope.engine import HoldAgent, MapGraph, RandomAgent, bundled_map, load_map, simulate
from coalition_scope.engine.mapgraph import bundled_map_names
from coalition_scope.equilibrium import EquilibriumConfig, ValueFunction, train_values
from coalition_scope.evaluation import (
    RankingConfig,
    cases_csv,
    run_detection_experiment,
    run_ranking_experiment,
)
from coalition_scope.intent import make_backend
from coalition_scope.rationalizability import sample_alternatives, score_agreement_set
from coalition_scope.seeding import derive_seed

ENDPOINT_ENV = "COALITION_SCOPE_ENDPOINT"


class UsageError(ValueError):
    """Bad flags or missing inputs."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    """Resolved flags shared by the commands."""

    seed: int
    backend: str
    endpoint: str | None
    table: Path | None
    order_boost: float | None
    k_alts: int
    iters: int
    gamma: float
    beta: float
    workers: int

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        for flag in ("corpus", "model", "values", "table", "detections", "scores"):
            path = getattr(args, flag, None)
            if path is not None and not Path(path).exists():
                raise UsageError(f"--{flag}: {path} does not exist")
        endpoint = getattr(args, "endpoint", None) or os.environ.get(ENDPOINT_ENV)
        backend = getattr(args, "backend", "heuristic")
        if backend == "remote" and not endpoint:
            raise UsageError(f"--backend remote needs --endpoint or {ENDPOINT_ENV}")
        if backend == "table" and getattr(args, "table", None) is None:
            raise UsageError("--backend table needs --table")
        return cls(
            seed=args.seed, backend=backend, endpoint=endpoint,
            table=getattr(args, "table", None), order_boost=getattr(args, "order_boost", None),
            k_alts=getattr(args, "k_alts", 10), iters=getattr(args, "iters", 300),
            gamma=getattr(args, "gamma", 0.99), beta=getattr(args, "beta", 0.1),
            workers=getattr(args, "workers", 1),
        )

    def make_backend(self):
        params = {}
        if self.backend == "heuristic" and self.order_boost is not None:
            params["order_boost"] = self.order_boost
        return make_backend(self.backend, self.endpoint, str(self.table) if self.table else None, **params)

    def equilibrium(self, k: int = 4) -> EquilibriumConfig:
        return EquilibriumConfig(k=k, iters=self.iters, gamma=self.gamma, beta=self.beta)


def _map(spec: str) -> MapGraph:
    if spec in bundled_map_names():
        return bundled_map(spec)
    if not Path(spec).exists():
        raise UsageError(f"--map: {spec} is neither a bundled map ({', '.join(bundled_map_names())}) nor a file")
    return load_map(Path(spec))


def _values(args, m: MapGraph, gamma: float) -> ValueFunction:
    return ValueFunction.load(args.values) if args.values else ValueFunction.default(m, gamma)


def _write_json(path, doc) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _read_agreements(path) -> list[dict]:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict) or not isinstance(doc.get("agreements"), list):
        raise UsageError(f"{path}: expected an object with an 'agreements' list")
    return doc["agreements"]


def _corpus(args) -> Corpus:
    corpus = load_corpus(args.corpus)
    if not corpus.games:
        raise UsageError(f"--corpus: {args.corpus} holds no games")
    return corpus


# -- commands ----------------------------------------------------------------------

def cmd_simulate(args, cfg: RunConfig) -> None:
    m = _map(args.map)
    kind = {"random": RandomAgent, "hold": HoldAgent}[args.agents]
    play = simulate(m, {p: kind(p) for p in m.powers}, args.rounds, cfg.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_game_log(play, args.out)


def cmd_gen_corpus(args, cfg: RunConfig) -> None:
    m = _map(args.map)
    gen = GeneratorConfig(rounds=args.rounds)
    games, tuples = generate_labeled_corpus(m, args.games, args.honesty, cfg.seed, gen)
    stats = dataset_stats(tuples) if tuples else None
    manifest = {
        "map": args.map, "seed": cfg.seed, "honesty": args.honesty, "rounds": args.rounds,
        "tuples": len(tuples), "positives": stats.positives if stats else 0,
    }
    save_corpus(args.out, games, tuples, manifest)


def cmd_train_detector(args, cfg: RunConfig) -> None:
    corpus = _corpus(args)
    outcome = run_detection_experiment(list(corpus.games.values()), corpus.tuples, cfg.make_backend(), cfg.seed)
    outcome.model.save(args.out)
    print(json.dumps(outcome.to_document(), sort_keys=True))


def cmd_train_values(args, cfg: RunConfig) -> None:
    m = _map(args.map)
    eq = EquilibriumConfig(k=args.k, iters=cfg.iters, gamma=cfg.gamma, beta=cfg.beta,
                           horizon=args.horizon, mode=args.mode)
    train_values(m, args.games, eq, cfg.seed).save(args.out)


def cmd_detect(args, cfg: RunConfig) -> None:
    corpus = _corpus(args)
    model = LogisticModel.load(args.model)
    backend = cfg.make_backend()
    agreements, units = [], []
    for gid, play in sorted(corpus.games.items()):
        for idx, r in enumerate(play.rounds):
            if r.action is None:
                continue
            for p1, p2 in sorted(r.dialogue.pairs()):
                results = detect(play, idx, p1, p2, backend, model)
                for res in results:
                    units.append({
                        "game_id": gid, "round": res.round, "power1": res.power1, "power2": res.power2,
                        "unit": res.unit, "passed_filter": res.passed_filter,
                        "probability": res.probability, "label": res.label,
                        "a_star": res.a_star.notation if res.a_star else None, "error": res.error,
                    })
                for ag in construct_agreements(results, round_view(play, idx, p1, p2), backend):
                    agreements.append({"game_id": gid, **ag.to_record()})
    tried = [u for u in units if u["passed_filter"]]
    failed = [u for u in tried if u["error"]]
    if tried and len(failed) == len(tried):
        raise RuntimeError(f"intent backend failed on all {len(tried)} units: {failed[0]['error']}")
    if failed:
        print(f"warning: intent backend failed on {len(failed)} of {len(tried)} units", file=sys.stderr)
    _write_json(args.out, {"agreements": agreements, "units": units})


def cmd_score(args, cfg: RunConfig) -> None:
    corpus = _corpus(args)
    records = _read_agreements(args.detections)
    backend = cfg.make_backend()
    eq = cfg.equilibrium()
    value_fn = None
    out = []
    for n, rec in enumerate(records):
        play = corpus.games.get(rec.get("game_id"))
        if play is None:
            raise UsageError(f"{args.detections}: agreement {n} names unknown game {rec.get('game_id')!r}")
        value_fn = value_fn or _values(args, play.map, cfg.gamma)
        ag = Agreement.from_record(rec).canonical()
        idx = next((k for k, r in enumerate(play.rounds) if r.state.round == ag.round), None)
        if idx is None:
            raise UsageError(f"{args.detections}: agreement {n} refers to missing round {ag.round}")
        history = play.upto(idx)
        s = derive_seed(cfg.seed, n)
        alts, _ = sample_alternatives(play.map, history.last_state, ag, cfg.k_alts, s)
        scored = score_agreement_set(history, [ag] + alts, value_fn, backend, eq, s)
        hit = next(x for x in scored if x.agreement == ag)
        out.append({"game_id": rec["game_id"], "universe": len(scored), **hit.to_record()})
    _write_json(args.out, {"agreements": out})


def cmd_export_graph(args, cfg: RunConfig) -> None:
    records = _read_agreements(args.scores)
    games = sorted({r.get("game_id") for r in records})
    if args.game is not None:
        records = [r for r in records if r.get("game_id") == args.game]
    elif len(games) > 1:
        raise UsageError(f"--scores: {len(games)} games present; pick one with --game")
    if args.map:
        players = _map(args.map).powers
    else:
        players = sorted({p for r in records for p in (r["power_i"], r["power_j"])})
    structure = empty_structure(players)
    for rec in records:
        ag = Agreement.from_record(rec)
        structure = add_agreement(structure, ag)
        if "wt" in rec:
            structure = set_weight(structure, ag, float(rec["wt"]))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(export_dot(structure))


def cmd_evaluate(args, cfg: RunConfig) -> None:
    from coalition_scope.plotting import plot_detection, plot_mrr, plot_rank_histogram

    corpus = _corpus(args)
    games = list(corpus.games.values())
    backend = cfg.make_backend()
    value_fn = _values(args, games[0].map, cfg.gamma)
    model = LogisticModel.load(args.model) if args.model else None
    rcfg = RankingConfig(cfg.k_alts, cfg.equilibrium(), cfg.workers)
    report, results = run_ranking_experiment(games, value_fn, backend, rcfg, cfg.seed, model)
    detection = None
    labels = {t.label for t in corpus.tuples}
    if labels == {True, False}:
        detection = run_detection_experiment(games, corpus.tuples, backend, cfg.seed).to_document()
    report = type(report)(report.seed, {**report.config, "backend": cfg.backend}, report.counts,
                          report.ranking, detection, report.flags)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    (out / "cases.csv").write_text(cases_csv(results))
    plot_mrr(report, out / "mrr.png")
    plot_rank_histogram(results, out / "ranks.png")
    if detection is not None:
        plot_detection(detection, out / "detection.png")


# -- parser ------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, backend: bool = False) -> None:
    p.add_argument("--seed", type=int, default=0, help="root seed for all randomness")
    if backend:
        p.add_argument("--backend", choices=("heuristic", "table", "remote"), default="heuristic")
        p.add_argument("--endpoint", help=f"intent service URL (falls back to ${ENDPOINT_ENV})")
        p.add_argument("--table", type=Path, help="intent fixture file for --backend table")
        p.add_argument("--order-boost", type=float, help="heuristic backend: logit bonus for quoted orders")


def _scoring(p: argparse.ArgumentParser) -> None:
    p.add_argument("--values", type=Path, help="value-function JSON (default: built-in weights)")
    p.add_argument("--k-alts", type=int, default=10, help="alternatives per agreement")
    p.add_argument("--iters", type=int, default=300, help="regret-matching iterations")
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--beta", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coalition-scope", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="play one game with simple agents")
    p.add_argument("--map", required=True, help="bundled map name or map JSON path")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--rounds", type=int, default=6)
    p.add_argument("--agents", choices=("random", "hold"), default="random")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-corpus", help="generate a labeled negotiation corpus")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--games", type=int, default=10)
    p.add_argument("--honesty", type=float, default=0.75)
    p.add_argument("--rounds", type=int, default=6)
    _common(p)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train-detector", help="fit the agreement classifier on a corpus")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _common(p, backend=True)
    p.set_defaults(func=cmd_train_detector)

    p = sub.add_parser("train-values", help="learn a value function by self-play")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--games", type=int, default=20, help="training episodes")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--k", type=int, default=4, help="candidate actions per power")
    p.add_argument("--horizon", type=int, default=4)
    p.add_argument("--mode", choices=("linear", "tabular"), default="linear")
    _common(p)
    p.set_defaults(func=cmd_train_values)

    p = sub.add_parser("detect", help="detect agreements in every round of a corpus")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _common(p, backend=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("score", help="rationalizability scores for detected agreements")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--detections", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _scoring(p)
    _common(p, backend=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("export-graph", help="write a coalition structure as DOT")
    p.add_argument("--scores", required=True, type=Path, help="score or detection file")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--game", help="game id when the file spans several games")
    p.add_argument("--map", help="include every power of this map as a node")
    _common(p)
    p.set_defaults(func=cmd_export_graph)

    p = sub.add_parser("evaluate", help="ranking and detection experiments with report and figures")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--model", type=Path, help="rank detector output instead of corpus labels")
    p.add_argument("--workers", type=int, default=1)
    _scoring(p)
    _common(p, backend=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        cfg = RunConfig.from_args(args)
        args.func(args, cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
