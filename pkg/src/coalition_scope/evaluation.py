"""Ranking and detection metrics plus the experiment harness that produces reports.

Ranking cases come from agreements (ground-truth labels or detector output)
whose honored status is read off the orders actually played. Each case ranks
the original agreement inside a universe of sampled alternatives, once by the
rationalizability score and once by raw value.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from coalition_scope.coalition import Agreement, honored
from coalition_scope.corpus import LabeledTuple, game_agreements, split_train_test
from coalition_scope.detection.classifier import ClassifierConfig, LogisticModel, train_classifier
from coalition_scope.detection.pipeline import construct_agreements, detect, featurize_tuples, round_view
from coalition_scope.engine import Play
from coalition_scope.equilibrium import EquilibriumConfig, ValueFunction
from coalition_scope.rationalizability import minmax, rank_scored, sample_alternatives, score_agreement_set
from coalition_scope.seeding import derive_seed

METHODS = ("rscore", "value")
GROUPS = ("honored", "violated")


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class RankedCase:
    universe: int
    rank: int
    honored: bool
    p: float
    game_id: str = ""
    agreement: str = ""

    def __post_init__(self):
        if not 0 <= self.rank < self.universe:
            raise EvaluationError(f"rank {self.rank} outside universe of {self.universe}")
        if not 0.0 <= self.p <= 1.0:
            raise EvaluationError(f"score {self.p} outside [0, 1]")


def mrr_at_k(cases: Sequence[RankedCase], k: int) -> float:
    if k < 1:
        raise EvaluationError("k must be >= 1")
    if not cases:
        raise EvaluationError("mrr of no cases")
    return float(np.mean([1.0 / (c.rank + 1) if c.rank < k else 0.0 for c in cases]))


def brier_by_group(cases: Sequence[RankedCase]) -> tuple[float | None, float | None]:
    """Mean ``(1 - p)^2`` over honored and over violated cases; ``None`` marks an empty group."""
    out = []
    for flag in (True, False):
        ps = sorted(c.p for c in cases if c.honored == flag)
        out.append(float(np.mean([(1.0 - p) ** 2 for p in ps])) if ps else None)
    return out[0], out[1]


def prf1(predictions: Sequence[bool], labels: Sequence[bool]) -> tuple[float, float, float]:
    if len(predictions) != len(labels):
        raise EvaluationError(f"{len(predictions)} predictions for {len(labels)} labels")
    if not labels:
        raise EvaluationError("no labels")
    pred = np.asarray(predictions, dtype=bool)
    gold = np.asarray(labels, dtype=bool)
    tp = int(np.sum(pred & gold))
    precision = tp / int(pred.sum()) if pred.any() else 0.0
    recall = tp / int(gold.sum()) if gold.any() else 0.0
    # from counts: one rounding, so f1 never drifts above max(precision, recall)
    wrong = int(np.sum(pred ^ gold))
    f1 = 2 * tp / (2 * tp + wrong) if tp else 0.0
    return precision, recall, f1


def f1_from(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


# -- ranking -----------------------------------------------------------------------

@dataclass(frozen=True)
class RankingConfig:
    k_alternatives: int = 10
    equilibrium: EquilibriumConfig = field(default_factory=lambda: EquilibriumConfig(k=4, iters=300))
    workers: int = 1


@dataclass(frozen=True)
class AgreementCase:
    """An agreement to rank, the history up to its dialogue, and its outcome."""

    game_id: str
    play: Play
    agreement: Agreement
    honored: bool


def _index_of(play: Play, state_round: int) -> int:
    for k, r in enumerate(play.rounds):
        if r.state.round == state_round:
            return k
    raise EvaluationError(f"round {state_round} not in game")


def _outcome(play: Play, idx: int, ag: Agreement) -> bool:
    action = play.rounds[idx].action
    return action is not None and honored(ag, action).both


def labeled_cases(games: Sequence[Play]) -> list[AgreementCase]:
    out = []
    for play in games:
        gid = play.metadata.get("game_id", "")
        for ag, _ in game_agreements(play):
            idx = _index_of(play, ag.round)
            out.append(AgreementCase(gid, play.upto(idx), ag, _outcome(play, idx, ag)))
    return out


def detected_cases(games: Sequence[Play], backend, model: LogisticModel) -> list[AgreementCase]:
    """Run the detector on every talking pair of every round."""
    out = []
    for play in games:
        gid = play.metadata.get("game_id", "")
        for idx, r in enumerate(play.rounds):
            if r.action is None:
                continue
            for p1, p2 in sorted(r.dialogue.pairs()):
                results = detect(play, idx, p1, p2, backend, model)
                view = round_view(play, idx, p1, p2)
                for ag in construct_agreements(results, view, backend):
                    out.append(AgreementCase(gid, play.upto(idx), ag, _outcome(play, idx, ag)))
    return out


@dataclass(frozen=True)
class CaseResult:
    rscore: RankedCase
    value: RankedCase


def _rank_case(case: AgreementCase, index: int, value_fn: ValueFunction, backend,
               cfg: RankingConfig, seed: int) -> CaseResult:
    play, ag = case.play, case.agreement.canonical()
    s = derive_seed(seed, index)
    alts, _ = sample_alternatives(play.map, play.last_state, ag, cfg.k_alternatives, s)
    scored = score_agreement_set(play, [ag] + alts, value_fn, backend, cfg.equilibrium, s)
    label = f"{ag.a1.notation} | {ag.a2.notation}"
    by_value = rank_scored(scored, "value")
    p_r = dict(zip((x.agreement for x in scored), minmax([x.wt for x in scored])))
    p_v = dict(zip((x.agreement for x in by_value), minmax([x.v_i + x.v_j for x in by_value])))
    cases = []
    for ranked, p in ((scored, p_r), (by_value, p_v)):
        hit = next(x for x in ranked if x.agreement == ag)
        cases.append(RankedCase(len(ranked), hit.rank, case.honored, p[ag], case.game_id, label))
    return CaseResult(*cases)


def rank_cases(cases: Sequence[AgreementCase], value_fn: ValueFunction, backend,
               config: RankingConfig | None = None, seed: int = 0) -> list[CaseResult]:
    """Rank every case; workers only change wall time, never results."""
    cfg = config or RankingConfig()
    if not cases:
        raise EvaluationError("no agreements to rank")
    jobs = list(enumerate(cases))
    if cfg.workers <= 1:
        return [_rank_case(c, i, value_fn, backend, cfg, seed) for i, c in jobs]
    with ThreadPoolExecutor(cfg.workers) as pool:
        return list(pool.map(lambda j: _rank_case(j[1], j[0], value_fn, backend, cfg, seed), jobs))


def ranking_metrics(results: Sequence[CaseResult]) -> tuple[dict, list[str]]:
    metrics: dict = {}
    flags: list[str] = []
    for method in METHODS:
        cases = [getattr(r, method) for r in results]
        entry: dict = {}
        for k in (1, 5):
            entry[f"mrr_at_{k}"] = {}
            for group, flag in zip(GROUPS, (True, False)):
                sub = [c for c in cases if c.honored == flag]
                entry[f"mrr_at_{k}"][group] = mrr_at_k(sub, k) if sub else None
        entry["brier_honored"], entry["brier_violated"] = brier_by_group(cases)
        metrics[method] = entry
    for group, flag in zip(GROUPS, (True, False)):
        if not any(r.rscore.honored == flag for r in results):
            flags.append(f"no {group} agreements: {group} metrics absent")
    return metrics, flags


# -- detection ---------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionOutcome:
    hybrid: tuple[float, float, float]
    classifier_only: tuple[float, float, float]
    filter_only: tuple[float, float, float]
    model: LogisticModel
    n_train: int
    n_test: int

    def to_document(self) -> dict:
        names = ("precision", "recall", "f1")
        return {
            arm: dict(zip(names, getattr(self, arm)))
            for arm in ("hybrid", "classifier_only", "filter_only")
        }


def run_detection_experiment(games: Sequence[Play], tuples: Sequence[LabeledTuple], backend,
                             seed: int = 0, ratio: float = 0.8,
                             config: ClassifierConfig | None = None) -> DetectionOutcome:
    """Hybrid (filter then classifier) against its two ablations on one seeded split."""
    by_id = {g.metadata["game_id"]: g for g in games}
    rows = featurize_tuples(by_id, tuples, backend)
    train, test = split_train_test(tuples, ratio, seed)
    train_keys = {t.key for t in train}
    tr = [r for r in rows if r.tuple.key in train_keys]
    te = [r for r in rows if r.tuple.key not in train_keys]
    gold = [r.tuple.label for r in te]
    kept = [(r.features, r.tuple.label) for r in tr if r.passed]
    hybrid = train_classifier(kept, seed, config)
    plain = train_classifier([(r.features, r.tuple.label) for r in tr], seed, config)
    hyb = [r.passed and bool(hybrid.predict(r.features.vector())[0]) for r in te]
    clf = [bool(plain.predict(r.features.vector())[0]) for r in te]
    filt = [r.passed for r in te]
    return DetectionOutcome(prf1(hyb, gold), prf1(clf, gold), prf1(filt, gold), hybrid, len(tr), len(te))


# -- report ------------------------------------------------------------------------

def _check_unit(name: str, value) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _check_unit(f"{name}.{k}", v)
    elif value is not None and not 0.0 <= value <= 1.0:
        raise EvaluationError(f"{name}={value} outside [0, 1]")


@dataclass(frozen=True)
class EvalReport:
    seed: int
    config: dict
    counts: dict
    ranking: dict
    detection: dict | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        _check_unit("ranking", self.ranking)
        if self.detection is not None:
            _check_unit("detection", self.detection)

    def metric(self, method: str, name: str, group: str | None = None):
        entry = self.ranking[method][name]
        return entry[group] if group is not None else entry

    def to_document(self) -> dict:
        doc = asdict(self)
        doc["flags"] = list(self.flags)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_document(cls, doc) -> "EvalReport":
        try:
            return cls(int(doc["seed"]), dict(doc["config"]), dict(doc["counts"]), dict(doc["ranking"]),
                       doc.get("detection"), tuple(doc.get("flags", ())))
        except (KeyError, TypeError, ValueError) as exc:
            raise EvaluationError(f"malformed report: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_document(json.loads(Path(path).read_text()))


CASE_COLUMNS = ("game_id", "agreement", "honored", "universe", "rscore_rank", "rscore_p", "value_rank", "value_p")


def cases_csv(results: Sequence[CaseResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CASE_COLUMNS)
    for r in results:
        w.writerow([r.rscore.game_id, r.rscore.agreement, int(r.rscore.honored), r.rscore.universe,
                    r.rscore.rank, repr(r.rscore.p), r.value.rank, repr(r.value.p)])
    return buf.getvalue()


def run_ranking_experiment(
    games: Sequence[Play],
    value_fn: ValueFunction,
    backend,
    config: RankingConfig | None = None,
    seed: int = 0,
    model: LogisticModel | None = None,
) -> tuple[EvalReport, list[CaseResult]]:
    """Rank each agreement against sampled alternatives under both methods.

    Agreements come from the detector when ``model`` is given, otherwise from
    the corpus's own labels.
    """
    cfg = config or RankingConfig()
    cases = detected_cases(games, backend, model) if model is not None else labeled_cases(games)
    if not cases:
        raise EvaluationError("no agreements found")
    results = rank_cases(cases, value_fn, backend, cfg, seed)
    ranking, flags = ranking_metrics(results)
    n_hon = sum(r.rscore.honored for r in results)
    counts = {"games": len(games), "cases": len(results), "honored": n_hon, "violated": len(results) - n_hon}
    echo = {
        "source": "detector" if model is not None else "labels",
        "k_alternatives": cfg.k_alternatives,
        **{f"equilibrium.{k}": v for k, v in asdict(cfg.equilibrium).items() if k != "proposal"},
    }
    return EvalReport(seed, echo, counts, ranking, None, tuple(flags)), results
