"""Object catalog, pair records, vote aggregation, and the manifest format.

The dataset lives in a single line-oriented text manifest (see docs/formats.md
for the grammar):

    version 1
    # comment lines and blanks are ignored
    object <id> fold=<train|dev|test> container=<0|1>
    expr <object-id> <free text ...>
    pair <in|on> <grasped-id> <target-id> label=<yes|no> source=<robot|annotation> [trials=<p1>,...,<p5>]

Pairs listed in the manifest are trusted as enumerated (the corpus's
exclusions are data, not code); validation enforces only the structural
rules: both objects exist and share a fold, `in` targets are containers,
robot pairs carry exactly five trial paths, and no (relation, grasped,
target) key repeats.
"""
from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field

FOLDS = ("train", "dev", "test")
RELATIONS = ("in", "on")
LABELS = ("yes", "no")
SOURCES = ("robot", "annotation")
VOTE_VALUES = ("yes", "no", "maybe", "yes_if_rotated")
VOTE_ORIGINS = ("robot-trials", "crowd")
TRIALS_PER_ROBOT_PAIR = 5
CAPTURE_FILES = ("pre.rgb.png", "pre.depth.u16", "post.rgb.png", "post.depth.u16")


class ManifestError(ValueError):
    """Manifest text violates the documented schema."""


class DatasetValidationError(ValueError):
    """Structural rule violations; offenders listed one per line."""

    def __init__(self, offenders: list[str]):
        self.offenders = list(offenders)
        super().__init__("dataset validation failed:\n" + "\n".join(self.offenders))


@dataclass(frozen=True)
class ObjectRecord:
    id: str
    fold: str
    is_container: bool
    expressions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.fold not in FOLDS:
            raise ValueError(f"fold must be one of {FOLDS}, got {self.fold!r}")


@dataclass(frozen=True)
class PairRecord:
    grasped_id: str
    target_id: str
    relation: str
    label: str
    source: str
    trials: tuple[str, ...] = ()

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"relation must be one of {RELATIONS}")
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")

    def key(self) -> tuple[str, str, str]:
        return (self.relation, self.grasped_id, self.target_id)


@dataclass
class ObjectCatalog:
    objects: list[ObjectRecord]
    _by_id: dict[str, ObjectRecord] = field(init=False, repr=False)

    def __post_init__(self):
        self._by_id = {}
        for obj in self.objects:
            if obj.id in self._by_id:
                raise ManifestError(f"duplicate object id {obj.id!r}")
            self._by_id[obj.id] = obj

    def get(self, object_id: str) -> ObjectRecord:
        return self._by_id[object_id]

    def __contains__(self, object_id: str) -> bool:
        return object_id in self._by_id

    def fold_objects(self, fold: str) -> list[ObjectRecord]:
        return [o for o in self.objects if o.fold == fold]

    def fold_containers(self, fold: str) -> list[ObjectRecord]:
        return [o for o in self.objects if o.fold == fold and o.is_container]


@dataclass(frozen=True)
class VoteSet:
    votes: tuple[str, ...]
    origin: str

    def __post_init__(self):
        if self.origin not in VOTE_ORIGINS:
            raise ValueError(f"origin must be one of {VOTE_ORIGINS}")
        for v in self.votes:
            if v not in VOTE_VALUES:
                raise ValueError(f"unknown vote value {v!r}")
        if self.origin == "crowd" and len(self.votes) < 3:
            raise ValueError(f"crowd vote sets need >= 3 votes, got {len(self.votes)}")


def aggregate_votes(voteset: VoteSet) -> str:
    """Unanimous yes -> yes; anything else (any no, maybe, yes-if-rotated,
    or disagreement) rounds down to no."""
    if not voteset.votes:
        raise ValueError("cannot aggregate an empty vote set")
    return "yes" if all(v == "yes" for v in voteset.votes) else "no"


def majority_vote(predictions: list[str] | tuple[str, ...]) -> str:
    if len(predictions) != TRIALS_PER_ROBOT_PAIR:
        raise ValueError(f"majority vote needs exactly {TRIALS_PER_ROBOT_PAIR} predictions, got {len(predictions)}")
    for p in predictions:
        if p not in LABELS:
            raise ValueError(f"unknown label {p!r}")
    yes = sum(1 for p in predictions if p == "yes")
    return "yes" if yes >= 3 else "no"


def enumerate_pairs(catalog: ObjectCatalog, fold: str, relation: str) -> list[tuple[str, str]]:
    """All ordered in-fold pairs in the relation's domain, self-pairs excluded.

    `in` draws targets from the fold's containers, `on` from all fold objects.
    This is the generative domain; a manifest may list a different subset
    (corpus exclusions, or the cross-product form that keeps self-pairs).
    """
    if fold not in FOLDS:
        raise ValueError(f"fold must be one of {FOLDS}")
    if relation not in RELATIONS:
        raise ValueError(f"relation must be one of {RELATIONS}")
    objs = [o.id for o in catalog.fold_objects(fold)]
    targets = [o.id for o in (catalog.fold_containers(fold) if relation == "in" else catalog.fold_objects(fold))]
    return [(g, t) for g in objs for t in targets if g != t]


@dataclass(frozen=True)
class FoldReport:
    """Validated dataset counts. pair_counts keys are (fold, relation, source);
    all_pairs keys are (fold, relation) and include both sources."""

    object_counts: dict[str, int]
    container_counts: dict[str, int]
    pair_counts: dict[tuple[str, str, str], int]

    def all_pairs(self, fold: str, relation: str) -> int:
        return sum(self.pair_counts.get((fold, relation, s), 0) for s in SOURCES)

    def robot_pairs(self, fold: str, relation: str) -> int:
        return self.pair_counts.get((fold, relation, "robot"), 0)


def validate_folds(catalog: ObjectCatalog, pairs: list[PairRecord]) -> FoldReport:
    offenders: list[str] = []
    seen: set[tuple[str, str, str]] = set()
    pair_counts: Counter = Counter()
    for p in pairs:
        tag = f"pair {p.relation} {p.grasped_id} {p.target_id}"
        missing = [oid for oid in (p.grasped_id, p.target_id) if oid not in catalog]
        if missing:
            offenders.append(f"{tag}: unknown object(s) {', '.join(missing)}")
            continue
        g, t = catalog.get(p.grasped_id), catalog.get(p.target_id)
        if g.fold != t.fold:
            offenders.append(f"{tag}: spans folds {g.fold} and {t.fold}")
            continue
        if p.relation == "in" and not t.is_container:
            offenders.append(f"{tag}: target {t.id} is not a container")
        if p.source == "robot" and len(p.trials) != TRIALS_PER_ROBOT_PAIR:
            offenders.append(f"{tag}: robot pair has {len(p.trials)} trials, needs {TRIALS_PER_ROBOT_PAIR}")
        if p.source != "robot" and p.trials:
            offenders.append(f"{tag}: non-robot pair carries trial paths")
        if p.key() in seen:
            offenders.append(f"{tag}: duplicate pair")
        seen.add(p.key())
        pair_counts[(g.fold, p.relation, p.source)] += 1
    if offenders:
        raise DatasetValidationError(offenders)
    return FoldReport(
        object_counts={f: len(catalog.fold_objects(f)) for f in FOLDS},
        container_counts={f: len(catalog.fold_containers(f)) for f in FOLDS},
        pair_counts=dict(pair_counts),
    )


# ---------------------------------------------------------------------------
# manifest text format
# ---------------------------------------------------------------------------

MANIFEST_VERSION = 1


def _parse_kv(token: str, line_no: int) -> tuple[str, str]:
    if "=" not in token:
        raise ManifestError(f"line {line_no}: expected key=value, got {token!r}")
    k, v = token.split("=", 1)
    return k, v


def parse_manifest(text: str) -> tuple[ObjectCatalog, list[PairRecord]]:
    """Parse manifest text into records. Pure: no filesystem access."""
    objects: dict[str, dict] = {}
    pairs: list[PairRecord] = []
    saw_version = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        kind = tokens[0]
        if kind == "version":
            if len(tokens) != 2 or not tokens[1].isdigit():
                raise ManifestError(f"line {line_no}: malformed version line")
            if int(tokens[1]) != MANIFEST_VERSION:
                raise ManifestError(f"line {line_no}: unsupported manifest version {tokens[1]}")
            saw_version = True
        elif kind == "object":
            if not saw_version:
                raise ManifestError(f"line {line_no}: version line must come first")
            if len(tokens) != 4:
                raise ManifestError(f"line {line_no}: object needs id, fold=, container=")
            oid = tokens[1]
            kv = dict(_parse_kv(t, line_no) for t in tokens[2:])
            if set(kv) != {"fold", "container"}:
                raise ManifestError(f"line {line_no}: object needs fold= and container=")
            if kv["fold"] not in FOLDS:
                raise ManifestError(f"line {line_no}: unknown fold {kv['fold']!r}")
            if kv["container"] not in ("0", "1"):
                raise ManifestError(f"line {line_no}: container must be 0 or 1")
            if oid in objects:
                raise ManifestError(f"line {line_no}: duplicate object {oid!r}")
            objects[oid] = {"fold": kv["fold"], "container": kv["container"] == "1", "exprs": []}
        elif kind == "expr":
            if len(tokens) < 3:
                raise ManifestError(f"line {line_no}: expr needs an object id and text")
            oid = tokens[1]
            if oid not in objects:
                raise ManifestError(f"line {line_no}: expr for unknown object {oid!r}")
            objects[oid]["exprs"].append(" ".join(tokens[2:]))
        elif kind == "pair":
            if not saw_version:
                raise ManifestError(f"line {line_no}: version line must come first")
            if len(tokens) < 6:
                raise ManifestError(f"line {line_no}: pair needs relation, ids, label=, source=")
            relation, g, t = tokens[1], tokens[2], tokens[3]
            if relation not in RELATIONS:
                raise ManifestError(f"line {line_no}: unknown relation {relation!r}")
            kv = dict(_parse_kv(tok, line_no) for tok in tokens[4:])
            extra = set(kv) - {"label", "source", "trials"}
            if extra or "label" not in kv or "source" not in kv:
                raise ManifestError(f"line {line_no}: pair needs label= and source= (and only trials= besides)")
            if kv["label"] not in LABELS:
                raise ManifestError(f"line {line_no}: unknown label {kv['label']!r}")
            if kv["source"] not in SOURCES:
                raise ManifestError(f"line {line_no}: unknown source {kv['source']!r}")
            trials: tuple[str, ...] = ()
            if "trials" in kv:
                trials = tuple(p for p in kv["trials"].split(",") if p)
                if kv["source"] != "robot":
                    raise ManifestError(f"line {line_no}: trials= only valid for source=robot")
                if len(trials) != TRIALS_PER_ROBOT_PAIR:
                    raise ManifestError(
                        f"line {line_no}: robot pair lists {len(trials)} trials, needs {TRIALS_PER_ROBOT_PAIR}"
                    )
            elif kv["source"] == "robot":
                raise ManifestError(f"line {line_no}: robot pair is missing trials=")
            pairs.append(PairRecord(g, t, relation, kv["label"], kv["source"], trials))
        else:
            raise ManifestError(f"line {line_no}: unknown record kind {kind!r}")
    if not saw_version:
        raise ManifestError("manifest has no version line")
    catalog = ObjectCatalog([
        ObjectRecord(oid, spec["fold"], spec["container"], tuple(spec["exprs"]))
        for oid, spec in objects.items()
    ])
    return catalog, pairs


def manifest_to_text(catalog: ObjectCatalog, pairs: list[PairRecord]) -> str:
    lines = [f"version {MANIFEST_VERSION}"]
    for obj in catalog.objects:
        lines.append(f"object {obj.id} fold={obj.fold} container={int(obj.is_container)}")
        for expr in obj.expressions:
            lines.append(f"expr {obj.id} {expr}")
    for p in pairs:
        line = f"pair {p.relation} {p.grasped_id} {p.target_id} label={p.label} source={p.source}"
        if p.trials:
            line += " trials=" + ",".join(p.trials)
        lines.append(line)
    return "\n".join(lines) + "\n"


def load_manifest(path: str | os.PathLike, require_trials: bool = True) -> tuple[ObjectCatalog, list[PairRecord]]:
    """Read, parse, and validate a manifest file.

    With ``require_trials`` every robot pair's trial directories must exist
    (relative to the manifest's directory) and hold the four capture files.
    Loading a trial-less structural manifest (catalog and labels only) is the
    ``require_trials=False`` mode.
    """
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as f:
        catalog, pairs = parse_manifest(f.read())
    validate_folds(catalog, pairs)
    if require_trials:
        root = os.path.dirname(os.path.abspath(path))
        problems = []
        for p in pairs:
            for rel in p.trials:
                d = os.path.join(root, rel)
                if not os.path.isdir(d):
                    problems.append(f"pair {p.relation} {p.grasped_id} {p.target_id}: missing trial dir {rel}")
                    continue
                absent = [fn for fn in CAPTURE_FILES if not os.path.isfile(os.path.join(d, fn))]
                if absent:
                    problems.append(
                        f"pair {p.relation} {p.grasped_id} {p.target_id}: trial {rel} lacks {', '.join(absent)}"
                    )
        if problems:
            raise DatasetValidationError(problems)
    return catalog, pairs


# ---------------------------------------------------------------------------
# language statistics
# ---------------------------------------------------------------------------

def tokenize(expression: str) -> list[str]:
    return expression.lower().split()


@dataclass(frozen=True)
class LanguageStats:
    length_histogram: dict[int, int]
    rank_frequency: tuple[tuple[str, int], ...]

    def modal_length(self) -> int | None:
        if not self.length_histogram:
            return None
        return max(self.length_histogram, key=lambda k: (self.length_histogram[k], -k))


def language_stats(catalog: ObjectCatalog) -> LanguageStats:
    lengths: Counter = Counter()
    words: Counter = Counter()
    for obj in catalog.objects:
        for expr in obj.expressions:
            toks = tokenize(expr)
            lengths[len(toks)] += 1
            words.update(toks)
    ranked = tuple(sorted(words.items(), key=lambda kv: (-kv[1], kv[0])))
    return LanguageStats(length_histogram=dict(lengths), rank_frequency=ranked)
