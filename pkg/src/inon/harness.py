"""Training loops, the evaluation protocol, baselines, pretraining, ablations.

Protocol notes, fixed here and referenced by the report format:

* Robot-pair evaluation predicts each of a pair's 5 trials separately and
  takes the majority vote; all-pairs evaluation makes one prediction per
  pair from the object embeddings alone.
* Each seed's headline number is the *maximum* eval-fold accuracy reached
  across epoch-end evaluations (no dev-based model selection); the report
  aggregates those maxima as mean +/- population standard deviation
  (divide by N, not N-1).
* Seeds are independent jobs; this implementation schedules them serially
  so a report is a pure function of its config.
"""
from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .autograd import AdamState, Tensor, adam_step, backward, zero_grads
from .autograd import functional as F
from .data import PairRecord, TRIALS_PER_ROBOT_PAIR, load_manifest, majority_vote
from .embeddings import load_store, pair_embedding
from .models import FULL_MASK, AblationMask, ModelSpec, forward, init_params, transfer_pretrained
from .scene import DELTA_H, DELTA_W, load_trial_delta

LABELS = ("no", "yes")
LABEL_INDEX = {"no": 0, "yes": 1}
EVAL_CHUNK = 64


class NumericError(RuntimeError):
    """Training produced a non-finite loss."""


class ProtocolError(ValueError):
    """The requested evaluation cannot be run on this data."""


def _crc(s: str) -> int:
    return zlib.crc32(s.encode("utf-8"))


@dataclass(frozen=True)
class ExperimentConfig:
    manifest_path: str
    store_path: str
    relation: str
    kind: str = "ego_obj"
    mask: AblationMask = FULL_MASK
    pretrain: bool = False
    epochs: int = 30
    seeds: tuple[int, ...] = tuple(range(10))
    lr: float = 0.01
    batch_size: int = 32
    base_filters: int = 8
    hidden: int = 64
    dropout_p: float = 0.3

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.lr <= 0 or self.batch_size < 1:
            raise ValueError("lr must be positive and batch_size >= 1")


# ---------------------------------------------------------------------------
# task data: manifest + store + cached per-fold arrays
# ---------------------------------------------------------------------------

@dataclass
class TaskData:
    root: str
    relation: str
    catalog: object
    pairs: list[PairRecord]
    store: object
    robot: dict[str, list[PairRecord]] = field(default_factory=dict)
    allpairs: dict[str, list[PairRecord]] = field(default_factory=dict)
    _trial_arrays: dict[str, dict] = field(default_factory=dict, repr=False)
    _pair_arrays: dict[str, dict] = field(default_factory=dict, repr=False)

    def pair_vectors(self, pair: PairRecord) -> tuple[np.ndarray, np.ndarray]:
        emb = pair_embedding(self.store, pair.grasped_id, pair.target_id)
        return emb.vision_delta, emb.language_delta

    def trial_arrays(self, fold: str) -> dict:
        """Per-trial tensors for the fold's robot pairs, 5 consecutive rows
        per pair, in manifest order. Cached after the first materialization."""
        if fold not in self._trial_arrays:
            pairs = self.robot[fold]
            rgb, depth, vis, lang, y = [], [], [], [], []
            for p in pairs:
                if len(p.trials) != TRIALS_PER_ROBOT_PAIR:
                    raise ProtocolError(
                        f"pair {p.relation} {p.grasped_id} {p.target_id} has "
                        f"{len(p.trials)} trials; robot evaluation needs {TRIALS_PER_ROBOT_PAIR}"
                    )
                v, l = self.pair_vectors(p)
                for rel in p.trials:
                    d = load_trial_delta(os.path.join(self.root, rel))
                    rgb.append(d.rgb_delta)
                    depth.append(d.depth_delta)
                    vis.append(v)
                    lang.append(l)
                    y.append(LABEL_INDEX[p.label])
            n = len(rgb)
            self._trial_arrays[fold] = {
                "rgb": np.stack(rgb) if n else np.zeros((0, 4, DELTA_H, DELTA_W), np.float32),
                "depth": np.stack(depth) if n else np.zeros((0, 1, DELTA_H, DELTA_W), np.float32),
                "vis": np.stack(vis) if n else np.zeros((0, self.store.dims[0]), np.float32),
                "lang": np.stack(lang) if n else np.zeros((0, self.store.dims[1]), np.float32),
                "labels": np.asarray(y, dtype=np.int64),
            }
        return self._trial_arrays[fold]

    def pair_arrays(self, fold: str) -> dict:
        """One row per All-Pairs record (both sources), in manifest order."""
        if fold not in self._pair_arrays:
            pairs = self.allpairs[fold]
            vis, lang, y = [], [], []
            for p in pairs:
                v, l = self.pair_vectors(p)
                vis.append(v)
                lang.append(l)
                y.append(LABEL_INDEX[p.label])
            n = len(vis)
            self._pair_arrays[fold] = {
                "vis": np.stack(vis) if n else np.zeros((0, self.store.dims[0]), np.float32),
                "lang": np.stack(lang) if n else np.zeros((0, self.store.dims[1]), np.float32),
                "labels": np.asarray(y, dtype=np.int64),
            }
        return self._pair_arrays[fold]


def load_task_data(manifest_path, store_path, relation: str, require_trials: bool = True) -> TaskData:
    catalog, pairs = load_manifest(manifest_path, require_trials=require_trials)
    pairs = [p for p in pairs if p.relation == relation]
    store = load_store(store_path)
    data = TaskData(
        root=os.path.dirname(os.path.abspath(os.fspath(manifest_path))),
        relation=relation,
        catalog=catalog,
        pairs=pairs,
        store=store,
    )
    for fold in ("train", "dev", "test"):
        members = [p for p in pairs if catalog.get(p.grasped_id).fold == fold]
        data.allpairs[fold] = members
        data.robot[fold] = [p for p in members if p.source == "robot"]
    return data


def n_training_examples(data: TaskData, fold: str = "train") -> int:
    return TRIALS_PER_ROBOT_PAIR * len(data.robot[fold])


def model_spec(config: ExperimentConfig, data: TaskData, seed: int) -> ModelSpec:
    d_v, d_l = data.store.dims
    needs_obj = config.kind in ("ego_obj", "obj_only")
    return ModelSpec(
        kind=config.kind,
        relation=config.relation,
        base_filters=config.base_filters,
        hidden=config.hidden,
        dropout_p=config.dropout_p,
        seed=seed,
        vision_dim=d_v if needs_obj else 0,
        language_dim=d_l if needs_obj else 0,
    )


# ---------------------------------------------------------------------------
# evaluation protocol
# ---------------------------------------------------------------------------

def evaluate_robot(predict_trial, data: TaskData, pairs: list[PairRecord]) -> float:
    """Majority vote over per-trial predictions. ``predict_trial(pair, i)``
    returns a label for the pair's i-th trial."""
    if not pairs:
        raise ProtocolError("no pairs to evaluate")
    hits = 0
    for p in pairs:
        if len(p.trials) != TRIALS_PER_ROBOT_PAIR:
            raise ProtocolError(
                f"pair {p.relation} {p.grasped_id} {p.target_id} has "
                f"{len(p.trials)} trials; robot evaluation needs {TRIALS_PER_ROBOT_PAIR}"
            )
        votes = [predict_trial(p, i) for i in range(TRIALS_PER_ROBOT_PAIR)]
        hits += majority_vote(votes) == p.label
    return hits / len(pairs)


def evaluate_allpairs(predict_pair, pairs: list[PairRecord]) -> float:
    if not pairs:
        raise ProtocolError("no pairs to evaluate")
    hits = sum(predict_pair(p) == p.label for p in pairs)
    return hits / len(pairs)


def _predict_chunked(spec: ModelSpec, params, arrays: dict, mask: AblationMask,
                     with_delta: bool) -> np.ndarray:
    n = len(arrays["labels"])
    out = np.empty(n, dtype=np.int64)
    for i in range(0, n, EVAL_CHUNK):
        sl = slice(i, i + EVAL_CHUNK)
        delta = (arrays["rgb"][sl], arrays["depth"][sl]) if with_delta else None
        pair = (arrays["vis"][sl], arrays["lang"][sl]) if "vis" in arrays else None
        logits = forward(spec, params, delta, pair, mask, training=False)
        out[sl] = np.argmax(logits.data, axis=1)
    return out


def evaluate(spec: ModelSpec, params, data: TaskData, fold: str,
             mode: str, mask: AblationMask = FULL_MASK) -> float:
    """Fraction of the fold's pairs the model gets right under ``mode``."""
    if mode == "robot":
        pairs = data.robot[fold]
        if not pairs:
            raise ProtocolError(f"fold {fold!r} has no robot pairs")
        arrays = data.trial_arrays(fold)
        preds = _predict_chunked(spec, params, arrays, mask,
                                 with_delta=spec.kind != "obj_only")
        labels = [LABELS[i] for i in preds]
        hits = 0
        for j, p in enumerate(pairs):
            votes = labels[j * TRIALS_PER_ROBOT_PAIR:(j + 1) * TRIALS_PER_ROBOT_PAIR]
            hits += majority_vote(votes) == p.label
        return hits / len(pairs)
    if mode == "allpairs":
        if spec.kind != "obj_only":
            raise ProtocolError("allpairs mode has no trials; it needs an obj_only model")
        pairs = data.allpairs[fold]
        if not pairs:
            raise ProtocolError(f"fold {fold!r} has no pairs")
        preds = _predict_chunked(spec, params, data.pair_arrays(fold), mask, with_delta=False)
        return float(np.mean(preds == data.pair_arrays(fold)["labels"]))
    raise ValueError(f"mode must be 'robot' or 'allpairs', got {mode!r}")


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def majority_label(pairs: list[PairRecord]) -> str:
    if not pairs:
        raise ValueError("majority over an empty fold")
    yes = sum(1 for p in pairs if p.label == "yes")
    # ties round down to no, like the vote aggregation rule
    return "yes" if yes > len(pairs) - yes else "no"


def baseline_majority_class(train_pairs: list[PairRecord], eval_pairs: list[PairRecord]) -> float:
    if not eval_pairs:
        raise ValueError("majority-class baseline needs a nonempty eval fold")
    lab = majority_label(train_pairs)
    return sum(1 for p in eval_pairs if p.label == lab) / len(eval_pairs)


def baseline_random(eval_pairs: list[PairRecord], seed: int) -> float:
    rng = np.random.default_rng(np.random.SeedSequence((seed, _crc("random-baseline"))))
    draws = rng.integers(0, 2, size=len(eval_pairs))
    hits = sum(LABELS[d] == p.label for d, p in zip(draws, eval_pairs))
    return hits / len(eval_pairs) if eval_pairs else 0.0


def baseline_random_report(eval_pairs: list[PairRecord], seeds) -> tuple[float, float]:
    accs = [baseline_random(eval_pairs, s) for s in seeds]
    return float(np.mean(accs)), float(np.std(accs))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _clone_params(params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {k: Tensor(v.data.copy(), requires_grad=True) for k, v in params.items()}


def _train_epochs(spec, params, arrays, *, epochs, lr, batch_size, rng,
                  with_delta, mask, on_epoch_end, run_tag):
    n = len(arrays["labels"])
    if n == 0:
        raise ProtocolError(f"{run_tag}: no training examples")
    state = AdamState(lr=lr)
    labels_t = arrays["labels"]
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            delta = (arrays["rgb"][idx], arrays["depth"][idx]) if with_delta else None
            pair = (arrays["vis"][idx], arrays["lang"][idx]) if "vis" in arrays else None
            zero_grads(params)
            logits = forward(spec, params, delta, pair, mask, training=True, rng=rng)
            loss = F.cross_entropy(logits, labels_t[idx])
            if not np.isfinite(loss.item()):
                raise NumericError(
                    f"{run_tag}: loss became {loss.item()} at epoch {epoch}, "
                    f"batch starting {start}"
                )
            backward(loss)
            adam_step(state, params)
        on_epoch_end(epoch, params)
    return params


def train_run(config: ExperimentConfig, seed: int, data: TaskData | None = None,
              pretrained: dict[str, Tensor] | None = None):
    """One seed's full training trajectory on the Robot-Pairs task.

    Returns (params, metrics) where metrics holds per-epoch train/dev/test
    robot-mode accuracies. All 5 trials of each train pair are individual
    training examples; evaluation majority-votes them back together.
    """
    if data is None:
        data = load_task_data(config.manifest_path, config.store_path, config.relation)
    spec = model_spec(config, data, seed)
    params = init_params(spec)
    if config.pretrain:
        if pretrained is None:
            pretrained, _ = pretrain_auxiliary(config, data)
        params = transfer_pretrained(pretrained, params)
    rng = np.random.default_rng(np.random.SeedSequence((seed, _crc("train-loop"))))
    metrics = {"train": [], "dev": [], "test": [], "n_train_examples": n_training_examples(data)}

    def on_epoch_end(epoch, ps):
        for fold in ("train", "dev", "test"):
            metrics[fold].append(evaluate(spec, ps, data, fold, "robot", config.mask))

    arrays = data.trial_arrays("train")
    _train_epochs(
        spec, params, arrays,
        epochs=config.epochs, lr=config.lr, batch_size=config.batch_size, rng=rng,
        with_delta=spec.kind != "obj_only", mask=config.mask,
        on_epoch_end=on_epoch_end, run_tag=f"train_run(seed={seed})",
    )
    return params, metrics


def pretrain_auxiliary(config: ExperimentConfig, data: TaskData | None = None):
    """Train obj_only on the Train fold's All-Pairs records; keep the epoch
    checkpoint with the best Dev All-Pairs accuracy.

    Initialization uses the first configured seed: the transferred groups are
    only the projections, so downstream per-seed runs still differ.
    """
    if data is None:
        data = load_task_data(config.manifest_path, config.store_path, config.relation,
                              require_trials=False)
    if not config.mask.language and not config.mask.vision:
        raise ProtocolError("pretraining needs at least one object modality unmasked")
    if not data.allpairs["train"] or not data.allpairs["dev"]:
        raise ProtocolError("manifest has no All-Pairs records to pretrain on")
    seed = config.seeds[0]
    spec = replace(model_spec(config, data, seed), kind="obj_only")
    mask = AblationMask(ego=True, language=config.mask.language, vision=config.mask.vision)
    params = init_params(spec)
    rng = np.random.default_rng(np.random.SeedSequence((seed, _crc("pretrain"))))
    best = {"acc": -1.0, "params": _clone_params(params), "epoch": -1}

    def on_epoch_end(epoch, ps):
        acc = evaluate(spec, ps, data, "dev", "allpairs", mask)
        if acc > best["acc"]:
            best.update(acc=acc, params=_clone_params(ps), epoch=epoch)

    _train_epochs(
        spec, params, data.pair_arrays("train"),
        epochs=config.epochs, lr=config.lr, batch_size=config.batch_size, rng=rng,
        with_delta=False, mask=mask, on_epoch_end=on_epoch_end, run_tag="pretrain",
    )
    return best["params"], {"dev_acc": best["acc"], "epoch": best["epoch"]}


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeedTrace:
    seed: int
    train: tuple[float, ...]
    dev: tuple[float, ...]
    test: tuple[float, ...]

    @property
    def max_dev(self) -> float:
        return max(self.dev)

    @property
    def max_test(self) -> float:
        return max(self.test)


@dataclass(frozen=True)
class RunReport:
    relation: str
    kind: str
    mask_label: str
    pretrain: bool
    epochs: int
    traces: tuple[SeedTrace, ...]

    def per_seed_max(self, fold: str) -> list[float]:
        return [t.max_dev if fold == "dev" else t.max_test for t in self.traces]

    def summary(self, fold: str) -> tuple[float, float]:
        """Mean and population std of the per-seed maxima."""
        maxima = self.per_seed_max(fold)
        return float(np.mean(maxima)), float(np.std(maxima))

    def to_json(self) -> str:
        payload = {
            "relation": self.relation,
            "kind": self.kind,
            "mask": self.mask_label,
            "pretrain": self.pretrain,
            "epochs": self.epochs,
            "traces": [
                {"seed": t.seed, "train": list(t.train), "dev": list(t.dev), "test": list(t.test)}
                for t in self.traces
            ],
            "max_dev": self.per_seed_max("dev"),
            "max_test": self.per_seed_max("test"),
            "mean_std_dev": list(self.summary("dev")),
            "mean_std_test": list(self.summary("test")),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        d = json.loads(text)
        traces = tuple(
            SeedTrace(t["seed"], tuple(t["train"]), tuple(t["dev"]), tuple(t["test"]))
            for t in d["traces"]
        )
        return cls(d["relation"], d["kind"], d["mask"], d["pretrain"], d["epochs"], traces)


def run_protocol(config: ExperimentConfig, data: TaskData | None = None) -> RunReport:
    if data is None:
        data = load_task_data(config.manifest_path, config.store_path, config.relation)
    pretrained = None
    if config.pretrain:
        pretrained, _ = pretrain_auxiliary(config, data)
    traces = []
    for seed in config.seeds:
        _, metrics = train_run(config, seed, data, pretrained)
        traces.append(SeedTrace(seed, tuple(metrics["train"]), tuple(metrics["dev"]),
                                tuple(metrics["test"])))
    return RunReport(
        relation=config.relation,
        kind=config.kind,
        mask_label=config.mask.label(),
        pretrain=config.pretrain,
        epochs=config.epochs,
        traces=tuple(traces),
    )


# ---------------------------------------------------------------------------
# ablation suite
# ---------------------------------------------------------------------------

ABLATION_MASKS = (
    AblationMask(ego=False, language=True, vision=False),
    AblationMask(ego=False, language=False, vision=True),
    AblationMask(ego=False, language=True, vision=True),
    AblationMask(ego=True, language=True, vision=False),
    AblationMask(ego=True, language=False, vision=True),
    AblationMask(ego=True, language=True, vision=True),
)


def _row_name(mask: AblationMask, pretrain: bool) -> str:
    bits = []
    if mask.ego:
        bits.append("Ego")
    if mask.language:
        bits.append("L")
    if mask.vision:
        bits.append("V")
    name = "+".join(bits)
    return name + ("+pre" if pretrain else "")


def ablation_rows() -> list[tuple[str, AblationMask, bool]]:
    return [(_row_name(m, pre), m, pre) for m in ABLATION_MASKS for pre in (False, True)]


def ablation_suite(config: ExperimentConfig, data: TaskData | None = None) -> list[tuple[str, RunReport]]:
    """Every modality-mask row with and without pretraining: 12 reports.

    Rows without the ego modality train obj_only models; the rest train
    ego_obj with the row's mask. Pretraining always matches the row's object
    modalities.
    """
    if data is None:
        data = load_task_data(config.manifest_path, config.store_path, config.relation)
    out = []
    for name, mask, pre in ablation_rows():
        kind = "ego_obj" if mask.ego else "obj_only"
        row_cfg = replace(config, kind=kind, mask=mask, pretrain=pre)
        out.append((name, run_protocol(row_cfg, data)))
    return out


def render_table(rows: list[tuple[str, RunReport]]) -> str:
    """Fixed-width text table, one row per report: model, dev, test."""
    lines = [f"{'model':<14}  {'dev':>12}  {'test':>12}"]
    for name, report in rows:
        md, sd = report.summary("dev")
        mt, st = report.summary("test")
        lines.append(f"{name:<14}  {md:.2f} ± {sd:.2f}  {mt:.2f} ± {st:.2f}")
    return "\n".join(lines) + "\n"


def plot_curves(report: RunReport, path) -> None:
    """Accuracy-vs-epoch curves: one thin line per seed, bold mean."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    epochs = np.arange(1, report.epochs + 1)
    for fold, color in (("dev", "tab:blue"), ("test", "tab:orange")):
        curves = np.array([getattr(t, fold) for t in report.traces])
        for row in curves:
            ax.plot(epochs, row, color=color, alpha=0.25, linewidth=0.8)
        ax.plot(epochs, curves.mean(axis=0), color=color, linewidth=2.2, label=fold)
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.set_title(f"{report.kind} {report.mask_label}" + (" +pre" if report.pretrain else ""))
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
