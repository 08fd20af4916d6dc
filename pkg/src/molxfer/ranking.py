"""Compound prioritization: linear scores over encoder embeddings, trained on pairs.

Scores are ``phi(c) = w . r_c``.  Training minimises the mean logistic
surrogate of the pairwise ordering error over every truth-ordered pair
in a minibatch, plus an L2 penalty on all trainable parameters.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .dmpnn import EncoderConfig, encode_batch, init_encoder
from .metrics import concordance_index, ranking_report
from .nn import autodiff as ad
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.optim import Adam, decayed_lr
from .nn.params import ParamSet, init_glorot


class EmptyPairSet(ValueError):
    pass


class RankedDataset:
    """Records with distinct real activities; higher activity ranks higher."""

    def __init__(self, records):
        self.records = list(records)
        acts = [r.activity for r in self.records]
        if any(a is None for a in acts):
            raise ValueError("every ranking record needs an activity")
        self.activities = np.array(acts, dtype=np.float64)
        if len(np.unique(self.activities)) != len(self.activities):
            raise ValueError("activities must be distinct")

    def __len__(self):
        return len(self.records)

    def pairs(self):
        return ordered_pairs(self.activities)


def ordered_pairs(activities):
    """Index arrays ``(i, j)`` of every pair with ``activity_i > activity_j``."""
    a = np.asarray(activities, dtype=np.float64)
    i, j = np.nonzero(a[:, None] > a[None, :])
    return i, j


def score(r, w) -> ad.Value:
    """phi = r w for a (d,) vector or a (B, d) row batch."""
    return ad.matmul(r, w)


def rank_loss(scores, activities) -> ad.Value:
    """Mean of log(1 + exp(-(s_i - s_j))) over all pairs with activity_i > activity_j."""
    scores = ad.as_value(scores)
    i, j = ordered_pairs(activities)
    if len(i) == 0:
        raise EmptyPairSet("no truth-ordered pairs in this batch")
    margin = ad.sub(ad.gather(scores, i), ad.gather(scores, j))
    return ad.mean(ad.softplus(ad.neg(margin)))


@dataclass(frozen=True)
class RankConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    l2: float = 1e-6
    epochs: int = 50
    batch_size: int = 10
    lr_start: float = 1e-3
    lr_end: float = 1e-4
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "encoder": self.encoder.to_json(),
            "l2": self.l2,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_start": self.lr_start,
            "lr_end": self.lr_end,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj) -> "RankConfig":
        obj = dict(obj)
        enc = obj.pop("encoder", {})
        return cls(encoder=EncoderConfig(**enc), **obj)


class RankModel:
    def __init__(self, cfg: RankConfig, rng=None):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        self.params = ParamSet()
        init_encoder(self.params, cfg.encoder, rng)
        self.params.add("w", init_glorot((1, cfg.encoder.d), rng)[0])

    def scores(self, graphs) -> ad.Value:
        return score(encode_batch(list(graphs), self.params, self.cfg.encoder), self.params["w"])

    def predict(self, items, batch_size: int = 256) -> np.ndarray:
        graphs = [getattr(x, "graph", x) for x in items]
        out = [self.scores(graphs[lo : lo + batch_size]).data for lo in range(0, len(graphs), batch_size)]
        return np.concatenate(out) if out else np.zeros(0)

    def objective(self, records) -> tuple[ad.Value, ad.Value]:
        """(L_rank + l2 * ||theta||^2, L_rank) on one minibatch."""
        records = list(records)
        loss = rank_loss(self.scores([r.graph for r in records]), [r.activity for r in records])
        if self.cfg.l2 == 0:
            return loss, loss
        return ad.add(loss, ad.mul(self.params.sq_norm(), self.cfg.l2)), loss

    def save(self, path, extra=None):
        header = {"kind": "rank", "config": self.cfg.to_json()}
        header.update(extra or {})
        save_checkpoint(path, self.params.state(), header)

    @classmethod
    def load(cls, path) -> "RankModel":
        header, arrays = load_checkpoint(path)
        if header.get("kind") != "rank":
            raise ValueError(f"{path} is not a ranking checkpoint")
        model = cls(RankConfig.from_json(header["config"]))
        model.params.load_state(arrays)
        return model


@dataclass
class RankResult:
    model: RankModel
    history: list  # dicts: epoch, train_loss, train_ci, lr

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "train_ci", "lr"])
        for row in self.history:
            w.writerow([row["epoch"], repr(row["train_loss"]), repr(row["train_ci"]), repr(row["lr"])])
        return buf.getvalue()

    def evaluate(self, records) -> dict:
        records = list(records)
        return ranking_report([r.activity for r in records], self.model.predict(records))


def train_gnncp(records, cfg: RankConfig, on_epoch=None) -> RankResult:
    """Joint training of encoder and w for ``cfg.epochs`` epochs; batches with no ordered pair are skipped."""
    data = RankedDataset(records)
    if len(data) < 2:
        raise EmptyPairSet("need at least two compounds")
    rng = np.random.default_rng(cfg.seed)
    model = RankModel(cfg, rng)
    opt = Adam(model.params, lr=cfg.lr_start)
    history = []
    for epoch in range(cfg.epochs):
        opt.lr = decayed_lr(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end)
        perm = rng.permutation(len(data))
        total, steps = 0.0, 0
        for lo in range(0, len(perm), cfg.batch_size):
            batch = [data.records[i] for i in perm[lo : lo + cfg.batch_size]]
            if len(batch) < 2:
                continue
            model.params.zero_grad()
            obj, loss = model.objective(batch)
            ad.backward(obj)
            opt.step()
            total += float(loss.data)
            steps += 1
        ci = concordance_index(data.activities, model.predict(data.records))
        row = {"epoch": epoch + 1, "train_loss": total / max(steps, 1), "train_ci": ci, "lr": opt.lr}
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return RankResult(model, history)
