"""Transfer objectives and training loops.

Variants
--------
``TAc``     joint source/target classification through a shared encoder and classifier.
``TAc-f``   TAc plus the feature-wise discriminator L and entropy scaling.
``TAc-c``   TAc plus the compound-wise discriminator G.
``TAc-fc``  both discriminators.
``DANN``    labelled source, unlabelled target, domain classifier on r.
``NoT``     target-only training.
``DT``      one classifier trained on the pooled source and target compounds.

Gradient routing.  The discriminator terms enter the graph as
``+lam * (L_l + L_g)`` behind a gradient reversal node placed on the
encoder output, so one backward pass gives

* encoder:        dL_c - lam * d(L_l + L_g)
* classifier:     dL_c
* discriminators: lam * d(L_l + L_g)

which is descent on ``L = L_c - lam * (L_l + L_g)`` for the encoder and
classifier and ascent on ``L`` for the discriminators.  The classifier
sees the entropy scaling through a frozen copy of L, so classification
error never updates the discriminator.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dmpnn import EncoderConfig, encode_batch, init_encoder
from .fingerprint import fingerprint_matrix
from .metrics import roc_auc
from .nn import autodiff as ad
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.optim import Adam, decayed_lr
from .nn.params import ParamSet, add_mlp, mlp

VARIANTS = ("TAc", "TAc-f", "TAc-c", "TAc-fc", "DANN", "NoT", "DT")
FEATURES = ("encoder", "morgan", "morgan_count")
EPS = ad.LOG_EPS


class EmptyBatch(ValueError):
    pass


@dataclass(frozen=True)
class TransferConfig:
    variant: str = "TAc"
    alpha: float = 0.5
    lam: float = 0.01
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    features: str = "encoder"
    clf_hidden: int = 100
    disc_hidden: int = 100
    fp_radius: int = 3
    fp_dim: int = 2048
    epochs: int = 40
    batch_size: int = 10
    lr_start: float = 1e-3
    lr_end: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.features not in FEATURES:
            raise ValueError(f"features must be one of {FEATURES}")
        if self.features != "encoder" and self.variant not in ("NoT", "DT"):
            raise ValueError("fingerprint features are only used by the NoT and DT baselines")
        if self.alpha < 0 or self.lam < 0:
            raise ValueError("alpha and lam must be non-negative")

    @property
    def uses_feature_disc(self) -> bool:
        return self.variant in ("TAc-f", "TAc-fc")

    @property
    def uses_compound_disc(self) -> bool:
        return self.variant in ("TAc-c", "TAc-fc", "DANN")

    @property
    def effective_lam(self) -> float:
        return self.lam if (self.uses_feature_disc or self.uses_compound_disc) else 0.0

    @property
    def input_dim(self) -> int:
        return self.encoder.d if self.features == "encoder" else self.fp_dim

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "alpha": self.alpha,
            "lam": self.lam,
            "encoder": self.encoder.to_json(),
            "features": self.features,
            "clf_hidden": self.clf_hidden,
            "disc_hidden": self.disc_hidden,
            "fp_radius": self.fp_radius,
            "fp_dim": self.fp_dim,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_start": self.lr_start,
            "lr_end": self.lr_end,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj) -> "TransferConfig":
        obj = dict(obj)
        enc = obj.pop("encoder", {})
        return cls(encoder=EncoderConfig(**enc), **obj)


# -- loss pieces on probabilities ---------------------------------------------


def _require(x, what):
    if x is None or x.shape[0] == 0:
        raise EmptyBatch(f"{what} batch is empty")


def bce(prob: ad.Value, y) -> ad.Value:
    """Mean binary cross-entropy over rows; ``prob`` is (B,) or (B, 1)."""
    y = np.asarray(y, dtype=np.float64).reshape(prob.shape)
    ll = ad.add(ad.mul(y, ad.log(prob, EPS)), ad.mul(1.0 - y, ad.log(ad.sub(1.0, prob), EPS)))
    return ad.neg(ad.mean(ll))


def classification_loss(prob_s, y_s, prob_t, y_t, alpha: float) -> ad.Value:
    """-alpha * mean_S[y log p + (1-y) log(1-p)] - mean_T[...]"""
    _require(prob_t, "target")
    loss_t = bce(prob_t, y_t)
    if prob_s is None or prob_s.shape[0] == 0:
        return loss_t
    return ad.add(ad.mul(bce(prob_s, y_s), float(alpha)), loss_t)


def binary_entropy(p) -> ad.Value:
    """-p ln p - (1-p) ln(1-p), elementwise, with p clamped away from 0 and 1."""
    p = ad.as_value(p)
    q = ad.sub(1.0, p)
    return ad.neg(ad.add(ad.mul(p, ad.log(p, EPS)), ad.mul(q, ad.log(q, EPS))))


def entropy_scale(r, H) -> ad.Value:
    """z = (1 + H) * r."""
    return ad.mul(ad.add(H, 1.0), r)


def feature_disc_loss(p_s, p_t) -> ad.Value:
    """-mean_S mean_i ln p_i - mean_T mean_i ln(1 - p_i)."""
    _require(p_s, "source")
    _require(p_t, "target")
    src = ad.mean(ad.log(p_s, EPS))
    tgt = ad.mean(ad.log(ad.sub(1.0, p_t), EPS))
    return ad.neg(ad.add(src, tgt))


def compound_disc_loss(q_s, q_t) -> ad.Value:
    """-mean_S ln q - mean_T ln(1 - q)."""
    _require(q_s, "source")
    _require(q_t, "target")
    src = ad.mean(ad.log(q_s, EPS))
    tgt = ad.mean(ad.log(ad.sub(1.0, q_t), EPS))
    return ad.neg(ad.add(src, tgt))


@dataclass
class TransferLoss:
    objective: ad.Value  # what backward() is called on
    classification: ad.Value
    feature: ad.Value | None
    compound: ad.Value | None
    lam: float
    adversarial: ad.Value | None = None  # lam * (L_l + L_g) behind the reversal node

    @property
    def disc_total(self) -> float:
        total = 0.0
        for term in (self.feature, self.compound):
            if term is not None:
                total += float(term.data)
        return total

    @property
    def value(self) -> float:
        """L = L_c - lam * (L_l + L_g), the quantity the encoder and classifier minimise."""
        return float(self.classification.data) - self.lam * self.disc_total


# -- model ---------------------------------------------------------------------


def _labels(records):
    return np.array([r.label for r in records], dtype=np.float64)


class TransferModel:
    """Encoder (or fixed fingerprint input), classifier S and optional discriminators."""

    def __init__(self, cfg: TransferConfig, rng=None):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        self.params = ParamSet()
        if cfg.features == "encoder":
            init_encoder(self.params, cfg.encoder, rng)
        add_mlp(self.params, "S", cfg.input_dim, cfg.clf_hidden, 1, rng)
        if cfg.uses_feature_disc:
            add_mlp(self.params, "L", cfg.input_dim, cfg.disc_hidden, cfg.input_dim, rng)
        if cfg.uses_compound_disc:
            add_mlp(self.params, "G", cfg.input_dim, cfg.disc_hidden, 1, rng)
        self._fp_cache = {}

    # embeddings

    def embed(self, graphs) -> ad.Value:
        graphs = list(graphs)
        if self.cfg.features == "encoder":
            return encode_batch(graphs, self.params, self.cfg.encoder)
        rows = []
        for g in graphs:
            key = id(g)
            if key not in self._fp_cache:
                self._fp_cache[key] = (g, fingerprint_matrix(
                    [g], self.cfg.fp_radius, self.cfg.fp_dim, binary=self.cfg.features == "morgan"
                )[0].astype(np.float64))
            rows.append(self._fp_cache[key][1])
        return ad.Value(np.stack(rows))

    def scaled(self, r, frozen: bool = True) -> ad.Value:
        """Classifier input: z for the feature-disc variants, r otherwise."""
        if not self.cfg.uses_feature_disc:
            return r
        p = mlp(r, self.params, "L", frozen=frozen)
        return entropy_scale(r, binary_entropy(p))

    def predict_proba(self, items, batch_size: int = 256) -> np.ndarray:
        graphs = [getattr(x, "graph", x) for x in items]
        out = []
        for lo in range(0, len(graphs), batch_size):
            r = self.embed(graphs[lo : lo + batch_size])
            out.append(mlp(self.scaled(r), self.params, "S").data.reshape(-1))
        return np.concatenate(out) if out else np.zeros(0)

    # losses

    def loss(self, source, target, grl: bool = True) -> TransferLoss:
        """Composite loss on one source batch and one target batch of records.

        ``grl=False`` swaps the reversal node for a plain identity node
        with the same graph structure.
        """
        cfg = self.cfg
        v = cfg.variant
        source = list(source or [])
        target = list(target or [])
        if not target and v != "DT":
            raise EmptyBatch("target batch is empty")
        if v in ("NoT", "DT"):
            pool = target + source if v == "DT" else target
            if not pool:
                raise EmptyBatch("no compounds to train on")
            r = self.embed([x.graph for x in pool])
            prob = mlp(r, self.params, "S")
            lc = bce(prob, _labels(pool))
            return TransferLoss(lc, lc, None, None, 0.0)
        if not source:
            raise EmptyBatch("source batch is empty")

        n_s = len(source)
        r = self.embed([x.graph for x in source] + [x.graph for x in target])
        idx_s, idx_t = np.arange(n_s), np.arange(n_s, r.shape[0])
        lam = cfg.effective_lam

        if v == "DANN":
            prob_s = mlp(ad.gather(r, idx_s), self.params, "S")
            lc = bce(prob_s, _labels(source))
        else:
            prob = mlp(self.scaled(r, frozen=True), self.params, "S")
            lc = classification_loss(
                ad.gather(prob, idx_s), _labels(source),
                ad.gather(prob, idx_t), _labels(target), cfg.alpha,
            )

        feature = compound = None
        if cfg.uses_feature_disc or cfg.uses_compound_disc:
            r_rev = ad.grad_reverse(r, -1.0 if grl else 1.0)
            if cfg.uses_feature_disc:
                p = mlp(r_rev, self.params, "L")
                feature = feature_disc_loss(ad.gather(p, idx_s), ad.gather(p, idx_t))
                z_disc = entropy_scale(r_rev, binary_entropy(p))
            else:
                z_disc = r_rev
            if cfg.uses_compound_disc:
                q = mlp(z_disc, self.params, "G")
                compound = compound_disc_loss(ad.gather(q, idx_s), ad.gather(q, idx_t))

        objective, adversarial = lc, None
        for term in (feature, compound):
            if term is not None:
                adversarial = term if adversarial is None else ad.add(adversarial, term)
        if adversarial is not None:
            adversarial = ad.mul(adversarial, lam)
            objective = ad.add(lc, adversarial)
        return TransferLoss(objective, lc, feature, compound, lam, adversarial)

    # persistence

    def save(self, path, extra=None):
        header = {"kind": "transfer", "config": self.cfg.to_json()}
        header.update(extra or {})
        save_checkpoint(path, self.params.state(), header)

    @classmethod
    def load(cls, path) -> "TransferModel":
        header, arrays = load_checkpoint(path)
        if header.get("kind") != "transfer":
            raise ValueError(f"{path} is not a transfer checkpoint")
        model = cls(TransferConfig.from_json(header["config"]))
        model.params.load_state(arrays)
        model.header = header
        return model


# -- training ------------------------------------------------------------------


@dataclass
class TrainResult:
    model: TransferModel
    history: list  # dicts: epoch, train_loss, val_roc_auc, lr
    best_epoch: int
    best_val: float

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_roc_auc", "lr"])
        for row in self.history:
            w.writerow([row["epoch"], repr(row["train_loss"]), repr(row["val_roc_auc"]), repr(row["lr"])])
        return buf.getvalue()

    def save(self, path):
        self.model.save(path, {"best_epoch": self.best_epoch, "best_val_roc_auc": self.best_val})


def _cycled_batches(rng, n, n_steps, size):
    if n == 0:
        return [[] for _ in range(n_steps)]
    size = min(size, n)
    seq = []
    while len(seq) < n_steps * size:
        seq.extend(rng.permutation(n).tolist())
    return [seq[i * size : (i + 1) * size] for i in range(n_steps)]


def _plain_batches(rng, n, size):
    perm = rng.permutation(n).tolist()
    return [perm[i : i + size] for i in range(0, n, size)]


def _check_split(records, what):
    if not records:
        raise EmptyBatch(f"{what} split is empty")


def fit(
    model: TransferModel,
    source,
    target_train,
    target_val,
    rng,
    on_epoch=None,
) -> TrainResult:
    """Epoch loop with per-epoch lr decay and best-validation-ROC-AUC selection.

    Two-domain variants take one source and one target minibatch per step
    and an epoch is ``ceil(max(n_S, n_T) / batch)`` steps, cycling the
    smaller domain.  NoT and DT make one pass over their single pool.
    """
    cfg = model.cfg
    source, target_train, target_val = list(source), list(target_train), list(target_val)
    _check_split(target_val, "validation")
    if cfg.variant != "DT":
        _check_split(target_train, "target training")
    val_labels = _labels(target_val)
    opt = Adam(model.params, lr=cfg.lr_start)
    bs = cfg.batch_size
    history = []
    best_val, best_epoch, best_state = -math.inf, 0, model.params.state()
    for epoch in range(cfg.epochs):
        opt.lr = decayed_lr(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end)
        if cfg.variant in ("NoT", "DT"):
            pool = target_train + (source if cfg.variant == "DT" else [])
            steps = [([], [pool[i] for i in b]) for b in _plain_batches(rng, len(pool), bs)]
        else:
            _check_split(source, "source")
            n_steps = math.ceil(max(len(source), len(target_train)) / bs)
            sb = _cycled_batches(rng, len(source), n_steps, bs)
            tb = _cycled_batches(rng, len(target_train), n_steps, bs)
            steps = [
                ([source[i] for i in s], [target_train[i] for i in t]) for s, t in zip(sb, tb)
            ]
        total = 0.0
        for batch_s, batch_t in steps:
            model.params.zero_grad()
            terms = model.loss(batch_s, batch_t)
            ad.backward(terms.objective)
            opt.step()
            total += terms.value
        val = roc_auc(model.predict_proba(target_val), val_labels)
        row = {"epoch": epoch + 1, "train_loss": total / max(len(steps), 1), "val_roc_auc": val, "lr": opt.lr}
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if val > best_val:
            best_val, best_epoch, best_state = val, epoch + 1, model.params.state()
    model.params.load_state(best_state)
    return TrainResult(model, history, best_epoch, best_val)


def train(variant, source, target_train, target_val, cfg: TransferConfig, on_epoch=None) -> TrainResult:
    """Train one variant; returns the best-validation model and the epoch log."""
    if variant is not None and variant != cfg.variant:
        cfg = replace(cfg, variant=variant)
    rng = np.random.default_rng(cfg.seed)
    model = TransferModel(cfg, rng)
    return fit(model, source, target_train, target_val, rng, on_epoch)


class _UnlabeledRecord:
    """Exposes only the graph of a record."""

    __slots__ = ("graph",)

    def __init__(self, graph):
        self.graph = graph


def train_dann(source, target_train_unlabeled, target_val, cfg: TransferConfig, on_epoch=None) -> TrainResult:
    """Domain-adversarial baseline: labelled source, unlabelled target training compounds."""
    cfg = replace(cfg, variant="DANN")
    unlabeled = [_UnlabeledRecord(x.graph) for x in target_train_unlabeled]
    return train(None, source, unlabeled, target_val, cfg, on_epoch)


def baseline_fcn(features, mode, source, target_train, target_val, cfg: TransferConfig, on_epoch=None) -> TrainResult:
    """Single-task classifier over fingerprints or the learned encoder, in NoT or DT mode."""
    if mode not in ("NoT", "DT"):
        raise ValueError("mode must be 'NoT' or 'DT'")
    cfg = replace(cfg, variant=mode, features=features)
    return train(None, source if mode == "DT" else [], target_train, target_val, cfg, on_epoch)
