"""Finite-difference checks of every exported loss on tiny seeded instances.

Each suite returns rows ``(suite, loss, max_rel_err)``.  The relative
error of one parameter array is ``max|a - n| / max(max|a|, max|n|, 1e-6)``
with ``a`` the analytic and ``n`` the central-difference gradient; a row
reports the worst array.

For the adversarial objectives the reference function depends on who is
being checked: encoder and classifier gradients are compared against
differences of ``L = L_c - lam (L_l + L_g)``, discriminator gradients
against differences of ``lam (L_l + L_g)``, the quantity they descend.
"""

from __future__ import annotations


import numpy as np

from .dmpnn import EncoderConfig, GraphBatch, encode_batch, init_encoder
from .molgraph.dataset import CompoundRecord
from .molgraph.graph import MolecularGraph
from .nn import autodiff as ad
from .nn.params import ParamSet, add_mlp, mlp
from .ranking import RankConfig, RankModel
from .transfer import TransferConfig, TransferModel

TOLERANCE = 1e-4
STEP = 1e-5
_FLOOR = 1e-6

_ELEMENTS = ("C", "N", "O", "S")
_ORDERS = ("single", "single", "double", "aromatic")


def random_graph(rng, max_atoms: int = 5, min_atoms: int = 1) -> MolecularGraph:
    """Random connected graph: a random tree plus maybe one extra bond."""
    n = int(rng.integers(min_atoms, max_atoms + 1))
    bonds = []
    for v in range(1, n):
        bonds.append((int(rng.integers(v)), v, _ORDERS[rng.integers(len(_ORDERS))]))
    if n >= 3 and rng.random() < 0.5:
        u, v = sorted(rng.choice(n, size=2, replace=False).tolist())
        if not any({a, b} == {u, v} for a, b, _ in bonds):
            bonds.append((u, v, "single"))
    return MolecularGraph.build(
        [_ELEMENTS[i] for i in rng.integers(len(_ELEMENTS), size=n)],
        bonds,
        [int(c) for c in rng.choice([-1, 0, 0, 0, 1], size=n)],
        [bool(x) for x in rng.random(n) < 0.3],
    )


def jitter(params: ParamSet, rng, scale: float = 0.1):
    """Perturb every parameter so no ReLU input sits exactly on its kink (zero biases, r = 0 rows)."""
    for v in params.values():
        v.data = v.data + scale * rng.normal(size=v.data.shape)


def numeric_grad(f, p: ad.Value, h: float = STEP) -> np.ndarray:
    g = np.zeros_like(p.data)
    flat = p.data.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        g.reshape(-1)[i] = (up - down) / (2 * h)
    return g


def rel_error(a, n) -> float:
    a, n = np.asarray(a), np.asarray(n)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), _FLOOR)
    return float(np.abs(a - n).max(initial=0.0) / scale)


def check(params: ParamSet, names, build, reference=None, h: float = STEP) -> float:
    """Worst relative error over ``names`` between backward(build()) and differences of ``reference``."""
    reference = reference or (lambda: float(build().data))
    params.zero_grad()
    ad.backward(build())
    worst = 0.0
    for name in names:
        p = params[name]
        worst = max(worst, rel_error(p.grad, numeric_grad(reference, p, h)))
    return worst


# -- suites --------------------------------------------------------------------


def suite_nn_core(seed: int = 0):
    rng = np.random.default_rng(seed)
    params = ParamSet()
    add_mlp(params, "M", 4, 5, 3, rng)
    params.add("v", rng.normal(size=(3, 1)))
    jitter(params, rng)
    x = rng.normal(size=(6, 4))
    seg = np.array([0, 0, 1, 1, 1, 2])
    y = rng.integers(0, 2, size=(6, 3)).astype(float)

    def bce():
        p = mlp(x, params, "M")
        ll = ad.add(ad.mul(y, ad.log(p, ad.LOG_EPS)), ad.mul(1 - y, ad.log(ad.sub(1.0, p), ad.LOG_EPS)))
        return ad.neg(ad.mean(ll))

    def attention():
        s = mlp(x, params, "M", output="linear")
        w = ad.segment_softmax(ad.matmul(s, params["v"]), seg, 3)
        pooled = ad.scatter_add(ad.mul(ad.add(w, 1.0), s), seg, 3)
        return ad.sum(ad.matmul(pooled, params["v"]))

    def smooth():
        s = mlp(x, params, "M", output="linear")
        return ad.mean(ad.add(ad.softplus(s), ad.exp(ad.mul(s, 0.1))))

    names = params.names()
    return [
        ("nn_core", "bce_mlp", check(params, names, bce)),
        ("nn_core", "segment_softmax_pool", check(params, names, attention)),
        ("nn_core", "softplus_exp", check(params, names, smooth)),
    ]


def suite_dmpnn(seed: int = 0):
    rows = []
    for pooling in ("mean", "attention"):
        rng = np.random.default_rng([seed, 1])
        cfg = EncoderConfig(d=6, tau=2, pooling=pooling, attn_hidden=5)
        params = ParamSet()
        init_encoder(params, cfg, rng)
        jitter(params, rng)
        graphs = [random_graph(rng) for _ in range(3)]
        batch = GraphBatch.from_graphs(graphs)
        C = rng.normal(size=(3, cfg.d))

        def build():
            return ad.sum(ad.mul(encode_batch(batch, params, cfg), C))

        rows.append(("dmpnn", f"encoder_{pooling}", check(params, params.names(), build)))
    return rows


def _tiny_transfer(variant, seed, lam=0.5, alpha=0.7):
    cfg = TransferConfig(
        variant=variant, alpha=alpha, lam=lam,
        encoder=EncoderConfig(d=5, tau=2, pooling="attention", attn_hidden=4),
        clf_hidden=4, disc_hidden=4, seed=seed,
    )
    rng = np.random.default_rng([seed, 2])
    model = TransferModel(cfg, rng)
    jitter(model.params, rng)
    src = [CompoundRecord(f"s{i}", random_graph(rng), label=i % 2) for i in range(3)]
    tgt = [CompoundRecord(f"t{i}", random_graph(rng), label=(i + 1) % 2) for i in range(3)]
    return model, src, tgt


def _disc_names(params):
    return [n for n in params.names() if n.startswith(("L.", "G."))]


def _main_names(params):
    return [n for n in params.names() if n.startswith(("F.", "S."))]


def transfer_rows(seed: int = 0, grl_sign: float = -1.0):
    """Rows for L_c, L_l, L_g, the four TAc objectives and DANN.

    ``grl_sign`` is exposed so a broken reversal can be shown to fail.
    """
    rows = []
    orig = ad.grad_reverse

    def patched(x, sign=-1.0):
        return orig(x, grl_sign if sign == -1.0 else sign)

    ad.grad_reverse = patched
    try:
        model, src, tgt = _tiny_transfer("TAc-fc", seed)
        P = model.params
        rows.append(("transfer", "L_c", check(P, _main_names(P), lambda: model.loss(src, tgt).classification)))
        rows.append(("transfer", "L_l", check(P, P.select("F.") + P.select("L."), lambda: model.loss(src, tgt, grl=False).feature)))
        rows.append(("transfer", "L_g", check(P, [n for n in P.names() if not n.startswith("S.")], lambda: model.loss(src, tgt, grl=False).compound)))
        for variant in ("TAc", "TAc-f", "TAc-c", "TAc-fc", "DANN"):
            model, src, tgt = _tiny_transfer(variant, seed)
            P = model.params
            build = lambda: model.loss(src, tgt).objective  # noqa: E731
            main = check(P, _main_names(P), build, lambda: model.loss(src, tgt).value)
            disc_names = _disc_names(P)
            disc = 0.0
            if disc_names:
                disc = check(P, disc_names, build, lambda: model.cfg.lam * model.loss(src, tgt).disc_total)
            label = "DANN" if variant == "DANN" else f"total:{variant}"
            rows.append(("transfer", label, max(main, disc)))
    finally:
        ad.grad_reverse = orig
    return rows


def suite_transfer(seed: int = 0):
    return transfer_rows(seed)


def suite_ranking(seed: int = 0):
    rows = []
    for l2, label in ((0.0, "L_rank"), (1e-2, "L_rank+l2")):
        cfg = RankConfig(encoder=EncoderConfig(d=5, tau=2, attn_hidden=4), l2=l2, seed=seed)
        rng = np.random.default_rng([seed, 3])
        model = RankModel(cfg, rng)
        jitter(model.params, rng)
        recs = [CompoundRecord(f"r{i}", random_graph(rng), activity=float(a)) for i, a in enumerate(rng.permutation(5))]
        rows.append(("ranking", label, check(model.params, model.params.names(), lambda: model.objective(recs)[0])))
    return rows


SUITES = {
    "nn_core": suite_nn_core,
    "dmpnn": suite_dmpnn,
    "transfer": suite_transfer,
    "ranking": suite_ranking,
}


def run_all(seed: int = 0, tolerance: float = TOLERANCE, suites=None):
    """Run every registered suite; returns (rows with pass flags, all_passed)."""
    table = []
    for name in suites or SUITES:
        for suite, loss, err in SUITES[name](seed):
            table.append({"suite": suite, "loss": loss, "max_rel_err": err, "passed": err < tolerance})
    return table, all(r["passed"] for r in table)


def format_table(rows) -> str:
    lines = [f"{'suite':<10} {'loss':<22} {'max_rel_err':>12}  status"]
    for r in rows:
        lines.append(f"{r['suite']:<10} {r['loss']:<22} {r['max_rel_err']:>12.3e}  {'ok' if r['passed'] else 'FAIL'}")
    return "\n".join(lines)
