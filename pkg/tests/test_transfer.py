import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import dense_mlp

from molxfer.dmpnn import EncoderConfig
from molxfer.molgraph import synth_generate
from molxfer.nn import autodiff as ad
from molxfer.nn.params import ParamSet, add_mlp, mlp
from molxfer.transfer import (
    VARIANTS,
    EmptyBatch,
    TransferConfig,
    TransferModel,
    baseline_fcn,
    binary_entropy,
    classification_loss,
    compound_disc_loss,
    entropy_scale,
    feature_disc_loss,
    train,
    train_dann,
)

LN2 = math.log(2.0)


def tiny(variant="TAc", **kw):
    base = dict(
        variant=variant,
        encoder=EncoderConfig(d=6, tau=2, attn_hidden=5),
        clf_hidden=5,
        disc_hidden=5,
        epochs=3,
        batch_size=4,
        lam=0.3,
        alpha=0.7,
    )
    base.update(kw)
    return TransferConfig(**base)


@pytest.fixture(scope="module")
def data():
    src, tgt = synth_generate(5, 6, 6)
    return src, tgt[:6], tgt[6:]


def v(x):
    return ad.Value(np.asarray(x, dtype=float))


# -- loss pieces ------------------------------------------------------------------


def test_classification_loss_examples():
    half = v([0.5, 0.5])
    for alpha in (0.0, 0.5, 2.0):
        got = float(classification_loss(half, [1, 0], half, [0, 1], alpha).data)
        assert got == pytest.approx((1 + alpha) * LN2, abs=1e-12)
    eps = 1e-7
    near = float(classification_loss(v([1 - eps]), [1], v([1 - eps]), [1], 0.5).data)
    assert near == pytest.approx(1.5 * -math.log(1 - eps), abs=1e-12) and near < 1e-6
    with pytest.raises(EmptyBatch):
        classification_loss(half, [1, 0], v(np.zeros(0)), [], 0.5)


def test_alpha_zero_source_has_no_gradient():
    ps = ad.Value(np.array([0.3, 0.8]), requires_grad=True)
    pt = ad.Value(np.array([0.6]), requires_grad=True)
    loss = classification_loss(ps, [1, 0], pt, [1], 0.0)
    ad.backward(loss)
    assert np.all(ps.grad == 0.0)
    assert float(loss.data) == pytest.approx(-math.log(0.6), abs=1e-15)


def test_disc_loss_examples():
    assert float(feature_disc_loss(v([[0.8]]), v([[0.3]])).data) == pytest.approx(
        -math.log(0.8) - math.log(0.7), abs=1e-12
    )
    assert float(feature_disc_loss(v([[0.8]]), v([[0.3]])).data) == pytest.approx(0.5798, abs=5e-5)
    assert float(compound_disc_loss(v([[0.9]]), v([[0.2]])).data) == pytest.approx(0.3285, abs=5e-5)
    half = v(np.full((3, 4), 0.5))
    assert float(feature_disc_loss(half, half).data) == pytest.approx(2 * LN2, abs=1e-12)
    q = v(np.full((2, 1), 0.5))
    assert float(compound_disc_loss(q, q).data) == pytest.approx(2 * LN2, abs=1e-12)
    perfect = float(compound_disc_loss(v([[1.0]]), v([[0.0]])).data)
    assert perfect == pytest.approx(2 * -math.log(1 - 1e-7), abs=1e-12)
    with pytest.raises(EmptyBatch):
        compound_disc_loss(v(np.zeros((0, 1))), q)


def test_entropy_examples():
    assert float(binary_entropy(0.5).data) == pytest.approx(LN2, abs=1e-15)
    assert float(binary_entropy(1.0).data) < 1e-5
    assert float(binary_entropy(0.0).data) < 1e-5
    z = entropy_scale(v([0.0, 0.0]), binary_entropy(v([0.3, 0.9])))
    assert np.all(z.data == 0.0)


@given(st.integers(0, 10**6))
def test_entropy_scale_bounds(seed):
    rng = np.random.default_rng(seed)
    r = rng.normal(size=(4, 6))
    p = rng.uniform(size=(4, 6))
    z = entropy_scale(v(r), binary_entropy(v(p))).data
    ratio = z / r
    assert np.all(ratio >= 1.0) and np.all(ratio <= 1.0 + LN2 + 1e-15)


def test_classifier_zero_weights_and_oracle(rng):
    P = ParamSet()
    add_mlp(P, "S", 4, 3, 1, rng)
    x = rng.normal(size=(5, 4))
    got = mlp(v(x), P, "S").data.ravel()
    np.testing.assert_allclose(got, [dense_mlp(row, P, "S")[0] for row in x], rtol=0, atol=1e-14)
    for n in P.names():
        P[n].data = np.zeros_like(P[n].data)
    assert np.all(mlp(v(x), P, "S").data == 0.5)
    P["S.b2"].data = np.array([0.1])
    assert np.all(mlp(v(x), P, "S").data > 0.5)


# -- composite loss and gradient routing --------------------------------------------


@pytest.mark.parametrize("variant", VARIANTS[:5])
def test_grl_exactly_negates_discriminator_path(variant, data):
    src, tt, _ = data
    model = TransferModel(tiny(variant), np.random.default_rng(0))
    grads = {}
    for grl in (True, False):
        model.params.zero_grad()
        loss = model.loss(src[:4], tt[:4], grl=grl)
        if loss.adversarial is None:
            assert variant == "TAc"
            return
        ad.backward(loss.adversarial)
        grads[grl] = model.params.grads()
    for name in model.params.select("F."):
        assert np.any(grads[True][name] != 0)
        np.testing.assert_array_equal(grads[True][name], -grads[False][name])
    for name in model.params.select("L.") + model.params.select("G."):
        np.testing.assert_array_equal(grads[True][name], grads[False][name])


@pytest.mark.parametrize("variant", ["TAc-f", "TAc-c", "TAc-fc", "DANN"])
def test_lambda_zero_leaves_discriminators_still(variant, data):
    src, tt, _ = data
    model = TransferModel(tiny(variant, lam=0.0), np.random.default_rng(1))
    loss = model.loss(src[:4], tt[:4])
    assert float(loss.objective.data) == float(loss.classification.data)
    model.params.zero_grad()
    ad.backward(loss.objective)
    for name in model.params.select("L.") + model.params.select("G."):
        assert np.all(model.params[name].grad == 0.0)


def test_variant_masking():
    names = {var: set(n.split(".")[0] for n in TransferModel(tiny(var)).params.names()) for var in VARIANTS}
    assert names["TAc"] == {"F", "S"}
    assert names["TAc-f"] == {"F", "S", "L"}
    assert names["TAc-c"] == {"F", "S", "G"}
    assert names["TAc-fc"] == {"F", "S", "L", "G"}
    assert names["DANN"] == {"F", "S", "G"}
    assert tiny("TAc").effective_lam == 0.0


def test_classifier_loss_never_updates_L(data):
    src, tt, _ = data
    model = TransferModel(tiny("TAc-fc"), np.random.default_rng(2))
    model.params.zero_grad()
    ad.backward(model.loss(src[:4], tt[:4]).classification)
    for name in model.params.select("L.") + model.params.select("G."):
        assert np.all(model.params[name].grad == 0.0)
    assert any(np.any(model.params[n].grad != 0) for n in model.params.select("S."))


@pytest.mark.parametrize("variant,prefix,part", [("TAc-f", "L.", "feature"), ("TAc-c", "G.", "compound"),
                                                 ("TAc-fc", "L.", "feature"), ("TAc-fc", "G.", "compound"),
                                                 ("DANN", "G.", "compound")])
def test_discriminator_step_lowers_own_loss(variant, prefix, part, data):
    src, tt, _ = data
    model = TransferModel(tiny(variant), np.random.default_rng(3))
    before = model.loss(src[:5], tt[:5])
    model.params.zero_grad()
    ad.backward(before.objective)
    for name in model.params.select(prefix):
        model.params[name].data = model.params[name].data - 1e-3 * model.params[name].grad
    after = model.loss(src[:5], tt[:5])
    assert float(getattr(after, part).data) < float(getattr(before, part).data)


def test_value_is_classification_minus_lambda_disc(data):
    src, tt, _ = data
    model = TransferModel(tiny("TAc-fc"), np.random.default_rng(4))
    loss = model.loss(src[:3], tt[:3])
    expected = float(loss.classification.data) - 0.3 * (float(loss.feature.data) + float(loss.compound.data))
    assert loss.value == pytest.approx(expected, abs=1e-14)
    assert float(loss.objective.data) == pytest.approx(
        float(loss.classification.data) + 0.3 * loss.disc_total, abs=1e-14
    )


def test_alpha_one_symmetric(data):
    src, tt, _ = data
    model = TransferModel(tiny("TAc", alpha=1.0), np.random.default_rng(5))
    a = float(model.loss(src[:4], tt[:4]).classification.data)
    b = float(model.loss(tt[:4], src[:4]).classification.data)
    assert a == pytest.approx(b, abs=1e-12)


def test_empty_batches_raise(data):
    src, tt, _ = data
    model = TransferModel(tiny("TAc-c"))
    with pytest.raises(EmptyBatch):
        model.loss(src[:3], [])
    with pytest.raises(EmptyBatch):
        model.loss([], tt[:3])


# -- training ----------------------------------------------------------------------------


class Unreadable:
    def __init__(self, rec):
        self.graph = rec.graph

    @property
    def label(self):
        raise AssertionError("target training label was read")


def test_dann_never_reads_target_labels(data):
    src, tt, tv = data
    model = TransferModel(tiny("DANN"))
    model.loss(src[:3], [Unreadable(r) for r in tt[:3]])
    res = train_dann(src, [Unreadable(r) for r in tt], tv, tiny("DANN", epochs=2))
    assert len(res.history) == 2


def test_dann_lambda_zero_is_source_only(data):
    src, tt, _ = data
    model = TransferModel(tiny("DANN", lam=0.0), np.random.default_rng(6))
    loss = model.loss(src[:4], [Unreadable(r) for r in tt[:4]])
    probs = model.predict_proba(src[:4])
    labels = np.array([r.label for r in src[:4]])
    expected = -np.mean(labels * np.log(probs) + (1 - labels) * np.log(1 - probs))
    assert float(loss.objective.data) == pytest.approx(expected, abs=1e-12)


def test_dt_with_empty_source_is_not(data):
    _, tt, tv = data
    a = baseline_fcn("encoder", "NoT", [], tt, tv, tiny("NoT"))
    b = baseline_fcn("encoder", "DT", [], tt, tv, tiny("NoT"))
    for n, arr in a.model.params.state().items():
        np.testing.assert_array_equal(arr, b.model.params.state()[n])
    assert a.history == b.history


def test_dt_pool_is_symmetric(data):
    src, tt, _ = data
    model = TransferModel(tiny("DT"), np.random.default_rng(7))
    a = float(model.loss(src, tt).objective.data)
    b = float(model.loss(tt, src).objective.data)
    assert a == pytest.approx(b, abs=1e-12)


def test_fingerprint_baseline_dims(data):
    src, tt, tv = data
    cfg = tiny("NoT", features="morgan")
    assert cfg.input_dim == 2048
    res = baseline_fcn("morgan_count", "DT", src, tt, tv, cfg)
    assert res.model.params["S.W1"].shape == (5, 2048)
    assert "F.W" not in res.model.params
    with pytest.raises(ValueError):
        tiny("TAc", features="morgan")


def test_training_deterministic_and_logged(data, tmp_path):
    src, tt, tv = data
    cfg = tiny("TAc-fc", epochs=4)
    a, b = train(None, src, tt, tv, cfg), train(None, src, tt, tv, cfg)
    assert a.history == b.history
    for n, arr in a.model.params.state().items():
        np.testing.assert_array_equal(arr, b.model.params.state()[n])
    assert [row["epoch"] for row in a.history] == [1, 2, 3, 4]
    assert a.history[0]["lr"] == 1e-3 and a.history[-1]["lr"] == pytest.approx(1e-4, rel=1e-12)
    vals = [row["val_roc_auc"] for row in a.history]
    assert a.best_val == max(vals) and a.best_epoch == vals.index(max(vals)) + 1
    assert a.history_csv().splitlines()[0] == "epoch,train_loss,val_roc_auc,lr"
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    a.save(p1)
    b.save(p2)
    assert p1.read_bytes() == p2.read_bytes()
    back = TransferModel.load(p1)
    np.testing.assert_array_equal(back.predict_proba(tv), a.model.predict_proba(tv))
    assert back.header["best_epoch"] == a.best_epoch and back.cfg == cfg


def test_training_splits_required(data):
    src, tt, tv = data
    with pytest.raises(EmptyBatch):
        train("TAc", src, tt, [], tiny())
    with pytest.raises(EmptyBatch):
        train("TAc", [], tt, tv, tiny())


def test_config_roundtrip_and_validation():
    cfg = tiny("TAc-c", lam=0.001)
    assert TransferConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ValueError):
        tiny("XYZ")
    with pytest.raises(ValueError):
        tiny(alpha=-1.0)
