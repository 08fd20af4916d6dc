"""Transfer from a related source assay to a small target assay.

The synthetic pair shares a planted active motif.  The target training
set is tiny (20 compounds), so a target-only model has little to go on;
the joint models borrow strength from the 100 labelled source compounds.
"""

import numpy as np

from molxfer.dmpnn import EncoderConfig
from molxfer.metrics import classification_report
from molxfer.molgraph import synth_generate
from molxfer.transfer import TransferConfig, baseline_fcn, train, train_dann

source, target = synth_generate(seed=3, n_active=50, n_inactive=50, overlap=1.0)
rng = np.random.default_rng(0)
order = rng.permutation(len(target))
pos = [target[i] for i in order if target[i].label == 1]
neg = [target[i] for i in order if target[i].label == 0]
train_t, val_t, test_t = pos[:10] + neg[:10], pos[10:20] + neg[10:20], pos[20:] + neg[20:]
print(f"source {len(source)}, target train {len(train_t)}, val {len(val_t)}, test {len(test_t)}")

cfg = TransferConfig(encoder=EncoderConfig(d=32, tau=3), epochs=15, alpha=0.5, lam=0.01)
labels = [r.label for r in test_t]


def show(name, result):
    m = classification_report(result.model.predict_proba(test_t), np.array(labels))
    print(f"{name:<12} best epoch {result.best_epoch:>2}  test ROC-AUC {m['roc_auc']:.3f}  F1 {m['f1']:.3f}")


show("NoT", baseline_fcn("encoder", "NoT", [], train_t, val_t, cfg))
show("NoT:morgan", baseline_fcn("morgan", "NoT", [], train_t, val_t, cfg))
show("DT", baseline_fcn("encoder", "DT", source, train_t, val_t, cfg))
for variant in ("TAc", "TAc-f", "TAc-c", "TAc-fc"):
    show(variant, train(variant, source, train_t, val_t, cfg))
show("DANN", train_dann(source, train_t, val_t, cfg))
