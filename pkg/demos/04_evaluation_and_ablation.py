# # Cross-validated evaluation
#
# Objects are split into four folds.  For each held-out fold and each word, ten
# small test sets are drawn (a few positive and a few negative images) and F1
# is averaged.  The VAE method is compared with logistic regression on the raw
# features and with one classifier per predefined category.

# In[1]:

from udm.dataset import build_vocabulary
from udm.evaluate import (EvalProtocol, NegativeConfig, run_category_free_lr,
                          run_predefined_category, run_udm, ablate)
from udm.synth import SynthConfig, build
from udm.vae import VaeConfig

res = build(SynthConfig(seed=2, n_objects=40, n_classes=10))
vocab = build_vocabulary(res.corpus)
protocol = EvalProtocol(seed=2)
negs = NegativeConfig(strategy="semantic_distant", epochs=30)
small_vae = VaeConfig(res.features.dim, hidden_dim=64, latent_dim=10, epochs=60, seed=2)

# In[2]:

udm = run_udm(res.features, res.corpus, vocab, protocol, small_vae, negs)
lr = run_category_free_lr(res.features, res.corpus, vocab, protocol, neg_cfg=negs)
cats = {k: [v] for k, v in res.concept_categories.items()}
pre = run_predefined_category(res.features, cats, res.corpus, vocab, protocol, neg_cfg=negs)
for name, rep in (("udm", udm), ("lr", lr), ("predefined", pre)):
    print(f"{name:10s} mean F1 {rep.mean_f1:.3f}  min {rep.min_f1:.3f}  max {rep.max_f1:.3f}")

# Per-word results show which words are hard.

# In[3]:

for c in sorted(udm.concept_results, key=lambda c: c.mean_f1)[:4]:
    print(f"{c.concept:9s} {c.mean_f1:.3f}")

# Label only part of the training objects and see how F1 degrades.

# In[4]:

abl = ablate("category_free_lr", [0.2, 0.5, 1.0], res.features, res.corpus, vocab, protocol, neg_cfg=negs)
for f, m in zip(abl.fractions, abl.mean_f1):
    print(f"{f:.0%} labelled: mean F1 {m:.3f}")
