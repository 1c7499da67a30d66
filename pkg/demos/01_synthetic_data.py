# # Synthetic grounded-language data
#
# The generator produces objects, several feature vectors ("images") per object
# and a few short descriptions per object.  Each object belongs to a class that
# fixes one color, one shape and one object word; the descriptions then mention
# those words, with a share of them swapped for a wrong word of the same kind.

# In[1]:

import collections
import tempfile

import numpy as np

from udm.dataset import build_vocabulary
from udm.synth import SynthConfig, build, corrupted_fraction, generate

cfg = SynthConfig(seed=0)
res = build(cfg)
print(res.features.X.shape, "feature matrix,", len(set(res.features.object_ids)), "objects")

# Each category owns a contiguous block of columns; the rest is noise.

# In[2]:

for name, (lo, hi) in res.slices.items():
    print(f"{name:7s} columns {lo:3d}..{hi - 1}")

# A handful of descriptions, and how many tokens the noise process flipped.

# In[3]:

for d in res.corpus.entries[:5]:
    print(d.object_id, "->", " ".join(d.tokens))
print(f"corrupted tokens: {corrupted_fraction(res):.1%} (target {cfg.annotation_noise:.0%})")

# The vocabulary keeps every token seen at least twice, with the objects whose
# descriptions mention it.  "lemon" is rare by design.

# In[4]:

vocab = build_vocabulary(res.corpus)
counts = collections.Counter({c.token: len(c.positive_objects) for c in vocab})
print(counts.most_common(6))
print("lemon positives:", counts.get("lemon", 0))

# Feature scales differ per column when ``scale_decades`` > 0, like stacked
# descriptors with unrelated units.

# In[5]:

spread = res.features.X.std(axis=0)
print(f"column std ranges from {spread.min():.3g} to {spread.max():.3g}")

# Writing to disk gives the files the command-line tool reads.

# In[6]:

with tempfile.TemporaryDirectory() as out:
    written = generate(cfg, out)
    print(sorted(p.name for p in written.paths.values()))
