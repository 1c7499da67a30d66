# # Learning a latent embedding
#
# A Gaussian VAE is fitted to standardized feature vectors.  Each image is then
# represented by the encoder's mean and variance, concatenated.

# In[1]:

import numpy as np

from udm import vae
from udm.synth import SynthConfig, build

res = build(SynthConfig(seed=1, n_objects=40, n_classes=10))
cfg = vae.VaeConfig(input_dim=res.features.dim, hidden_dim=64, latent_dim=8, epochs=80, seed=0)
model = vae.train(res.features.X, cfg)

# The reconstruction term dominates the loss.  Posterior variances well below
# 1 mean the latent dimensions are in use; an unused dimension would sit at the
# prior with variance near 1.

# In[2]:

rng = np.random.default_rng(0)
total, recon, kl = vae.loss(model, res.features.X[0], rng)
print(f"first image: loss {total:.2f} = recon {recon:.2f} + kl {kl:.2f}")
mu, var = vae.encode(model, res.features.X)
print("mean variance per latent dim:", np.round(var.mean(axis=0), 3))

# The embedding used downstream has twice the latent width.

# In[3]:

Z = vae.embed(model, res.features.X)
print(Z.shape)

# Images of the same object land close together relative to other objects.

# In[4]:

objs = np.array(res.features.object_ids)
same = [np.linalg.norm(Z[i] - Z[j]) for i in range(40) for j in range(i + 1, 40) if objs[i] == objs[j]]
diff = [np.linalg.norm(Z[i] - Z[j]) for i in range(40) for j in range(i + 1, 40) if objs[i] != objs[j]]
print(f"within-object distance {np.mean(same):.2f}, between-object {np.mean(diff):.2f}")

# Models round-trip through a small JSON file.

# In[5]:

import tempfile, pathlib
with tempfile.TemporaryDirectory() as d:
    path = pathlib.Path(d) / "vae.json"
    vae.save_model(model, path)
    again = vae.load_model(path)
    print("identical embedding:", np.array_equal(vae.embed(again, res.features.X), Z))
