# # Picking negative examples
#
# Descriptions only say what an object *is*.  Two ways to find objects that
# are not an instance of a word: take every object never described with it, or
# rank those objects by how unlike the positives their descriptions read and
# keep the most distant ones.  The second uses paragraph vectors (PV-DM).

# In[1]:

from udm.dataset import build_vocabulary
from udm.negatives import cosine, negatives_all, negatives_semantic, train_pvdm
from udm.synth import two_topic_corpus

# A toy corpus with two topics; "akey" only occurs in topic A documents.

# In[2]:

corpus, topic = two_topic_corpus(seed=0)
vocab = build_vocabulary(corpus)
pv = train_pvdm(corpus, m=20, epochs=100, seed=0)
a = [o for o in sorted(topic) if topic[o] == "a"]
b = [o for o in sorted(topic) if topic[o] == "b"]
print(f"cos a0-a1 {cosine(pv.doc_vectors[a[0]], pv.doc_vectors[a[1]]):.2f}, "
      f"a0-b0 {cosine(pv.doc_vectors[a[0]], pv.doc_vectors[b[0]]):.2f}")

# All non-positives versus the semantically distant subset.

# In[3]:

everything = negatives_all("akey", vocab, pv.doc_vectors)
distant = negatives_semantic("akey", vocab, pv, ratio=1.5)
print(len(everything.object_ids), "non-positive objects")
print("distant picks:", sorted(distant.object_ids))
