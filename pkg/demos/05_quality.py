# coding: utf-8

# # Approximate versus exact matching
#
# The exact baseline hashes each record's whole value string, so any typo
# breaks the match. Counting common bigram bits tolerates small edits.

# In[1]:

from mpprl import evaluation
from mpprl.baseline import lai_link
from mpprl.bloom import BloomParams
from mpprl.datagen import GenSpec, generate
from mpprl.protocol import ProtocolConfig, run_linkage

params = BloomParams(l=500, k=20, parties=3, pad_segments=True)


# In[2]:

print("corruption  approx_f1  exact_f1")
for corruption in (0.0, 0.2, 0.4):
    data = generate(GenSpec(parties=3, n_records=3000, corrupt_fraction=corruption, seed=1))
    approx = evaluation.quality(run_linkage(data.databases, ProtocolConfig(params)).match_rids(), data.truth)
    exact = evaluation.quality(lai_link(data.databases, params).tuples, data.truth)
    print(f"{corruption:10.1f}  {approx.f1:9.4f}  {exact.f1:8.4f}")


# More parties means more chances that one copy was edited.

# In[3]:

for parties in (3, 5, 7):
    data = generate(GenSpec(parties=parties, n_records=1000, corrupt_fraction=0.2, seed=2))
    p = BloomParams(l=500, k=20, parties=parties, pad_segments=True)
    q = evaluation.quality(run_linkage(data.databases, ProtocolConfig(p)).match_rids(), data.truth)
    print(parties, round(q.f1, 4))
