# coding: utf-8

# # Pruning candidates early
#
# With a segment threshold s_m each party drops a partial candidate as
# soon as the records folded in so far disagree too much on its own
# segment. A dropped prefix removes every candidate that extends it.

# In[1]:

from mpprl import evaluation
from mpprl.bloom import BloomParams
from mpprl.datagen import GenSpec, generate
from mpprl.protocol import ProtocolConfig, run_linkage


# In[2]:

data = generate(GenSpec(parties=3, n_records=2000, corrupt_fraction=0.2, seed=4))
params = BloomParams(l=500, k=20, parties=3, pad_segments=True)
full = run_linkage(data.databases, ProtocolConfig(params))
print("no filter", full.report.candidates_total, evaluation.quality(full.match_rids(), data.truth))


# In[3]:

for s_m in (0.0, 0.5, 0.6, 0.7, 0.8):
    out = run_linkage(data.databases, ProtocolConfig(params, s_m=s_m))
    r = out.report
    rr = evaluation.reduction_ratio_filter(r.candidates_total, r.candidates_after_filter)
    q = evaluation.quality(out.match_rids(), data.truth)
    print(f"s_m={s_m:.1f}  kept={r.candidates_after_filter:7d}  RR_f={rr:.4f}  "
          f"F1={q.f1:.4f}  subset={out.match_rids() <= full.match_rids()}")
