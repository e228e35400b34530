# coding: utf-8

# # What a curious party can learn
#
# Party i only ever sees segment i of the other parties' filters. Here it
# encodes a global database with the agreed keys and looks for exact
# segment patterns. The worst case is a global database equal to the
# linked ones.

# In[1]:

import numpy as np

from mpprl import evaluation
from mpprl.bloom import BloomParams
from mpprl.datagen import FIELDS, GenSpec, generate

data = generate(GenSpec(parties=7, n_records=3000, seed=7))
values = [[r.values(FIELDS) for r in db] for db in data.databases]


# Records shared by all parties appear P times in the global database,
# so their probability of suspicion is 1/P.

# In[2]:

for parties in (3, 5, 7):
    params = BloomParams(l=500, k=20, parties=parties, pad_segments=True)
    dr_mean, dr_mark = evaluation.mean_risk(evaluation.attack_all_positions(values[:parties], params))
    print(f"P={parties}  DR_Mean={dr_mean:.4f}  DR_Mark={dr_mark:.4f}")


# Bit sensitivity from one party's own data: bits set by few grams or few
# records are the ones that leak most.

# In[3]:

params = BloomParams(l=500, k=20, parties=3, pad_segments=True)
prof = evaluation.sensitivity_profile(values[0], params)
print("bits used", len(prof.positions), "max sensitivity", prof.sensitivity.max())
print(np.percentile(prof.sensitivity, [50, 90, 99]))
