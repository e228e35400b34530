# coding: utf-8

# # Ring secure summation
#
# Three parties hold 11, 7 and 15. The first one adds a secret offset,
# the running total goes round the ring, and only the initiator can
# remove the offset at the end.

# In[1]:

import numpy as np

from mpprl import securesum


# In[2]:

keys = ["candidate"]
offsets = securesum.RandomOffsets(np.array([20]), np.array([0]))
v = securesum.init_masked(keys, [11], [0], offsets)
print("party 2 sees", v.masked_c[0])
v = securesum.add_own(v, keys, [7], [0])
print("party 3 sees", v.masked_c[0])
v = securesum.add_own(v, keys, [15], [0])
print("initiator gets back", v.masked_c[0])
print("sum", securesum.unmask(v, offsets, 3)[0][0])


# With real offsets, drawn from [0, 2^31) per candidate, the first hop
# looks uniform no matter what the initiator holds.

# In[3]:

rng = np.random.default_rng(0)
n = 5
values = [(rng.integers(0, 40, n), rng.integers(40, 80, n)) for _ in range(4)]
hops = []
c, x = securesum.ring_sum(range(n), values, rng,
                          on_hop=lambda s, r, vec: hops.append((s, r, vec.masked_c[:2])))
for s, r, seen in hops:
    print(f"{s} -> {r}: {seen}")
print(c, sum(v[0] for v in values))
