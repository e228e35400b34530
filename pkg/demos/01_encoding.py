# coding: utf-8

# # Encoding records into Bloom filters
#
# Every party turns a record into one bit array: the bigrams of all
# quasi-identifier values are hashed k times into l bits.

# In[1]:

from mpprl import bloom
from mpprl.bloom import BloomParams


# In[2]:

print(sorted(bloom.qgrams("peter", 2)))
print(sorted(bloom.qgrams("pete", 2)))


# The parties agree on l, k and two secret hash keys. Anyone without the
# keys cannot recompute bit positions.

# In[3]:

params = BloomParams(l=500, k=20, parties=5)
a = bloom.encode_clk(["peter", "smith", "raleigh", "27601"], params)
b = bloom.encode_clk(["pete", "smith", "raleigh", "27601"], params)
c = bloom.encode_clk(["mary", "jones", "cary", "27511"], params)
print(a.ones, b.ones, c.ones)


# Dice on bit arrays: twice the common ones over the total ones.

# In[4]:

print("peter vs pete  ", round(bloom.dice_pair(a, b), 3))
print("peter vs mary  ", round(bloom.dice_pair(a, c), 3))
print("three-way      ", round(bloom.dice_multi([a, b, a]), 3))


# Splitting into segments does not lose anything: the common ones of the
# full arrays are the sum of the common ones per segment.

# In[5]:

segs = [bloom.split(f, 5) for f in (a, b)]
per_segment = [bloom.conjunct([segs[0][i], segs[1][i]]).ones for i in range(5)]
print(per_segment, sum(per_segment), int((a.bits & b.bits).sum()))


# Choosing k: with Q grams per record the false positive rate is
# smallest when about half the bits end up set.

# In[6]:

for q in (10, 17, 25):
    k = bloom.optimal_k(500, q)
    print(f"Q={q:2d}  k={k:2d}  fpr={bloom.false_positive_rate(500, q):.2e}")
