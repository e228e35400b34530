# coding: utf-8

# # A small three-party linkage
#
# Three databases, two records each. Soundex puts smith, smyth and
# smithe in one block; jones is on its own and never compared.

# In[1]:

from mpprl.bloom import BloomParams
from mpprl.datagen import Record
from mpprl.protocol import ProtocolConfig, run_linkage


def rec(rid, given, surname, suburb="raleigh", postcode="27601"):
    return Record(rid, {"given_name": given, "surname": surname, "suburb": suburb, "postcode": postcode})


databases = [
    [rec("RA1", "peter", "smith"), rec("RA2", "john", "smyth", "durham", "27701")],
    [rec("RB1", "mary", "smithe", "cary", "27511"), rec("RB2", "peter", "smith")],
    [rec("RC1", "pete", "smith"), rec("RC2", "peter", "jones")],
]


# l = 500 does not split into three equal parts, so segments are padded
# with zero bits. Padding never changes a count.

# In[2]:

params = BloomParams(l=500, k=20, parties=3, pad_segments=True)
out = run_linkage(databases, ProtocolConfig(params, s_t=0.8))
for (bkv, pseudos), dice in zip(out.keys, out.dice):
    rids = [p.resolve(ps) for p, ps in zip(out.parties, pseudos)]
    print(bkv, rids, round(float(dice), 3))


# In[3]:

print(out.match_rids())
print(out.report.messages)
print(out.report.bytes)
