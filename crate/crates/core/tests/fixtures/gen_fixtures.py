"""Writes the golden byte fixtures with Python's struct module.

Run from this directory: python3 gen_fixtures.py
"""
import struct

def emb():
    recs = [(0, [1.0, -2.5, 0.25]), (2, [3.0, 0.0, -0.0]), (1, [1e-3, 65504.0, -7.125])]
    out = b"NCEMB1\0\0" + struct.pack("<IIQ", 1, 3, len(recs))
    for label, v in recs:
        out += struct.pack("<I3f", label, *v)
    return out

def wgt(bias):
    w = [1.0, 2.0, 3.0, -1.0, 0.5, 0.0]
    out = b"NCWGT1\0\0" + struct.pack("<IIIB3x", 1, 2, 3, 1 if bias else 0)
    out += struct.pack("<6f", *w)
    if bias:
        out += struct.pack("<2f", 0.25, -4.0)
    return out

def sta():
    classes = [(3, [2.0, -1.0], 4.5), (0, [0.0, 0.0], 0.0), (1, [0.5, 0.5], 0.0)]
    out = b"NCSTA1\0\0" + struct.pack("<III", 1, 3, 2)
    for n, mean, m2 in classes:
        out += struct.pack("<Q2dd", n, *mean, m2)
    return out

for name, data in [
    ("embedding_small.ncemb", emb()),
    ("classifier_bias.ncwgt", wgt(True)),
    ("classifier_nobias.ncwgt", wgt(False)),
    ("stats_small.ncsta", sta()),
]:
    with open(name, "wb") as f:
        f.write(data)
