"""Kernel network forward pass at dt = 0.37 in 50-digit arithmetic.

Straight-line re-implementation: x = ln(1 + dt), hidden = relu(w x + b),
K[a][b] = ln(1 + exp(out_w[a*D+b] . hidden + out_b[a*D+b])).
Parameters are decimal literals shared with tests/oracle_values.rs.
"""
from mpmath import mp, mpf, log, exp

mp.dps = 50
D, H = 2, 8
hidden_w = [0.83, -1.21, 0.47, 1.9, -0.35, 0.06, -2.4, 1.15]
hidden_b = [0.1, 0.9, -0.2, -0.05, 0.3, 0.01, 1.2, -0.6]
out_w = [
    [0.5, -0.3, 0.8, 0.12, -0.9, 1.4, 0.2, -0.45],
    [-0.7, 0.25, 0.05, -1.1, 0.6, 0.33, -0.15, 0.9],
    [1.05, -0.4, -0.6, 0.7, 0.2, -0.25, 0.45, 0.1],
    [0.0, 0.65, -0.85, 0.3, -0.2, 0.75, -1.3, 0.55],
]
out_b = [-0.3, 0.2, -1.5, 0.7]

dt = mpf(0.37)
x = log(1 + dt)
hidden = [max(mpf(0), mpf(w) * x + mpf(b)) for w, b in zip(hidden_w, hidden_b)]
for r in range(D * D):
    raw = mpf(out_b[r]) + sum(mpf(w) * h for w, h in zip(out_w[r], hidden))
    print(mp.nstr(log(1 + exp(raw)), 25))
