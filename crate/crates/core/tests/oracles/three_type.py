"""Branching matrix of the bundled three-type process, its eigenvalues from
the characteristic polynomial, and (I - B)^-1 mu."""
from mpmath import mp, mpf, matrix, lu_solve, polyroots, pi, quad, cos, exp, inf

mp.dps = 40
mu = [mpf("0.3"), mpf("0.05"), mpf("0.2")]
step = mpf("0.5") * mpf("0.5")
cosine = quad(lambda t: cos(t / 2), [0, pi])
expo = quad(lambda t: exp(-t / 3), [0, inf])
B = matrix([[0, step, 0], [0, cosine, 0], [expo, 0, expo]])
print("B", B.tolist())
# det(B - l I) for this sparsity pattern: -l^3 + (b11 + b22) l^2 - b11 b22 l
b11, b22 = B[1, 1], B[2, 2]
print("eigenvalues", sorted(polyroots([-1, b11 + b22, -b11 * b22, 0]), key=abs))
I = matrix([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
r = lu_solve((I - B).T, matrix(mu))
print("rates", [mp.nstr(v, 20) for v in r])
