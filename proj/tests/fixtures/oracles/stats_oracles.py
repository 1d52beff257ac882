"""Reference values for the statistics tests.

Computed with mpmath at 50 significant digits from textbook formulas
(sums of squares written out term by term, distribution CDFs by numerical
integration of the densities), independently of the C++ implementation.
Run:  python3 stats_oracles.py > ../stats_oracles.json
"""
import json
import itertools
import mpmath as mp

mp.mp.dps = 50


def t_cdf(x, df):
    x, df = mp.mpf(x), mp.mpf(df)
    c = mp.gamma((df + 1) / 2) / (mp.sqrt(df * mp.pi) * mp.gamma(df / 2))
    dens = lambda u: c * (1 + u * u / df) ** (-(df + 1) / 2)
    if x >= 0:
        return mp.mpf("0.5") + mp.quad(dens, [0, x])
    return mp.mpf("0.5") - mp.quad(dens, [x, 0])


def f_cdf(x, d1, d2):
    x, d1, d2 = mp.mpf(x), mp.mpf(d1), mp.mpf(d2)
    if x <= 0:
        return mp.mpf(0)
    c = (d1 / d2) ** (d1 / 2) / mp.beta(d1 / 2, d2 / 2)
    dens = lambda u: c * u ** (d1 / 2 - 1) * (1 + d1 * u / d2) ** (-(d1 + d2) / 2)
    return mp.quad(dens, [0, x])


def ibeta(a, b, x):
    a, b, x = mp.mpf(a), mp.mpf(b), mp.mpf(x)
    return mp.quad(lambda u: u ** (a - 1) * (1 - u) ** (b - 1), [0, x]) / mp.beta(a, b)


def mean(v):
    return mp.fsum(v) / len(v)


def sd(v):
    m = mean(v)
    return mp.sqrt(mp.fsum((x - m) ** 2 for x in v) / (len(v) - 1))


def one_sample(values, mu0):
    v = [mp.mpf(x) for x in values]
    n = len(v)
    t = (mean(v) - mu0) / (sd(v) / mp.sqrt(n))
    p = 2 * (1 - t_cdf(abs(t), n - 1))
    return t, p


def anova(groups):
    g = [[mp.mpf(x) for x in grp] for grp in groups]
    allv = [x for grp in g for x in grp]
    gm = mean(allv)
    ssb = mp.fsum(len(grp) * (mean(grp) - gm) ** 2 for grp in g)
    ssw = mp.fsum((x - mean(grp)) ** 2 for grp in g for x in grp)
    df1, df2 = len(g) - 1, len(allv) - len(g)
    F = (ssb / df1) / (ssw / df2)
    return F, 1 - f_cdf(F, df1, df2), df1, df2


def rm(matrix):
    m = [[mp.mpf(x) for x in row] for row in matrix]
    s, t = len(m), len(m[0])
    gm = mean([x for row in m for x in row])
    cm = [mean([m[i][j] for i in range(s)]) for j in range(t)]
    rmn = [mean(row) for row in m]
    ss_total = mp.fsum((x - gm) ** 2 for row in m for x in row)
    ss_time = s * mp.fsum((c - gm) ** 2 for c in cm)
    ss_subj = t * mp.fsum((r - gm) ** 2 for r in rmn)
    ss_err = ss_total - ss_time - ss_subj
    df1, df2 = t - 1, (t - 1) * (s - 1)
    F = (ss_time / df1) / (ss_err / df2)
    return F, 1 - f_cdf(F, df1, df2), df1, df2


def paired(matrix):
    t = len(matrix[0])
    pairs = list(itertools.combinations(range(t), 2))
    out = []
    for a, b in pairs:
        d = [mp.mpf(row[a]) - mp.mpf(row[b]) for row in matrix]
        n = len(d)
        stat = mean(d) / (sd(d) / mp.sqrt(n))
        p = min(mp.mpf(1), 2 * (1 - t_cdf(abs(stat), n - 1)) * len(pairs))
        out.append({"first": a, "second": b, "t": float(stat), "p_bonferroni": float(p)})
    return out


one_sample_fixture = [5, 6, 5, 7, 6, 5, 6, 7, 5, 6]
anova_fixture = [[1, 2, 3], [4, 5, 6], [7, 8, 9]]
anova_fixture_2 = [[2.5, 3.1, 4.7, 3.3], [5.2, 4.4, 6.1], [3.9, 4.0, 4.8, 5.5, 4.1]]
rm_fixture = [[5, 6, 7], [4, 6, 6], [6, 7, 9], [5, 5, 8]]
posthoc_fixture = [[6, 5, 5], [7, 5, 6], [6, 4, 4], [5, 5, 4], [7, 6, 5], [6, 4, 5]]

t, p = one_sample(one_sample_fixture, 4)
out = {
    "one_sample": {"values": one_sample_fixture, "mu0": 4, "t": float(t), "p": float(p), "df": 9},
    "anova": [],
    "rm_anova": {},
    "posthoc": {},
    "t_cdf": [],
    "f_cdf": [],
    "incomplete_beta": [],
}
for fx in (anova_fixture, anova_fixture_2):
    F, pf, d1, d2 = anova(fx)
    out["anova"].append({"groups": fx, "F": float(F), "p": float(pf), "df1": d1, "df2": d2})
F, pf, d1, d2 = rm(rm_fixture)
out["rm_anova"] = {"matrix": rm_fixture, "F": float(F), "p": float(pf), "df1": d1, "df2": d2}
out["posthoc"] = {"matrix": posthoc_fixture, "pairs": paired(posthoc_fixture)}
for x, df in [(0, 5), (2.110, 17), (-2.110, 17), (1.0, 1), (-3.5, 2.5), (0.25, 30), (4.9, 17), (-1.7, 9),
              (10.0, 4), (2.6, 17), (0.01, 100), (-6.0, 34)]:
    out["t_cdf"].append({"x": x, "df": df, "cdf": float(t_cdf(x, df))})
for x, d1, d2 in [(6.5, 1, 16), (1.0, 2, 34), (3.2, 2, 34), (0.5, 3, 10), (4.5, 1, 16), (12.0, 5, 7),
                  (0.05, 1, 1), (2.0, 10, 40)]:
    out["f_cdf"].append({"x": x, "df1": d1, "df2": d2, "cdf": float(f_cdf(x, d1, d2))})
for a, b, x in [(0.9, 0.9, 0.1), (2, 3, 0.8), (8.5, 0.5, 0.3), (0.5, 8.5, 0.7), (15, 20, 0.45), (1, 1, 0.8)]:
    out["incomplete_beta"].append({"a": a, "b": b, "x": x, "value": float(ibeta(a, b, x))})

print(json.dumps(out, indent=2))
