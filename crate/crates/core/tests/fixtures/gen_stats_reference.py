import json, numpy as np, mpmath as mp
from scipy import stats
mp.mp.dps = 50
rng = np.random.default_rng(20261016)

def welch_ref(a, b):
    a = [mp.mpf(x) for x in a]; b = [mp.mpf(x) for x in b]
    na, nb = len(a), len(b)
    ma, mb = mp.fsum(a)/na, mp.fsum(b)/nb
    va = mp.fsum((x-ma)**2 for x in a)/(na-1); vb = mp.fsum((x-mb)**2 for x in b)/(nb-1)
    sa, sb = va/na, vb/nb
    t = (ma-mb)/mp.sqrt(sa+sb)
    dof = (sa+sb)**2/(sa**2/(na-1)+sb**2/(nb-1))
    p = mp.betainc(dof/2, mp.mpf(1)/2, 0, dof/(dof+t*t), regularized=True)
    return float(t), float(p), float(dof)

def pearson_ref(x, y):
    x = [mp.mpf(v) for v in x]; y = [mp.mpf(v) for v in y]
    n = len(x); mx, my = mp.fsum(x)/n, mp.fsum(y)/n
    sxy = mp.fsum((a-mx)*(b-my) for a, b in zip(x, y))
    sxx = mp.fsum((a-mx)**2 for a in x); syy = mp.fsum((b-my)**2 for b in y)
    r = sxy/mp.sqrt(sxx*syy)
    d = n-2
    t2 = r*r*d/(1-r*r)
    p = mp.betainc(mp.mpf(d)/2, mp.mpf(1)/2, 0, d/(d+t2), regularized=True)
    return float(r), float(p)

welch, pearson = [], []
for i in range(100):
    na, nb = int(rng.integers(2, 60)), int(rng.integers(2, 60))
    sd_a, sd_b = float(rng.uniform(0.1, 5)), float(rng.uniform(0.1, 5))
    shift = float(rng.choice([0.0, rng.uniform(-3, 3), rng.uniform(-10, 10)]))
    a = [float(v) for v in rng.normal(0, sd_a, na)]
    b = [float(v) for v in rng.normal(shift, sd_b, nb)]
    t, p, dof = welch_ref(a, b)
    s = stats.ttest_ind(a, b, equal_var=False)
    assert abs(s.statistic - t) < 1e-9 * max(1, abs(t)) and abs(s.pvalue - p) < 1e-9, (i, s, t, p)
    welch.append({"a": a, "b": b, "t": t, "p": p, "dof": dof})
for i in range(100):
    n = int(rng.integers(3, 80))
    rho = float(rng.uniform(-0.95, 0.95))
    x = rng.normal(0, 1, n)
    y = rho * x + np.sqrt(1 - rho**2) * rng.normal(0, 1, n)
    scale, off = rng.uniform(0.1, 100, 2), rng.uniform(-50, 50, 2)
    x = [float(v) for v in x * scale[0] + off[0]]
    y = [float(v) for v in y * scale[1] + off[1]]
    r, p = pearson_ref(x, y)
    s = stats.pearsonr(x, y)
    assert abs(s.statistic - r) < 1e-9 and abs(s.pvalue - p) < 1e-8, (i, s, r, p)
    pearson.append({"x": x, "y": y, "r": r, "p": p})
json.dump({"welch": welch, "pearson": pearson}, open("stats_reference.json", "w"), indent=1)
print("ok", min(w["p"] for w in welch), min(q["p"] for q in pearson))
