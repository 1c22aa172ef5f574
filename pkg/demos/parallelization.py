"""Where the speedup comes from: per-party multiplication counters.

The coded protocol splits the data into K blocks, so each party works on
1/K of the rows.  A three-subgroup MPC baseline makes each party handle a
third.  The ratio of per-party gradient multiplications is therefore 3/K.

    python demos/parallelization.py
"""

import numpy as np

from copml.datasets import make_separable, split_among_parties
from copml.protocol import BASELINE_BH08, ProtocolConfig, baseline_T, setup

X, y = make_separable(600, 10, seed=3)


def per_party_muls(cfg):
    s = setup(cfg, split_among_parties(X, y, cfg.n_parties))
    s.step()
    # baseline parties outside the three subgroups only receive re-shares
    workers = [i for g in cfg.group_members for i in g] if cfg.scheme == BASELINE_BH08 else s.points
    snap = s.net.snapshot()
    return np.mean([snap[i]["muls"].get("gradient", 0) for i in workers])


print(f"{'N':>3} {'K':>3} {'coded':>8} {'baseline':>9} {'ratio':>6} {'3/K':>6}")
for N, K in [(13, 4), (19, 6), (25, 8)]:
    coded = per_party_muls(ProtocolConfig(n_parties=N, K=K, T=1))
    base = per_party_muls(ProtocolConfig(n_parties=N, T=baseline_T(N), scheme=BASELINE_BH08))
    print(f"{N:>3} {K:>3} {coded:8.0f} {base:9.0f} {coded / base:6.3f} {3 / K:6.3f}")
