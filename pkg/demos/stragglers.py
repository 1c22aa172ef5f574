"""Slow parties do not change the result.

Each iteration the parties decode from the first (2r+1)(K+T-1)+1 local
results to arrive.  Marking two parties as stragglers changes who is in the
decoding set but leaves the trained model bit-for-bit identical.

    python demos/stragglers.py
"""

from copml.datasets import make_separable, split_among_parties
from copml.protocol import ProtocolConfig, setup
from copml.simulator import LatencyModel

X, y = make_separable(300, 5, seed=1)
cfg = ProtocolConfig(n_parties=9, K=2, T=1, iterations=5, seed=3)
parts = split_among_parties(X, y, cfg.n_parties)

models = {}
for slow in ([], [2, 5]):
    latency = LatencyModel.stragglers(slow) if slow else None
    s = setup(cfg, parts, latency=latency, keep_trace=True)
    s.run()
    models[tuple(slow)] = s.reveal_model_field()
    print(f"stragglers {str(slow or 'none'):>6}: decoding set {sorted(s.trace['decoding_set'])}, "
          f"transcript {s.net.transcript_hash()[:12]}")

print("models identical:", models[()] == models[(2, 5)])
