"""Train coded secret-shared logistic regression next to plaintext float LR.

Seven parties each hold a slice of a separable synthetic set.  They quantize,
secret-share and Lagrange-encode it, then run 50 gradient steps in which no
party ever sees the model or anyone else's rows.  The observer recovers the
model each round only to print the learning curve.

    python demos/train_and_compare.py
"""

from copml.datasets import make_separable
from copml.protocol import ProtocolConfig, train
from copml.reference import accuracy, cross_entropy, gradient_descent

(X, y), test = make_separable(1000, 10, seed=0, m_test=500)
cfg = ProtocolConfig(n_parties=7, K=2, T=1, l_x=4, l_c=3, iterations=50, seed=0)
res = train(cfg, (X, y), test=test)
print(f"N={cfg.n_parties} K={cfg.K} T={cfg.T} threshold={cfg.threshold} k1={res.k1} k2={res.k2}")

print(f"{'t':>3} {'loss':>7} {'train':>6} {'test':>6}")
for m in res.metrics[::10] + [res.metrics[-1]]:
    print(f"{m.t:>3} {m.loss:7.4f} {m.train_acc:6.3f} {m.test_acc:6.3f}")

w_ref, _ = gradient_descent(X, y, cfg.eta, cfg.iterations)
print(f"float reference: loss {cross_entropy(w_ref, X, y):.4f}, test accuracy {accuracy(w_ref, *test):.3f}")
print(f"bytes sent by all parties per iteration: {res.metrics[-1].bytes}")
