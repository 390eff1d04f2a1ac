"""Independent reference implementations used only by the tests.

Written with plain Python floats and loops, sharing no code with the
package, so they can check the vectorised paths.
"""

import math


def matmul_loops(a, b):
    n, k, m = len(a), len(b), len(b[0])
    return [[sum(a[i][p] * b[p][j] for p in range(k)) for j in range(m)] for i in range(n)]


def _sgn(x):
    return 1.0 if x > 0 else (-1.0 if x < 0 else 0.0)


class ScalarSage:
    """Step-by-step SAGE on a V x d list-of-lists parameter (2-D branch)."""

    def __init__(self, V, d, beta1=0.9, beta2=0.99, w=0.0, eps=1e-8):
        self.V, self.d = V, d
        self.b1, self.b2, self.w, self.eps = beta1, beta2, w, eps
        self.M = [[0.0] * d for _ in range(V)]
        self.S = [0.0] * d
        self.t = 0

    def step(self, theta, g, eta):
        V, d = self.V, self.d
        self.t += 1
        theta = [[theta[i][j] * (1 - eta * self.w) for j in range(d)] for i in range(V)]
        s = [sum(abs(g[i][j]) for i in range(V)) / V for j in range(d)]
        self.S = [self.b2 * self.S[j] + (1 - self.b2) * s[j] for j in range(d)]
        S_hat = [self.S[j] / (1 - self.b2**self.t) for j in range(d)]
        sigma = math.sqrt(sum(x * x for x in S_hat) / d)
        gamma = math.sqrt(sum(x * x for x in s) / d)
        H = []
        for j in range(d):
            d_ema = sigma / (S_hat[j] + self.eps)
            d_inst = gamma / (s[j] + self.eps)
            H.append(min(d_ema, d_inst, 1.0))
        out = [[0.0] * d for _ in range(V)]
        for i in range(V):
            for j in range(d):
                c = _sgn(self.b1 * self.M[i][j] + (1 - self.b1) * g[i][j])
                out[i][j] = theta[i][j] - eta * c * H[j]
                self.M[i][j] = self.b2 * self.M[i][j] + (1 - self.b2) * g[i][j]
        return out, H


def adamw_scalar(grads, etas, theta0=0.0, beta1=0.9, beta2=0.99, w=0.01, eps=1e-8):
    """Textbook decoupled-decay AdamW on one scalar; returns the trajectory."""
    m = v = 0.0
    theta = theta0
    out = []
    for t, (g, eta) in enumerate(zip(grads, etas), start=1):
        theta = theta * (1 - eta * w)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta = theta - eta * m_hat / (math.sqrt(v_hat) + eps)
        out.append(theta)
    return out


def loss_loop(E, W, b, contexts, targets):
    """Per-example cross-entropy of the toy model, one example at a time."""
    V, d = len(E), len(E[0])
    total = 0.0
    for x, y in zip(contexts, targets):
        h = E[x]
        z = h if W is None else [sum(h[p] * W[p][j] for p in range(d)) for j in range(d)]
        logits = [sum(E[k][j] * z[j] for j in range(d)) + (0.0 if b is None else b[k]) for k in range(V)]
        m = max(logits)
        lse = m + math.log(sum(math.exp(l - m) for l in logits))
        total += lse - logits[y]
    return total / len(contexts)
