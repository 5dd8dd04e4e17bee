from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, st):
    """Apply one bias-corrected Adam update to ``params`` in place.

    ``params`` and ``grads`` are dicts of equally shaped arrays. Moments are
    created lazily in ``st`` on first use.
    """
    st.t += 1
    c1 = 1.0 - st.beta1 ** st.t
    c2 = 1.0 - st.beta2 ** st.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        if name not in st.m:
            st.m[name] = np.zeros_like(p)
            st.v[name] = np.zeros_like(p)
        m, v = st.m[name], st.v[name]
        m *= st.beta1
        m += (1 - st.beta1) * g
        v *= st.beta2
        v += (1 - st.beta2) * g * g
        p -= (st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)).astype(p.dtype)
    return params


class Adam:
    def __init__(self, params, lr=1e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads):
        return adam_step(self.params, grads, self.state)
