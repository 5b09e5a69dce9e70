"""Policy/value network with hand-written gradients.

The architecture is fixed and small — two 64-unit tanh layers feeding a
3-logit policy head and a scalar value head — so exact analytic
backpropagation is straightforward and can be validated against finite
differences to tight tolerance. Parameters live in one flat float64 vector;
the weight matrices are reshaped views into it, so in-place updates of the
flat vector (the optimizer's job) are immediately visible to the forward
pass.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HIDDEN = 64
NUM_ACTIONS = 3


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


class PolicyValueNet:
    def __init__(self, n_inputs: int, hidden: int = HIDDEN,
                 n_actions: int = NUM_ACTIONS,
                 rng: np.random.Generator | None = None,
                 params: np.ndarray | None = None):
        self.n_inputs = int(n_inputs)
        self.hidden = int(hidden)
        self.n_actions = int(n_actions)

        shapes = [
            ("w1", (hidden, n_inputs)), ("b1", (hidden,)),
            ("w2", (hidden, hidden)), ("b2", (hidden,)),
            ("wp", (n_actions, hidden)), ("bp", (n_actions,)),
            ("wv", (1, hidden)), ("bv", (1,)),
        ]
        self.slices: dict[str, tuple[slice, tuple]] = {}
        offset = 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            self.slices[name] = (slice(offset, offset + size), shape)
            offset += size
        self.n_params = offset

        if params is not None:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (self.n_params,):
                raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
            self.params = params.copy()
        else:
            self.params = np.zeros(self.n_params, dtype=np.float64)
            if rng is not None:
                self._init_weights(rng)
        self._bind_views()

    def _bind_views(self):
        for name, (sl, shape) in self.slices.items():
            setattr(self, name, self.params[sl].reshape(shape))

    def _init_weights(self, rng: np.random.Generator):
        # Xavier-scaled trunk, small heads (keeps the initial policy near
        # uniform and the initial values near zero).
        p = self.params
        for name, scale_fan in (("w1", self.n_inputs), ("w2", self.hidden)):
            sl, shape = self.slices[name]
            p[sl] = rng.standard_normal(sl.stop - sl.start) / np.sqrt(scale_fan)
        for name in ("wp", "wv"):
            sl, _ = self.slices[name]
            p[sl] = rng.standard_normal(sl.stop - sl.start) * 0.01

    def set_params(self, flat: np.ndarray):
        self.params[:] = np.asarray(flat, dtype=np.float64)

    def clone(self) -> "PolicyValueNet":
        return PolicyValueNet(self.n_inputs, self.hidden, self.n_actions,
                              params=self.params)

    # ---------------------------------------------------------------- forward
    def forward_batch(self, x: np.ndarray):
        """Returns (logits (B, A), values (B,), cache for backward)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        h1 = np.tanh(x @ self.w1.T + self.b1)
        h2 = np.tanh(h1 @ self.w2.T + self.b2)
        logits = h2 @ self.wp.T + self.bp
        values = (h2 @ self.wv.T + self.bv)[:, 0]
        return logits, values, (x, h1, h2)

    def forward(self, obs: np.ndarray):
        """Single-observation forward: (logits (A,), value scalar)."""
        logits, values, _ = self.forward_batch(obs)
        return logits[0], float(values[0])

    # --------------------------------------------------------------- backward
    def backward_from_outputs(self, cache, dlogits: np.ndarray,
                              dvalues: np.ndarray) -> np.ndarray:
        """Exact parameter gradient given the loss gradients at both heads.

        cache comes from forward_batch on the same inputs. Returns a flat
        vector in the same layout as self.params.
        """
        x, h1, h2 = cache
        grad = np.zeros_like(self.params)

        def put(name, value):
            sl, shape = self.slices[name]
            grad[sl] = value.reshape(-1)

        dvalues = np.asarray(dvalues, dtype=np.float64).reshape(-1, 1)
        put("wp", dlogits.T @ h2)
        put("bp", dlogits.sum(axis=0))
        put("wv", dvalues.T @ h2)
        put("bv", dvalues.sum(axis=0))

        dh2 = dlogits @ self.wp + dvalues @ self.wv
        dz2 = dh2 * (1.0 - h2 * h2)
        put("w2", dz2.T @ h1)
        put("b2", dz2.sum(axis=0))

        dh1 = dz2 @ self.w2
        dz1 = dh1 * (1.0 - h1 * h1)
        put("w1", dz1.T @ x)
        put("b1", dz1.sum(axis=0))
        return grad

    # ------------------------------------------------------------------ acting
    def action_probabilities(self, obs: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(obs)
        return softmax(logits)

    def sample_action(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample an action; returns (action, logprob, value)."""
        logits, value = self.forward(obs)
        logp = log_softmax(logits)
        probs = np.exp(logp)
        action = int(np.searchsorted(np.cumsum(probs), rng.random()))
        action = min(action, self.n_actions - 1)
        return action, float(logp[action]), value

    def greedy_action(self, obs: np.ndarray) -> int:
        logits, _ = self.forward(obs)
        return int(np.argmax(logits))


class AdamOptimizer:
    """Adam with bias correction; updates the parameter vector in place
    (required: the network's weight matrices are views into it)."""

    def __init__(self, n_params: int, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


CHECKPOINT_VERSION = 1


def save_checkpoint(path, net: PolicyValueNet, train_config: dict | None = None):
    """Versioned JSON checkpoint: architecture + exact float64 parameters."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "arch": {
            "n_inputs": net.n_inputs,
            "hidden": net.hidden,
            "n_actions": net.n_actions,
        },
        "dtype": "float64",
        "params_b64": base64.b64encode(net.params.tobytes()).decode("ascii"),
        "train_config": train_config or {},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_checkpoint(path) -> tuple[PolicyValueNet, dict]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
    arch = data["arch"]
    params = np.frombuffer(base64.b64decode(data["params_b64"]), dtype=np.float64)
    net = PolicyValueNet(arch["n_inputs"], arch["hidden"], arch["n_actions"],
                         params=params)
    return net, data.get("train_config", {})
