"""Minimal actor-critic with clipped policy-ratio updates.

A two-hidden-layer tanh MLP (32 -> 64 -> 64) with a 3-logit actor head
and a scalar critic head. Gradients are written out analytically (no
autodiff); Adam drives the updates. The training loop is single
threaded so a (seed, config, extractor) triple reproduces the exact
trajectory.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .binio import FormatError, Reader, Writer

__all__ = [
    "PpoConfig",
    "PolicyModel",
    "RolloutBuffer",
    "AdamOptimizer",
    "forward",
    "loss_and_grads",
    "compute_gae",
    "ppo_update",
    "train",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
]

PARAM_NAMES = ("w1", "b1", "w2", "b2", "wa", "ba", "wv", "bv")


@dataclass
class PpoConfig:
    learning_rate: float = 0.00025
    n_steps: int = 128
    batch_size: int = 128
    n_epochs: int = 10
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_range: float = 0.1
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5

    def __post_init__(self):
        if not 0 < self.clip_range < 1:
            raise ValueError("clip_range must be in (0, 1)")
        for name in ("learning_rate", "n_steps", "batch_size", "n_epochs",
                     "gamma", "gae_lambda", "ent_coef"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _orthogonal(rng, rows, cols, gain):
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class PolicyModel:
    """Parameter container; all math lives in module-level functions."""

    def __init__(self, in_dim=32, hidden=64, n_actions=3, seed=0):
        rng = np.random.default_rng(seed)
        self.in_dim = in_dim
        self.hidden = hidden
        self.n_actions = n_actions
        self.params = {
            "w1": _orthogonal(rng, hidden, in_dim, math.sqrt(2)),
            "b1": np.zeros(hidden),
            "w2": _orthogonal(rng, hidden, hidden, math.sqrt(2)),
            "b2": np.zeros(hidden),
            "wa": _orthogonal(rng, n_actions, hidden, 0.01),
            "ba": np.zeros(n_actions),
            "wv": _orthogonal(rng, 1, hidden, 1.0),
            "bv": np.zeros(1),
        }

    def check_finite(self):
        for name, p in self.params.items():
            if not np.all(np.isfinite(p)):
                raise ValueError(f"non-finite parameter {name}")

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[n].ravel() for n in PARAM_NAMES])

    def set_flat_params(self, flat: np.ndarray):
        i = 0
        for n in PARAM_NAMES:
            p = self.params[n]
            self.params[n] = flat[i:i + p.size].reshape(p.shape).copy()
            i += p.size


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: PolicyModel, features):
    """Action distribution and value estimate.

    Accepts one feature vector or a batch; returns (probs, values) plus
    the hidden activations needed for the backward pass.
    """
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite features")
    p = model.params
    h1 = np.tanh(x @ p["w1"].T + p["b1"])
    h2 = np.tanh(h1 @ p["w2"].T + p["b2"])
    logits = h2 @ p["wa"].T + p["ba"]
    values = (h2 @ p["wv"].T + p["bv"])[:, 0]
    probs = _softmax(logits)
    cache = {"x": x, "h1": h1, "h2": h2, "logits": logits, "probs": probs}
    if single:
        return probs[0], float(values[0]), cache
    return probs, values, cache


def loss_and_grads(model: PolicyModel, features, actions, old_log_probs,
                   advantages, returns, config: PpoConfig):
    """Clipped-surrogate loss with value and entropy terms, plus analytic
    gradients for every parameter. Returns (loss, grads, stats)."""
    p = model.params
    probs, values, cache = forward(model, features)
    x, h1, h2 = cache["x"], cache["h1"], cache["h2"]
    b = x.shape[0]
    a = np.asarray(actions, dtype=np.int64)
    adv = np.asarray(advantages, dtype=np.float64)
    ret = np.asarray(returns, dtype=np.float64)
    old_lp = np.asarray(old_log_probs, dtype=np.float64)

    log_probs_all = np.log(np.maximum(probs, 1e-300))
    lp = log_probs_all[np.arange(b), a]
    ratio = np.exp(lp - old_lp)
    clipped = np.clip(ratio, 1 - config.clip_range, 1 + config.clip_range)
    unclipped_term = ratio * adv
    clipped_term = clipped * adv
    pg_loss = -np.minimum(unclipped_term, clipped_term).mean()
    v_err = values - ret
    v_loss = (v_err ** 2).mean()
    entropy = -(probs * log_probs_all).sum(axis=1)
    ent_mean = entropy.mean()
    loss = pg_loss + config.vf_coef * v_loss - config.ent_coef * ent_mean

    # gradient w.r.t. logits: the ratio branch contributes only where the
    # unclipped term attains the min (or clipping does not bind)
    pass_through = (unclipped_term <= clipped_term) | \
        ((ratio >= 1 - config.clip_range) & (ratio <= 1 + config.clip_range))
    g_ratio = np.where(pass_through, -adv * ratio, 0.0) / b
    onehot = np.zeros_like(probs)
    onehot[np.arange(b), a] = 1.0
    d_logits = g_ratio[:, None] * (onehot - probs)
    # entropy term: d(-H)/dz = p * (log p + H)
    d_logits += config.ent_coef * probs * (log_probs_all + entropy[:, None]) / b
    d_values = config.vf_coef * 2.0 * v_err / b

    d_h2 = d_logits @ p["wa"] + d_values[:, None] * p["wv"]
    grads = {
        "wa": d_logits.T @ h2,
        "ba": d_logits.sum(axis=0),
        "wv": (d_values[None, :] @ h2),
        "bv": np.array([d_values.sum()]),
    }
    d_z2 = d_h2 * (1 - h2 ** 2)
    grads["w2"] = d_z2.T @ h1
    grads["b2"] = d_z2.sum(axis=0)
    d_z1 = (d_z2 @ p["w2"]) * (1 - h1 ** 2)
    grads["w1"] = d_z1.T @ x
    grads["b1"] = d_z1.sum(axis=0)

    stats = {"loss": float(loss), "pg_loss": float(pg_loss),
             "v_loss": float(v_loss), "entropy": float(ent_mean),
             "clip_fraction": float(np.mean(np.abs(ratio - 1) > config.clip_range))}
    return float(loss), grads, stats


class AdamOptimizer:
    def __init__(self, model: PolicyModel, lr: float,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(p) for n, p in model.params.items()}
        self.v = {n: np.zeros_like(p) for n, p in model.params.items()}

    def step(self, model: PolicyModel, grads: dict):
        self.t += 1
        bc1 = 1 - self.beta1 ** self.t
        bc2 = 1 - self.beta2 ** self.t
        for n, g in grads.items():
            self.m[n] = self.beta1 * self.m[n] + (1 - self.beta1) * g
            self.v[n] = self.beta2 * self.v[n] + (1 - self.beta2) * g * g
            model.params[n] -= self.lr * (self.m[n] / bc1) / \
                (np.sqrt(self.v[n] / bc2) + self.eps)


def _clip_grad_norm(grads: dict, max_norm: float):
    total = math.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for n in grads:
            grads[n] = grads[n] * scale
    return total


@dataclass
class RolloutBuffer:
    capacity: int
    feature_dim: int
    features: np.ndarray = field(init=False)
    actions: np.ndarray = field(init=False)
    rewards: np.ndarray = field(init=False)
    values: np.ndarray = field(init=False)
    log_probs: np.ndarray = field(init=False)
    episode_starts: np.ndarray = field(init=False)
    pos: int = 0

    def __post_init__(self):
        self.features = np.zeros((self.capacity, self.feature_dim))
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.values = np.zeros(self.capacity)
        self.log_probs = np.zeros(self.capacity)
        self.episode_starts = np.zeros(self.capacity, dtype=bool)

    @property
    def full(self) -> bool:
        return self.pos >= self.capacity

    def add(self, feat, action, reward, value, log_prob, episode_start):
        if self.full:
            raise RuntimeError("rollout buffer is full")
        i = self.pos
        self.features[i] = feat
        self.actions[i] = action
        self.rewards[i] = reward
        self.values[i] = value
        self.log_probs[i] = log_prob
        self.episode_starts[i] = episode_start
        self.pos += 1

    def reset(self):
        self.pos = 0


def compute_gae(buffer: RolloutBuffer, last_value: float, last_done: bool,
                config: PpoConfig):
    """Generalized advantage estimates and returns over a full buffer."""
    n = buffer.pos
    adv = np.zeros(n)
    gae = 0.0
    for t in reversed(range(n)):
        if t == n - 1:
            next_nonterminal = 0.0 if last_done else 1.0
            next_value = last_value
        else:
            next_nonterminal = 0.0 if buffer.episode_starts[t + 1] else 1.0
            next_value = buffer.values[t + 1]
        delta = buffer.rewards[t] + config.gamma * next_value * next_nonterminal \
            - buffer.values[t]
        gae = delta + config.gamma * config.gae_lambda * next_nonterminal * gae
        adv[t] = gae
    returns = adv + buffer.values[:n]
    return adv, returns


def ppo_update(model: PolicyModel, buffer: RolloutBuffer, config: PpoConfig,
               optimizer: AdamOptimizer, rng, last_value=0.0, last_done=True):
    """One update phase: GAE, then n_epochs of minibatch Adam steps on
    the clipped surrogate. Advantages are normalized per minibatch."""
    n = buffer.pos
    adv, returns = compute_gae(buffer, last_value, last_done, config)
    stats = None
    for _ in range(config.n_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            a_batch = adv[idx]
            a_norm = (a_batch - a_batch.mean()) / (a_batch.std() + 1e-8)
            loss, grads, stats = loss_and_grads(
                model, buffer.features[idx], buffer.actions[idx],
                buffer.log_probs[idx], a_norm, returns[idx], config)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss during update: {stats}")
            _clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(model, grads)
    model.check_finite()
    return stats


def _sample_action(probs, rng) -> int:
    return int(rng.choice(len(probs), p=probs))


def train(env, extractor, total_steps, seed=0, config=None, log_path=None):
    """Train a policy on an environment with a fixed feature extractor.

    ``extractor`` maps one observation to a feature vector. Returns
    ``(model, episode_lengths, log_rows)``; each log row is
    (step, episode, length, reward).
    """
    config = config or PpoConfig()
    rng = np.random.default_rng((0xA6E, seed))
    obs = env.reset()
    feat = extractor(obs)
    model = PolicyModel(in_dim=feat.shape[0], seed=seed)
    optimizer = AdamOptimizer(model, config.learning_rate)
    buffer = RolloutBuffer(capacity=config.n_steps, feature_dim=feat.shape[0])

    episode_lengths = []
    log_rows = []
    episode = 0
    ep_start = True
    ep_reward = 0.0
    step = 0
    while step < total_steps:
        probs, value, _ = forward(model, feat)
        action = _sample_action(probs, rng)
        log_prob = math.log(max(probs[action], 1e-300))
        obs, reward, done = env.step(action)
        buffer.add(feat, action, reward, value, log_prob, ep_start)
        ep_reward += reward
        ep_start = False
        step += 1
        if done:
            episode += 1
            episode_lengths.append(env.steps)
            log_rows.append((step, episode, env.steps, ep_reward))
            obs = env.reset()
            ep_reward = 0.0
            ep_start = True
        feat = extractor(obs)
        if buffer.full:
            _, last_value, _ = forward(model, feat)
            ppo_update(model, buffer, config, optimizer, rng,
                       last_value=last_value, last_done=ep_start)
            buffer.reset()
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "episode", "length", "reward"])
            writer.writerows(log_rows)
    return model, episode_lengths, log_rows


def evaluate(policy, env, n_episodes, extractor=None, seed=0):
    """Episode-length statistics of a policy.

    ``policy`` is a PolicyModel (requires ``extractor``) or the string
    ``"random"``. Returns a dict with mean/min/max episode length.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    rng = np.random.default_rng((0xE7A1, seed))
    lengths = []
    for _ in range(n_episodes):
        obs = env.reset()
        done = False
        while not done:
            if policy == "random":
                action = int(rng.integers(0, 3))
            else:
                probs, _, _ = forward(policy, extractor(obs))
                action = _sample_action(probs, rng)
            obs, _, done = env.step(action)
        lengths.append(env.steps)
    lengths = np.array(lengths)
    return {"mean": float(lengths.mean()), "min": int(lengths.min()),
            "max": int(lengths.max()), "lengths": lengths}


# ---------------------------------------------------------------------------
# checkpoints

CKPT_MAGIC = b"PPOCKPT\x00"
CKPT_VERSION = 1


def save_checkpoint(model: PolicyModel, path):
    with open(path, "wb") as fh:
        w = Writer(fh, CKPT_MAGIC, CKPT_VERSION)
        w.u64(model.in_dim)
        w.u64(model.hidden)
        w.u64(model.n_actions)
        for n in PARAM_NAMES:
            w.array(model.params[n])


def load_checkpoint(path) -> PolicyModel:
    with open(path, "rb") as fh:
        r = Reader(fh, CKPT_MAGIC, CKPT_VERSION)
        in_dim = r.u64()
        hidden = r.u64()
        n_actions = r.u64()
        model = PolicyModel(in_dim=in_dim, hidden=hidden, n_actions=n_actions)
        for n in PARAM_NAMES:
            model.params[n] = r.array()
        if fh.read(1) != b"":
            raise FormatError("trailing bytes after checkpoint")
    model.check_finite()
    return model
