"""Target-attention membership classifier with hand-written backpropagation.

A synthetic dataset is reduced to its ``X`` unique records closest to the
target, each row carrying its encoding, multiplicity and distance to the
target. A shared MLP embeds the rows and the target; the target embedding
produces a query that attends over the rows, and the attention-weighted sum of
row values feeds a second MLP that outputs a membership logit.

Everything runs in float64 numpy. ``gradient_check`` compares the analytic
gradients against central finite differences.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Schema
from .encoding import Metric, NormalizationStats, encode_rows, pairwise_distances
from .errors import DimensionMismatch, EmptySynthetic, SingleClassTraining
from .seeding import as_seed_sequence

PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wq", "Wk", "Wv", "W3", "b3", "W4", "b4")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 20
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout: float = 0.15
    validation_fraction: float = 0.10
    top_x: int = 100
    emb_hidden: int = 20
    emb_dim: int = 20
    att_dim: int = 15
    pred_hidden: int = 10
    attention_logits: str = "keys"  # or "values"

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.attention_logits not in ("keys", "values"):
            raise ValueError("attention_logits must be 'keys' or 'values'")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class PreprocessedSet:
    rows: np.ndarray  # (n_rows, F') encoded features | multiplicity | distance
    target_row: np.ndarray  # (F',)

    @property
    def distances(self) -> np.ndarray:
        return self.rows[:, -1]

    @property
    def multiplicities(self) -> np.ndarray:
        return self.rows[:, -2]


def preprocess_topx(
    synthetic: Dataset, target, X: int, schema: Schema, stats: NormalizationStats
) -> PreprocessedSet:
    """Collapse duplicates, rank unique records by distance to the target, keep ``X``."""
    if X < 1:
        raise ValueError(f"X must be >= 1, got {X}")
    if len(synthetic) == 0:
        raise EmptySynthetic("synthetic dataset has no rows")
    t = target if isinstance(target, np.ndarray) else schema.row_from_record(target)
    uniq, first, counts = np.unique(synthetic.data, axis=0, return_index=True, return_counts=True)
    by_first = np.argsort(first, kind="stable")
    uniq, counts = uniq[by_first], counts[by_first]
    enc = encode_rows(uniq, schema, stats)
    tenc = encode_rows(t[None, :], schema, stats)
    dist = pairwise_distances(enc, tenc, Metric("cosine"))[:, 0]
    keep = np.argsort(dist, kind="stable")[:X]
    feats = np.hstack([enc.cat, enc.cont])[keep]
    rows = np.column_stack([feats, counts[keep].astype(np.float64), dist[keep]])
    target_row = np.concatenate([tenc.cat[0], tenc.cont[0], [1.0, 0.0]])
    return PreprocessedSet(rows, target_row)


def stack_sets(sets, X: int):
    """Zero-pad to ``X`` rows; returns (rows (B, X, F'), mask (B, X), targets (B, F'))."""
    width = sets[0].rows.shape[1]
    R = np.zeros((len(sets), X, width))
    mask = np.zeros((len(sets), X), dtype=bool)
    T = np.zeros((len(sets), width))
    for b, s in enumerate(sets):
        k = min(len(s.rows), X)
        R[b, :k] = s.rows[:k]
        mask[b, :k] = True
        T[b] = s.target_row
    return R, mask, T


@dataclass(eq=False)
class AttentionModelParams:
    weights: dict
    dropout: float = 0.15
    activation: str = "relu"  # "identity" gives the linear variant used in tests
    attention_logits: str = "keys"
    dims: dict = field(default_factory=dict)

    @classmethod
    def init(cls, in_dim: int, config: TrainConfig = TrainConfig(), seed=None, activation="relu"):
        rng = np.random.default_rng(seed)
        shapes = {
            "W1": (in_dim, config.emb_hidden),
            "b1": (config.emb_hidden,),
            "W2": (config.emb_hidden, config.emb_dim),
            "b2": (config.emb_dim,),
            "Wq": (config.emb_dim, config.att_dim),
            "Wk": (config.emb_dim, config.att_dim),
            "Wv": (config.emb_dim, config.att_dim),
            "W3": (config.att_dim, config.pred_hidden),
            "b3": (config.pred_hidden,),
            "W4": (config.pred_hidden, 1),
            "b4": (1,),
        }
        weights = {}
        for name, shape in shapes.items():
            if len(shape) == 1:
                weights[name] = np.zeros(shape)
            else:
                bound = np.sqrt(6.0 / (shape[0] + shape[1]))
                weights[name] = rng.uniform(-bound, bound, size=shape)
        dims = {
            "in": in_dim,
            "emb_hidden": config.emb_hidden,
            "emb": config.emb_dim,
            "att": config.att_dim,
            "pred_hidden": config.pred_hidden,
        }
        return cls(weights, config.dropout, activation, config.attention_logits, dims)

    def copy(self) -> "AttentionModelParams":
        return copy.deepcopy(self)

    def save(self, path) -> None:
        meta = np.array([self.dropout])
        np.savez(
            path,
            __meta__=meta,
            __activation__=np.array(self.activation),
            __logits__=np.array(self.attention_logits),
            **self.weights,
        )

    @classmethod
    def load(cls, path) -> "AttentionModelParams":
        with np.load(path) as z:
            weights = {k: z[k].copy() for k in PARAM_NAMES}
            dropout = float(z["__meta__"][0])
            activation = str(z["__activation__"])
            logits = str(z["__logits__"])
        dims = {
            "in": weights["W1"].shape[0],
            "emb_hidden": weights["W1"].shape[1],
            "emb": weights["W2"].shape[1],
            "att": weights["Wq"].shape[1],
            "pred_hidden": weights["W3"].shape[1],
        }
        return cls(weights, dropout, activation, logits, dims)


def _act(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else z


def _act_grad(z, kind):
    return (z > 0).astype(z.dtype) if kind == "relu" else np.ones_like(z)


def _dropout_mask(shape, p, rng):
    if rng is None or p == 0.0:
        return None
    return (rng.random(shape) >= p) / (1.0 - p)


def forward(params: AttentionModelParams, R, mask, T, train_mode: bool = False, rng=None):
    """Membership logits for a batch; returns (h (B,), cache).

    ``R`` is (B, X, F'), ``mask`` (B, X) marks real rows and ``T`` (B, F')
    holds the preprocessed target rows. Dropout is applied only when
    ``train_mode`` is set and an ``rng`` is supplied.
    """
    w = params.weights
    R = np.asarray(R, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if R.ndim == 2:
        R, T = R[None], T[None]
        mask = np.asarray(mask, dtype=bool)[None]
    if R.shape[-1] != w["W1"].shape[0] or T.shape[-1] != w["W1"].shape[0]:
        raise DimensionMismatch(f"input width {R.shape[-1]} does not match {w['W1'].shape[0]}")
    if R.shape[:2] != mask.shape or T.shape[0] != R.shape[0]:
        raise DimensionMismatch("rows, mask and targets disagree on batch/row dimensions")
    act = params.activation
    p = params.dropout if train_mode else 0.0
    drop_rng = rng if train_mode else None

    def embed(Z):
        z1 = Z @ w["W1"] + w["b1"]
        a1 = _act(z1, act)
        m1 = _dropout_mask(a1.shape, p, drop_rng)
        d1 = a1 * m1 if m1 is not None else a1
        return d1 @ w["W2"] + w["b2"], (Z, z1, m1, d1)

    E, emb_cache = embed(R)
    te, temb_cache = embed(T)
    q = te @ w["Wq"]
    K = E @ w["Wk"]
    V = E @ w["Wv"]
    keys = K if params.attention_logits == "keys" else V
    s = np.einsum("bf,bxf->bx", q, keys)
    s = np.where(mask, s, -np.inf)
    s = s - s.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(s), 0.0)
    a = e / e.sum(axis=1, keepdims=True)
    D = np.einsum("bx,bxf->bf", a, V)
    z3 = D @ w["W3"] + w["b3"]
    a3 = _act(z3, act)
    m3 = _dropout_mask(a3.shape, p, drop_rng)
    d3 = a3 * m3 if m3 is not None else a3
    h = (d3 @ w["W4"] + w["b4"])[:, 0]
    cache = dict(emb=emb_cache, temb=temb_cache, te=te, E=E, q=q, K=K, V=V, a=a, D=D, z3=z3, m3=m3, d3=d3)
    return h, cache


def attention_weights(params, R, mask, T) -> np.ndarray:
    return forward(params, R, mask, T)[1]["a"]


def sigmoid(h):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(h, dtype=np.float64)))


def bce_with_logits(h, y) -> float:
    h = np.asarray(h, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, h) - y * h))


def backward(params: AttentionModelParams, cache, h, y) -> dict:
    """Gradients of the mean binary cross-entropy with respect to every weight."""
    w = params.weights
    act = params.activation
    B = len(h)
    g = {}
    dh = (sigmoid(h) - y) / B
    d3 = cache["d3"]
    g["W4"] = d3.T @ dh[:, None]
    g["b4"] = np.array([dh.sum()])
    dd3 = dh[:, None] * w["W4"][:, 0][None, :]
    da3 = dd3 * cache["m3"] if cache["m3"] is not None else dd3
    dz3 = da3 * _act_grad(cache["z3"], act)
    D, a, V, K, q = cache["D"], cache["a"], cache["V"], cache["K"], cache["q"]
    g["W3"] = D.T @ dz3
    g["b3"] = dz3.sum(axis=0)
    dD = dz3 @ w["W3"].T
    dV = a[:, :, None] * dD[:, None, :]
    da = np.einsum("bf,bxf->bx", dD, V)
    ds = a * (da - (a * da).sum(axis=1, keepdims=True))
    if params.attention_logits == "keys":
        dq = np.einsum("bx,bxf->bf", ds, K)
        dK = ds[:, :, None] * q[:, None, :]
    else:
        dq = np.einsum("bx,bxf->bf", ds, V)
        dK = np.zeros_like(K)
        dV = dV + ds[:, :, None] * q[:, None, :]
    te, E = cache["te"], cache["E"]
    g["Wq"] = te.T @ dq
    dte = dq @ w["Wq"].T
    g["Wk"] = np.einsum("bxe,bxa->ea", E, dK)
    g["Wv"] = np.einsum("bxe,bxa->ea", E, dV)
    dE = dK @ w["Wk"].T + dV @ w["Wv"].T
    for name in ("W1", "b1", "W2", "b2"):
        g[name] = np.zeros_like(w[name])
    for de, (Z, z1, m1, d1) in ((dE, cache["emb"]), (dte, cache["temb"])):
        Zf = Z.reshape(-1, Z.shape[-1])
        def_ = de.reshape(-1, de.shape[-1])
        d1f = d1.reshape(-1, d1.shape[-1])
        g["W2"] += d1f.T @ def_
        g["b2"] += def_.sum(axis=0)
        dd1 = def_ @ w["W2"].T
        if m1 is not None:
            dd1 = dd1 * m1.reshape(dd1.shape)
        dz1 = dd1 * _act_grad(z1.reshape(dd1.shape), act)
        g["W1"] += Zf.T @ dz1
        g["b1"] += dz1.sum(axis=0)
    return g


def loss_and_grads(params, R, mask, T, y, train_mode=False, rng=None):
    h, cache = forward(params, R, mask, T, train_mode, rng)
    return bce_with_logits(h, y), backward(params, cache, h, np.asarray(y, dtype=np.float64))


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_param: dict
    unused: list  # parameters whose analytic and numeric gradients are both zero


def gradient_check(params: AttentionModelParams, example, epsilon_fd: float = 1e-5) -> GradCheckResult:
    """Max relative error between analytic and central-difference gradients (dropout off)."""
    R, mask, T, y = example
    y = np.asarray(y, dtype=np.float64)
    _, analytic = loss_and_grads(params, R, mask, T, y)
    per_param, unused = {}, []
    for name in PARAM_NAMES:
        W = params.weights[name]
        numeric = np.zeros_like(W)
        for i in np.ndindex(W.shape):
            old = W[i]
            W[i] = old + epsilon_fd
            up = bce_with_logits(forward(params, R, mask, T)[0], y)
            W[i] = old - epsilon_fd
            down = bce_with_logits(forward(params, R, mask, T)[0], y)
            W[i] = old
            numeric[i] = (up - down) / (2.0 * epsilon_fd)
        ga = analytic[name]
        denom = np.linalg.norm(ga) + np.linalg.norm(numeric)
        if denom == 0.0 or (np.abs(ga).max() == 0.0 and np.abs(numeric).max() < 1e-12):
            unused.append(name)
            per_param[name] = 0.0 if denom == 0.0 else float(np.linalg.norm(numeric))
        else:
            per_param[name] = float(np.linalg.norm(ga - numeric) / denom)
    return GradCheckResult(max(per_param.values()), per_param, unused)


class Adamax:
    def __init__(self, params: AttentionModelParams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.weights.items()}
        self.u = {k: np.zeros_like(v) for k, v in params.weights.items()}
        self.t = 0

    def step(self, params: AttentionModelParams, grads: dict) -> None:
        self.t += 1
        step = self.lr / (1.0 - self.beta1**self.t)
        for k, gk in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gk
            self.u[k] = np.maximum(self.beta2 * self.u[k], np.abs(gk) + self.eps)
            params.weights[k] -= step * self.m[k] / self.u[k]


def fit_attention(R, mask, T, y, config: TrainConfig = TrainConfig(), seed=None, activation="relu"):
    """Mini-batch Adamax on BCE; returns the snapshot with the lowest validation loss."""
    y = np.asarray(y, dtype=np.float64)
    if (y == 1).sum() < 2 or (y == 0).sum() < 2:
        raise SingleClassTraining("need at least two worlds of each class")
    ss_init, ss_split, ss_train = as_seed_sequence(seed).spawn(3)
    params = AttentionModelParams.init(R.shape[-1], config, ss_init, activation)
    rng = np.random.default_rng(ss_train)
    perm = np.random.default_rng(ss_split).permutation(len(y))
    n_val = max(1, int(round(config.validation_fraction * len(y))))
    val, tr = perm[:n_val], perm[n_val:]
    opt = Adamax(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    best, best_loss = params.copy(), np.inf
    for _ in range(config.epochs):
        order = tr[rng.permutation(len(tr))]
        for start in range(0, len(order), config.batch_size):
            b = order[start : start + config.batch_size]
            _, grads = loss_and_grads(params, R[b], mask[b], T[b], y[b], train_mode=True, rng=rng)
            opt.step(params, grads)
        val_loss = bce_with_logits(forward(params, R[val], mask[val], T[val])[0], y[val])
        if val_loss < best_loss:
            best_loss, best = val_loss, params.copy()
    return best


def predict_membership(params: AttentionModelParams, R, mask, T) -> np.ndarray:
    return sigmoid(forward(params, R, mask, T)[0])


def train(worlds, target, schema: Schema, stats: NormalizationStats, config: TrainConfig = TrainConfig(), seed=None):
    """Train on labelled shadow worlds (objects with ``synthetic`` and ``label``)."""
    sets = [preprocess_topx(w.synthetic, target, config.top_x, schema, stats) for w in worlds]
    R, mask, T = stack_sets(sets, config.top_x)
    y = np.array([w.label for w in worlds], dtype=np.float64)
    return fit_attention(R, mask, T, y, config, seed)


def score_worlds(params, worlds, target, schema, stats, top_x: int) -> np.ndarray:
    sets = [preprocess_topx(w.synthetic, target, top_x, schema, stats) for w in worlds]
    R, mask, T = stack_sets(sets, top_x)
    return predict_membership(params, R, mask, T)
