"""Trainable transformation over frozen embeddings.

A two-layer fully connected network (linear, tanh, linear) trained so the
cosine of two transformed utterance embeddings regresses onto the code
similarity of their exemplars. Gradients are derived by hand and validated
against finite differences in the test suite; all math is float64 so runs
are bitwise reproducible for a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .artifacts import FORMAT_VERSION, atomic_write_text, canonical_json, sha256_text
from .errors import DataError, TrainingError

DEGENERATE_NORM = 1e-12
IDENTITY_DIGEST = "identity"
LOSS_KINDS = ("squared", "absolute")


@dataclass
class TransformParams:
    """Weights of the transformation: w1 (hidden, input), w2 (output, hidden)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        h, d = self.w1.shape
        out, h2 = self.w2.shape
        if self.b1.shape != (h,) or h2 != h or self.b2.shape != (out,):
            raise DataError(
                f"layer shapes do not chain: w1 {self.w1.shape}, b1 {self.b1.shape}, "
                f"w2 {self.w2.shape}, b2 {self.b2.shape}"
            )
        for arr in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(arr)):
                raise DataError("transform parameters must be finite")

    @property
    def input_dim(self) -> int:
        return int(self.w1.shape[1])

    @property
    def hidden_dim(self) -> int:
        return int(self.w1.shape[0])

    @property
    def output_dim(self) -> int:
        return int(self.w2.shape[0])

    def copy(self) -> "TransformParams":
        return TransformParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def _layers_payload(self) -> dict:
        return {
            "dims": {
                "input": self.input_dim,
                "hidden": self.hidden_dim,
                "output": self.output_dim,
            },
            "activation": "tanh",
            "layers": [
                {"w": [[float(x) for x in row] for row in self.w1],
                 "b": [float(x) for x in self.b1]},
                {"w": [[float(x) for x in row] for row in self.w2],
                 "b": [float(x) for x in self.b2]},
            ],
        }

    def digest(self) -> str:
        return sha256_text(canonical_json(self._layers_payload()))

    def save(self, path, train_config: dict | None = None, corpus_digest: str = "",
             provider_tag: str = "", probe_accuracy: float | None = None) -> None:
        payload = self._layers_payload()
        payload.update(
            {
                "kind": "transform-model",
                "format_version": FORMAT_VERSION,
                "train_config": train_config or {},
                "corpus_digest": corpus_digest,
                "provider_tag": provider_tag,
                "probe_accuracy": probe_accuracy,
                "params_digest": self.digest(),
            }
        )
        atomic_write_text(path, canonical_json(payload) + "\n")

    @classmethod
    def load(cls, path) -> tuple["TransformParams", dict]:
        """(params, metadata) from a model file."""
        with open(path, encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except ValueError as exc:
                raise DataError(f"{path}: not a valid model file ({exc})") from exc
        if payload.get("kind") != "transform-model":
            raise DataError(f"{path}: expected a transform-model file, got {payload.get('kind')!r}")
        if payload.get("activation") != "tanh":
            raise DataError(f"{path}: unsupported activation {payload.get('activation')!r}")
        try:
            layers = payload["layers"]
            params = cls(
                w1=np.asarray(layers[0]["w"], dtype=np.float64),
                b1=np.asarray(layers[0]["b"], dtype=np.float64),
                w2=np.asarray(layers[1]["w"], dtype=np.float64),
                b2=np.asarray(layers[1]["b"], dtype=np.float64),
            )
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: malformed layer payload ({exc})") from exc
        return params, payload


@dataclass
class TrainConfig:
    hidden_dim: int = 512
    output_dim: int = 512
    dropout_rate: float = 0.3
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    early_stop_patience: int = 5
    validation_fraction: float = 0.1
    probe_pairs_per_anchor: int = 64
    loss: str = "squared"

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DataError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.batch_size < 1:
            raise DataError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise DataError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise DataError(f"validation_fraction must be in [0, 1), got {self.validation_fraction}")
        if self.loss not in LOSS_KINDS:
            raise DataError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    probe_accuracies: list = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    best_probe_accuracy: float | None = None
    params_digest: str = ""
    probe_size: int = 0
    loss_based_early_stop: bool = False
    degenerate_pairs: int = 0


def init_params(input_dim: int, hidden_dim: int, output_dim: int, rng) -> TransformParams:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out)), biases zero."""
    lim1 = np.sqrt(6.0 / (input_dim + hidden_dim))
    lim2 = np.sqrt(6.0 / (hidden_dim + output_dim))
    return TransformParams(
        w1=rng.uniform(-lim1, lim1, size=(hidden_dim, input_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.uniform(-lim2, lim2, size=(output_dim, hidden_dim)),
        b2=np.zeros(output_dim),
    )


def _apply_dropout(x: np.ndarray, mask: np.ndarray | None, rate: float) -> np.ndarray:
    """Inverted input dropout: zero masked coordinates, scale survivors."""
    if mask is None:
        return x
    if rate >= 1.0:
        raise DataError("dropout rate must be < 1")
    return x * mask / (1.0 - rate)


def forward(params: TransformParams, v: np.ndarray, dropout_mask: np.ndarray | None = None,
            dropout_rate: float = 0.0) -> np.ndarray:
    """linear -> tanh -> linear; the optional mask applies to the input."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (params.input_dim,):
        raise DataError(f"expected input of shape ({params.input_dim},), got {v.shape}")
    x = _apply_dropout(v, dropout_mask, dropout_rate)
    hidden = np.tanh(params.w1 @ x + params.b1)
    return params.w2 @ hidden + params.b2


def forward_batch(params: TransformParams, rows: np.ndarray) -> np.ndarray:
    """Inference forward over row-stacked inputs, no dropout."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != params.input_dim:
        raise DataError(f"expected rows of width {params.input_dim}, got {rows.shape}")
    hidden = np.tanh(rows @ params.w1.T + params.b1)
    return hidden @ params.w2.T + params.b2


def _pair_forward(params, x1, x2):
    """Shared forward pass bookkeeping for loss and gradient."""
    z1 = params.w1 @ x1 + params.b1
    a1 = np.tanh(z1)
    y1 = params.w2 @ a1 + params.b2
    z2 = params.w1 @ x2 + params.b1
    a2 = np.tanh(z2)
    y2 = params.w2 @ a2 + params.b2
    n1 = float(np.linalg.norm(y1))
    n2 = float(np.linalg.norm(y2))
    degenerate = n1 < DEGENERATE_NORM or n2 < DEGENERATE_NORM
    cos = 0.0 if degenerate else float(np.dot(y1, y2) / (n1 * n2))
    return x1, x2, a1, a2, y1, y2, n1, n2, cos, degenerate


def pair_loss(params: TransformParams, v1, v2, target: float,
              loss: str = "squared") -> float:
    """(cos(t(v1), t(v2)) - target) ** 2 (or absolute difference).

    A transformed vector with norm below 1e-12 contributes cosine 0; the
    training loop counts such pairs separately as a diagnostic.
    """
    if not 0.0 <= target <= 1.0:
        raise DataError(f"target must be in [0, 1], got {target}")
    x1 = np.asarray(v1, dtype=np.float64)
    x2 = np.asarray(v2, dtype=np.float64)
    *_, cos, _degenerate = _pair_forward(params, x1, x2)
    diff = cos - target
    return diff * diff if loss == "squared" else abs(diff)


def pair_gradient(params: TransformParams, v1, v2, target: float,
                  dropout_masks: tuple | None = None, dropout_rate: float = 0.0,
                  loss: str = "squared"):
    """(loss, gradients) for one pair; gradients is a TransformParams-shaped
    dict with keys w1, b1, w2, b2, branch contributions summed."""
    if not 0.0 <= target <= 1.0:
        raise DataError(f"target must be in [0, 1], got {target}")
    m1, m2 = dropout_masks if dropout_masks is not None else (None, None)
    x1 = _apply_dropout(np.asarray(v1, dtype=np.float64), m1, dropout_rate)
    x2 = _apply_dropout(np.asarray(v2, dtype=np.float64), m2, dropout_rate)
    x1, x2, a1, a2, y1, y2, n1, n2, cos, degenerate = _pair_forward(params, x1, x2)
    diff = cos - target
    loss_value = diff * diff if loss == "squared" else abs(diff)
    grads = {
        "w1": np.zeros_like(params.w1),
        "b1": np.zeros_like(params.b1),
        "w2": np.zeros_like(params.w2),
        "b2": np.zeros_like(params.b2),
    }
    if degenerate:
        return loss_value, grads
    dcos = 2.0 * diff if loss == "squared" else float(np.sign(diff))
    u1 = y1 / n1
    u2 = y2 / n2
    g_y1 = dcos * (u2 - cos * u1) / n1
    g_y2 = dcos * (u1 - cos * u2) / n2
    for g_y, a, x in ((g_y1, a1, x1), (g_y2, a2, x2)):
        grads["w2"] += np.outer(g_y, a)
        grads["b2"] += g_y
        g_z = (params.w2.T @ g_y) * (1.0 - a * a)
        grads["w1"] += np.outer(g_z, x)
        grads["b1"] += g_z
    return loss_value, grads


def _batch_step(params, x1, x2, targets, loss_kind):
    """Mean loss and mean gradients over a mini-batch (vectorized, matches
    the per-pair path bitwise up to summation order)."""
    b = x1.shape[0]
    a1 = np.tanh(x1 @ params.w1.T + params.b1)
    y1 = a1 @ params.w2.T + params.b2
    a2 = np.tanh(x2 @ params.w1.T + params.b1)
    y2 = a2 @ params.w2.T + params.b2
    n1 = np.linalg.norm(y1, axis=1)
    n2 = np.linalg.norm(y2, axis=1)
    degenerate = (n1 < DEGENERATE_NORM) | (n2 < DEGENERATE_NORM)
    safe1 = np.where(degenerate, 1.0, n1)
    safe2 = np.where(degenerate, 1.0, n2)
    cos = np.where(degenerate, 0.0, np.sum(y1 * y2, axis=1) / (safe1 * safe2))
    diff = cos - targets
    losses = diff * diff if loss_kind == "squared" else np.abs(diff)
    mean_loss = float(np.mean(losses))
    dcos = (2.0 * diff if loss_kind == "squared" else np.sign(diff)) / b
    dcos = np.where(degenerate, 0.0, dcos)
    u1 = y1 / safe1[:, None]
    u2 = y2 / safe2[:, None]
    g_y1 = dcos[:, None] * (u2 - cos[:, None] * u1) / safe1[:, None]
    g_y2 = dcos[:, None] * (u1 - cos[:, None] * u2) / safe2[:, None]
    grads = {
        "w2": g_y1.T @ a1 + g_y2.T @ a2,
        "b2": g_y1.sum(axis=0) + g_y2.sum(axis=0),
    }
    g_z1 = (g_y1 @ params.w2) * (1.0 - a1 * a1)
    g_z2 = (g_y2 @ params.w2) * (1.0 - a2 * a2)
    grads["w1"] = g_z1.T @ x1 + g_z2.T @ x2
    grads["b1"] = g_z1.sum(axis=0) + g_z2.sum(axis=0)
    return mean_loss, grads, int(np.count_nonzero(degenerate))


class _Adam:
    def __init__(self, params: TransformParams, cfg: TrainConfig):
        self.cfg = cfg
        self.step_count = 0
        self.m = {k: np.zeros_like(getattr(params, k)) for k in ("w1", "b1", "w2", "b2")}
        self.v = {k: np.zeros_like(getattr(params, k)) for k in ("w1", "b1", "w2", "b2")}

    def step(self, params: TransformParams, grads: dict) -> None:
        self.step_count += 1
        c = self.cfg
        bias1 = 1.0 - c.beta1**self.step_count
        bias2 = 1.0 - c.beta2**self.step_count
        for key in ("w1", "b1", "w2", "b2"):
            g = grads[key]
            self.m[key] = c.beta1 * self.m[key] + (1.0 - c.beta1) * g
            self.v[key] = c.beta2 * self.v[key] + (1.0 - c.beta2) * g * g
            m_hat = self.m[key] / bias1
            v_hat = self.v[key] / bias2
            arr = getattr(params, key)
            arr -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.epsilon)


def _build_probe(triplets, val_anchors: set, cap: int, rng) -> list[tuple]:
    """Ranking probe from held-out anchors: for each anchor, pairs of its
    triplets with strictly different targets, the higher target as pos."""
    by_anchor: dict[str, list] = {}
    for t in triplets:
        if t.anchor_id in val_anchors:
            by_anchor.setdefault(t.anchor_id, []).append(t)
    probe = []
    for anchor_id in sorted(by_anchor):
        items = by_anchor[anchor_id]
        pairs = []
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                ti, tj = items[i], items[j]
                if ti.target == tj.target or ti.other_id == tj.other_id:
                    continue
                pos, neg = (ti, tj) if ti.target > tj.target else (tj, ti)
                pairs.append((anchor_id, pos.other_id, neg.other_id))
        if len(pairs) > cap:
            keep = rng.choice(len(pairs), size=cap, replace=False)
            pairs = [pairs[int(k)] for k in sorted(keep)]
        probe.extend(pairs)
    return probe


def probe_accuracy(params: TransformParams | None, probe: list[tuple], bank) -> float:
    """Fraction of probe pairs ranked correctly by transformed cosine
    (ties incorrect); params None scores raw embeddings."""
    if not probe:
        raise DataError("empty probe")
    ids = sorted({i for item in probe for i in item})
    rows = np.stack([bank.vector(i) for i in ids])
    if params is not None:
        rows = forward_batch(params, rows)
    norms = np.linalg.norm(rows, axis=1)
    norms = np.where(norms < DEGENERATE_NORM, 1.0, norms)
    rows = rows / norms[:, None]
    at = {exemplar_id: k for k, exemplar_id in enumerate(ids)}
    correct = 0
    for anchor_id, pos_id, neg_id in probe:
        a = rows[at[anchor_id]]
        if float(np.dot(a, rows[at[pos_id]])) > float(np.dot(a, rows[at[neg_id]])):
            correct += 1
    return correct / len(probe)


def train(triplets, bank, cfg: TrainConfig):
    """Train the transformation on curated triplets.

    Returns (best params, TrainReport). The generator is consumed in a fixed
    order (validation split, probe assembly, init, per-epoch shuffles and
    dropout masks) so identical inputs and seed give identical results.
    """
    if not triplets:
        raise DataError("train requires at least one triplet")
    rng = np.random.default_rng(cfg.seed)
    anchors: list[str] = []
    seen = set()
    for t in triplets:
        if t.anchor_id not in seen:
            seen.add(t.anchor_id)
            anchors.append(t.anchor_id)
    n_val = int(round(len(anchors) * cfg.validation_fraction))
    val_anchors: set = set()
    if n_val > 0 and n_val < len(anchors):
        order = rng.permutation(len(anchors))
        val_anchors = {anchors[int(i)] for i in order[:n_val]}
    probe = _build_probe(triplets, val_anchors, cfg.probe_pairs_per_anchor, rng)
    train_triplets = [t for t in triplets if t.anchor_id not in val_anchors]
    if not train_triplets:
        train_triplets = list(triplets)
    missing = [t.anchor_id for t in train_triplets if not bank.has(t.anchor_id)]
    missing += [t.other_id for t in train_triplets if not bank.has(t.other_id)]
    if missing:
        raise DataError(f"no embedding for id {missing[0]!r}")
    x1 = np.stack([bank.vector(t.anchor_id) for t in train_triplets])
    x2 = np.stack([bank.vector(t.other_id) for t in train_triplets])
    targets = np.asarray([t.target for t in train_triplets], dtype=np.float64)

    params = init_params(bank.dim, cfg.hidden_dim, cfg.output_dim, rng)
    optimizer = _Adam(params, cfg)
    report = TrainReport(probe_size=len(probe), loss_based_early_stop=not probe)
    best_params = params.copy()
    best_acc = -np.inf
    best_loss = np.inf
    stale = 0
    n = len(train_triplets)
    rate = cfg.dropout_rate
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            bx1 = x1[batch]
            bx2 = x2[batch]
            if rate > 0.0:
                keep1 = (rng.random(bx1.shape) >= rate).astype(np.float64)
                keep2 = (rng.random(bx2.shape) >= rate).astype(np.float64)
                bx1 = bx1 * keep1 / (1.0 - rate)
                bx2 = bx2 * keep2 / (1.0 - rate)
            loss, grads, degenerate = _batch_step(params, bx1, bx2, targets[batch], cfg.loss)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size} "
                    f"(learning_rate={cfg.learning_rate})"
                )
            report.degenerate_pairs += degenerate
            epoch_loss += loss * len(batch)
            optimizer.step(params, grads)
        epoch_loss /= n
        report.epoch_losses.append(epoch_loss)
        if probe:
            acc = probe_accuracy(params, probe, bank)
            report.probe_accuracies.append(acc)
            if acc > best_acc:
                best_acc = acc
                best_params = params.copy()
                report.best_epoch = epoch
                stale = 0
            else:
                stale += 1
        else:
            report.probe_accuracies.append(None)
            if epoch_loss < best_loss:
                best_loss = epoch_loss
                best_params = params.copy()
                report.best_epoch = epoch
                stale = 0
            else:
                stale += 1
        report.stopped_epoch = epoch
        if epoch_loss == 0.0:
            break
        if stale >= cfg.early_stop_patience:
            break
    report.best_probe_accuracy = best_acc if probe else None
    report.params_digest = best_params.digest()
    return best_params, report
