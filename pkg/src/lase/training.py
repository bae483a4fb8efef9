"""Mini-batch training, micro-F1 evaluation and the validation experiments."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import autodiff as ad
from . import layers, sampling


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during optimization."""


@dataclass
class TrainRun:
    arch: str = "sage"
    hidden: int = 64
    depth: int = 2
    combine: str = "concat"
    amplifier_sigmoid: bool = False
    wl_depth: int = 2
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 10
    plan: sampling.SamplePlan = field(default_factory=sampling.SamplePlan)
    seed: int = 0
    snr: float = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.snr is not None and not self.snr > 0:
            raise ValueError("snr must be positive")
        if isinstance(self.plan, dict):
            self.plan = sampling.SamplePlan(**self.plan)

    def to_dict(self):
        d = asdict(self)
        if d["snr"] == math.inf:
            d["snr"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("snr") == "inf":
            d["snr"] = math.inf
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class MetricHistory:
    train_loss: list = field(default_factory=list)
    val_f1: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    test_f1: float = None
    best_epoch: int = -1
    n_batches: int = 0
    refresh_work: int = 0

    def rows(self):
        return [(e, self.train_loss[e], self.val_f1[e])
                for e in range(len(self.train_loss))]


class Model:
    """A layer stack plus a one-layer softmax classifier head."""

    def __init__(self, stack, n_labels, seed=0):
        rng = np.random.default_rng(seed)
        self.stack = stack
        self.n_labels = n_labels
        a = np.sqrt(6.0 / (n_labels + stack.out_dim))
        self.C = ad.Tensor2(rng.uniform(-a, a, (n_labels, stack.out_dim)),
                            requires_grad=True)
        self.c = ad.Tensor2(np.zeros((n_labels, 1)), requires_grad=True)

    def parameters(self):
        return self.stack.parameters() + [("clf.C", self.C), ("clf.c", self.c)]

    def zero_grad(self):
        for _, t in self.parameters():
            t.zero_grad()

    def logits_full(self, g):
        """Full-neighborhood logits for every node (no tape)."""
        h = layers.full_hidden_arrays(g, self.stack)[-1]
        return h @ self.C.data.T + self.c.data[:, 0]

    def predict(self, g, nodes):
        logits = self.logits_full(g)
        return [int(np.argmax(logits[u])) for u in nodes]

    def snapshot(self):
        return [(name, t.data.copy()) for name, t in self.parameters()]

    def restore(self, snap):
        for (name, arr), (_, t) in zip(snap, self.parameters()):
            t.data[...] = arr

    def save(self, path_prefix, meta=None):
        ad.save_checkpoint(path_prefix, self.parameters(), meta)

    def load(self, path_prefix):
        named, meta = ad.load_checkpoint(path_prefix)
        for (name, src), (mine_name, t) in zip(named, self.parameters()):
            if name != mine_name or src.shape != t.shape:
                raise ValueError("checkpoint does not match model layout")
            t.data[...] = src.data
        return meta


def build_model(g, run):
    stack = layers.LayerStack(
        run.arch, g.d_node, g.d_link, hidden=run.hidden, depth=run.depth,
        combine=run.combine, amplifier_sigmoid=run.amplifier_sigmoid,
        wl_depth=run.wl_depth, seed=run.seed)
    return Model(stack, g.n_labels, seed=run.seed + 1)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def micro_f1(y_true, y_pred, n_labels):
    """Micro-averaged F1 from globally pooled TP / FP / FN counts."""
    if len(y_true) == 0:
        raise ValueError("micro_f1 of an empty set")
    tp = fp = fn = 0
    for t, p in zip(y_true, y_pred):
        if t == p:
            tp += 1
        else:
            fp += 1
            fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def evaluate(g, model, nodes):
    """Micro-F1 of the model over a labelled node set (full neighborhoods)."""
    nodes = list(nodes)
    if not nodes:
        raise ValueError("evaluate on an empty node set")
    y_true = [g.labels[u] for u in nodes]
    if any(t is None for t in y_true):
        raise ValueError("evaluate requires labelled nodes")
    y_pred = model.predict(g, nodes)
    return micro_f1(y_true, y_pred, g.n_labels)


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

class Sgd:
    def __init__(self, params, lr, weight_decay=0.0):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self):
        for _, t in self.params:
            g = t.grad + self.weight_decay * t.data
            t.data -= self.lr * g


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params}
        self.v = {name: np.zeros_like(t.data) for name, t in params}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, t in self.params:
            g = t.grad + self.weight_decay * t.data
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mhat = self.m[name] / (1 - b1 ** self.t)
            vhat = self.v[name] / (1 - b2 ** self.t)
            t.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(run, params):
    if run.optimizer == "sgd":
        return Sgd(params, run.lr, run.weight_decay)
    if run.optimizer == "adam":
        return Adam(params, run.lr, run.beta1, run.beta2,
                    weight_decay=run.weight_decay)
    raise ValueError("unknown optimizer %r" % (run.optimizer,))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def batch_loss(g, model, batch, plan=None, state=None, rng=None):
    """Mean cross-entropy over a batch (taped)."""
    hs = layers.forward(g, model.stack, batch, plan=plan, state=state, rng=rng)
    losses = []
    for u in batch:
        logits = ad.add(ad.matvec(model.C, hs[u]), model.c)
        losses.append(ad.softmax_cross_entropy(logits, g.labels[u]))
    total = losses[0]
    for l in losses[1:]:
        total = ad.add(total, l)
    return ad.scale(total, 1.0 / len(batch))


def train(g, split, run):
    """Train a model; returns (model, MetricHistory).

    Deterministic for a fixed (graph, split, run): all randomness is drawn
    from streams derived from run.seed.
    """
    if not split.train:
        raise ValueError("empty train split")
    if run.snr is not None:
        g = contaminate_links(g, run.snr, seed=run.seed)
    model = build_model(g, run)
    params = model.parameters()
    opt = make_optimizer(run, params)
    shuffle_rng = np.random.default_rng((run.seed, 101))
    sample_rng = np.random.default_rng((run.seed, run.plan.seed, 202))

    sampled = run.plan.strategy != "full"
    state = sampling.SamplerState() if sampled else None
    history = MetricHistory()
    best = (-1.0, -1, None)

    train_ids = list(split.train)
    for epoch in range(run.max_epochs):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(train_ids))
        losses = []
        for ofs in range(0, len(train_ids), run.batch_size):
            batch = [train_ids[i] for i in order[ofs:ofs + run.batch_size]]
            if sampled:
                sampling.refresh(state, g, model.stack, run.plan,
                                 nodes=train_ids)
            with ad.Tape() as tape:
                loss = batch_loss(g, model, batch, plan=run.plan,
                                  state=state, rng=sample_rng)
                if not math.isfinite(loss.item()):
                    raise TrainingDiverged("non-finite loss at epoch %d" % epoch)
                model.zero_grad()
                tape.backward(loss)
            opt.step()
            losses.append(loss.item())
            history.n_batches += 1
            if sampled:
                state.batches_since_refresh += 1
        val = evaluate(g, model, split.val) if split.val else 0.0
        history.train_loss.append(float(np.mean(losses)))
        history.val_f1.append(val)
        history.epoch_seconds.append(time.perf_counter() - t0)
        if val > best[0]:
            best = (val, epoch, model.snapshot())
        elif epoch - best[1] >= run.patience:
            break
    if best[2] is not None:
        model.restore(best[2])
        history.best_epoch = best[1]
    if state is not None:
        history.refresh_work = state.refresh_work
    if split.test:
        history.test_f1 = evaluate(g, model, split.test)
    return model, history


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def contaminate_links(g, snr, seed=0):
    """Add zero-mean gaussian noise of std A(link_attrs)/snr to link features."""
    if not snr > 0:
        raise ValueError("snr must be positive")
    if math.isinf(snr):
        return g
    a = float(np.std(g.link_features))
    if a == 0.0:
        raise ValueError("zero-variance link features: SNR undefined")
    rng = np.random.default_rng((seed, 0x5e7))
    noise = rng.normal(scale=a / snr, size=g.link_features.shape)
    return g.with_link_features(g.link_features + noise)


def snr_sweep(g, split, run, snr_values):
    """Independent trainings per SNR; rows of (snr, test micro-F1)."""
    if not snr_values:
        raise ValueError("snr_values must be nonempty")
    rows = []
    for snr in snr_values:
        _, hist = train(g, split, replace(run, snr=snr))
        rows.append((snr, hist.test_f1))
    return rows


def strategy_comparison(g, split, run, strategies):
    """Per-epoch validation curves for each sampling strategy (shared seed)."""
    curves = {}
    for strat in strategies:
        plan = replace(run.plan, strategy=strat)
        _, hist = train(g, split, replace(run, plan=plan))
        curves[strat] = list(hist.val_f1)
    return curves


def refresh_sweep(g, split, run, intervals):
    """Final val accuracy and per-batch refresh work for each interval k."""
    rows = []
    for k in intervals:
        plan = replace(run.plan, refresh_interval=k)
        if plan.strategy == "full":
            plan = replace(plan, strategy="minvar")
        _, hist = train(g, split, replace(run, plan=plan))
        final_val = hist.val_f1[hist.best_epoch if hist.best_epoch >= 0 else -1]
        rows.append((k, final_val, hist.refresh_work / max(hist.n_batches, 1)))
    return rows


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def metrics_csv(history):
    lines = ["epoch,loss,val_f1"]
    for e, loss, val in history.rows():
        lines.append("%d,%s,%s" % (e, repr(float(loss)), repr(float(val))))
    return "\n".join(lines) + "\n"
