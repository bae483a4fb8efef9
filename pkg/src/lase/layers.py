"""Gate / amplifier / aggregator layer family for link-attributed graphs.

Four architectures share the same skeleton: a learned scalar gate per
neighbor, an amplifier that modulates the neighbor state elementwise by a
linear map of the link attributes, and an aggregator that sums the gated
terms.

``rw``      h0(u) = W0 f(u);  h_l(u) = act(sum_v gate * h_{l-1}(v) (*) U fe (*) W f(u))
``wl``      as rw but with relabeled node features r(u) in place of f(u)
``sage``    h0(u) = f(u);  h_l(u) = act(W1 h_{l-1}(u) o W2 sum_v gate * h_{l-1}(v) (*) U fe)
``concat``  h_l(u) = act(W1 sum_v h_{l-1}(v) + W2 sum_v fe)   (ablation baseline)

The ``rw`` recurrence chains the hidden state through the neighbor (the only
form whose node-sum reproduces the random-walk kernel in kernel mode, see
kernels.check_theorem1); ``strict_paper_rw`` flips it to the variant keeping
the central hidden state inside the sum with W applied to the neighbor.

Kernel mode replaces every gate by a constant decay and removes activations,
turning the rw stack into an exact walk-sum evaluator.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad

ARCHITECTURES = ("rw", "wl", "sage", "concat")
COMBINE_OPS = ("sum", "hadamard", "concat")


def _glorot(rng, rows, cols):
    a = np.sqrt(6.0 / (rows + cols))
    return ad.Tensor2(rng.uniform(-a, a, size=(rows, cols)), requires_grad=True)


class LayerParams:
    """Weight bag for one convolution layer."""

    def __init__(self, **tensors):
        self._names = tuple(tensors)
        for name, t in tensors.items():
            setattr(self, name, t)

    def items(self):
        return [(name, getattr(self, name)) for name in self._names]


class LayerStack:
    """Parameters plus wiring for one architecture at a fixed depth."""

    def __init__(self, arch, d_node, d_link, hidden=64, depth=2,
                 combine="concat", amplifier_sigmoid=False, kernel_mode=False,
                 constant_decay=0.5, wl_depth=2, strict_paper_rw=False, seed=0):
        if arch not in ARCHITECTURES:
            raise ValueError("unknown architecture %r" % (arch,))
        if combine not in COMBINE_OPS:
            raise ValueError("unknown combine op %r" % (combine,))
        if depth < 1:
            raise ValueError("depth must be >= 1")
        if kernel_mode and arch != "rw":
            raise ValueError("kernel mode is defined for the rw architecture")
        self.arch = arch
        self.d_node = d_node
        self.d_link = d_link
        self.hidden = hidden
        self.depth = depth
        self.combine = combine
        self.amplifier_sigmoid = amplifier_sigmoid
        self.kernel_mode = kernel_mode
        self.constant_decay = constant_decay
        self.wl_depth = wl_depth
        self.strict_paper_rw = strict_paper_rw

        rng = np.random.default_rng(seed)
        self.dims = self._layer_dims()
        self.layers = []
        self.P1 = self.P2 = self.Q = None
        if arch == "wl":
            self.P1 = _glorot(rng, d_node, d_node)
            self.P2 = _glorot(rng, d_node, d_node)
            self.Q = _glorot(rng, d_node, d_node)
        for l in range(depth + 1):
            self.layers.append(self._init_layer(rng, l))

    def _layer_dims(self):
        if self.arch in ("rw", "wl"):
            return [self.hidden] * (self.depth + 1)
        dims = [self.d_node]
        for _ in range(self.depth):
            if self.arch == "sage" and self.combine == "concat":
                dims.append(2 * self.hidden)
            else:
                dims.append(self.hidden)
        return dims

    def _init_layer(self, rng, l):
        d_in = self.dims[l - 1] if l > 0 else None
        if self.arch in ("rw", "wl"):
            if l == 0:
                return LayerParams(W=_glorot(rng, self.hidden, self.d_node))
            return LayerParams(
                W=_glorot(rng, self.hidden, self.d_node),
                U=_glorot(rng, self.hidden, self.d_link),
                V=_glorot(rng, 1, 2 * d_in + self.d_link),
                b=ad.Tensor2(np.zeros((1, 1)), requires_grad=True))
        if self.arch == "sage":
            if l == 0:
                return LayerParams()
            return LayerParams(
                W1=_glorot(rng, self.hidden, d_in),
                W2=_glorot(rng, self.hidden, d_in),
                U=_glorot(rng, d_in, self.d_link),
                V=_glorot(rng, 1, 2 * d_in + self.d_link),
                b=ad.Tensor2(np.zeros((1, 1)), requires_grad=True))
        # concat
        if l == 0:
            return LayerParams()
        return LayerParams(W1=_glorot(rng, self.hidden, d_in),
                           W2=_glorot(rng, self.hidden, self.d_link))

    @property
    def out_dim(self):
        return self.dims[-1]

    def parameters(self):
        out = []
        for name, t in (("P1", self.P1), ("P2", self.P2), ("Q", self.Q)):
            if t is not None:
                out.append((name, t))
        for l, p in enumerate(self.layers):
            for name, t in p.items():
                out.append(("layer%d.%s" % (l, name), t))
        return out

    def zero_grad(self):
        for _, t in self.parameters():
            t.zero_grad()

    def load_state(self, named):
        mine = dict(self.parameters())
        for name, t in named:
            if name not in mine:
                raise ValueError("unknown parameter %r in checkpoint" % (name,))
            if mine[name].shape != t.shape:
                raise ValueError("shape mismatch for parameter %r" % (name,))
            mine[name].data[...] = t.data
        return self


# ---------------------------------------------------------------------------
# Taped forward pass
# ---------------------------------------------------------------------------

def gate(h_u, h_v, fe, p, stack):
    """Scalar neighbor gate; a plain constant in kernel mode."""
    if stack.kernel_mode:
        return stack.constant_decay
    z = ad.matvec(p.V, ad.concat([h_u, fe, h_v]))
    return ad.sigmoid(ad.add(z, p.b))


def amplifier(h_v, fe, p, stack):
    """h_v scaled elementwise by (optionally squashed) U fe."""
    a = ad.matvec(p.U, fe)
    if stack.amplifier_sigmoid:
        a = ad.sigmoid(a)
    return ad.hadamard(h_v, a)


def _zero(dim):
    return ad.Tensor2(np.zeros((dim, 1)))


def _sum_terms(terms, dim):
    if not terms:
        return _zero(dim)
    acc = terms[0]
    for t in terms[1:]:
        acc = ad.add(acc, t)
    return acc


def forward(g, stack, batch, plan=None, state=None, rng=None):
    """Per-node hidden vectors (taped).  ``plan=None`` means full neighborhoods.

    With a sampling plan, each layer's neighbor sum is replaced by the
    importance-sampled estimator (1/s) sum_j gate * term / p_j; probabilities
    are constants of the draw and take no gradient.
    """
    from . import sampling

    sampled = plan is not None and plan.strategy != "full"
    if sampled and rng is None:
        rng = np.random.default_rng(plan.seed)

    fnode_cache, flink_cache = {}, {}

    def nf(u):
        if u not in fnode_cache:
            fnode_cache[u] = ad.Tensor2(g.node_features[u].reshape(-1, 1))
        return fnode_cache[u]

    def lf(e):
        if e not in flink_cache:
            flink_cache[e] = ad.Tensor2(g.link_features[e].reshape(-1, 1))
        return flink_cache[e]

    rmemo = {}

    def relabel(d, u):
        if d == 0:
            return nf(u)
        key = (d, u)
        if key in rmemo:
            return rmemo[key]
        self_term = ad.matvec(stack.P1, relabel(d - 1, u))
        msgs = [ad.sigmoid(ad.matvec(stack.Q, relabel(d - 1, v)))
                for v, _ in g.neighbors(u)]
        nsum = _sum_terms(msgs, stack.d_node)
        out = ad.sigmoid(ad.add(self_term, ad.matvec(stack.P2, nsum)))
        rmemo[key] = out
        return out

    def activation(x):
        return x if stack.kernel_mode else ad.relu(x)

    def draws(l, u):
        """(neighbor index, coefficient) pairs covering the neighbor sum."""
        nbrs = g.neighbors(u)
        if not nbrs:
            return []
        if not sampled:
            return [(j, 1.0) for j in range(len(nbrs))]
        p = sampling.plan_probs(g, stack, state, plan, l, u)
        s = plan.sample_size
        idx = rng.choice(len(nbrs), size=s, p=p)
        return [(int(j), 1.0 / (s * p[j])) for j in idx]

    memo = {}

    def hid(l, u):
        key = (l, u)
        if key in memo:
            return memo[key]
        out = _hid(l, u)
        memo[key] = out
        return out

    def _hid(l, u):
        if l == 0:
            if stack.arch == "rw":
                return ad.matvec(stack.layers[0].W, nf(u))
            if stack.arch == "wl":
                return ad.matvec(stack.layers[0].W, relabel(stack.wl_depth - 1, u))
            return nf(u)
        p = stack.layers[l]
        nbrs = g.neighbors(u)
        pairs = draws(l, u)

        if stack.arch == "concat":
            hsum = _sum_terms(
                [_coef(hid(l - 1, nbrs[j][0]), c) for j, c in pairs],
                stack.dims[l - 1])
            fesum = _sum_terms(
                [_coef(lf(nbrs[j][1]), c) for j, c in pairs], stack.d_link)
            return ad.relu(ad.add(ad.matvec(p.W1, hsum), ad.matvec(p.W2, fesum)))

        h_u = hid(l - 1, u)
        terms = []
        for j, c in pairs:
            v, e = nbrs[j]
            h_v = hid(l - 1, v)
            fe = lf(e)
            lam = gate(h_u, h_v, fe, p, stack)
            if stack.arch == "sage":
                core = amplifier(h_v, fe, p, stack)
            elif stack.strict_paper_rw:
                core = ad.hadamard(amplifier(h_u, fe, p, stack),
                                   ad.matvec(p.W, nf(v)))
            elif stack.arch == "rw":
                core = ad.hadamard(amplifier(h_v, fe, p, stack),
                                   ad.matvec(p.W, nf(u)))
            else:  # wl
                core = ad.hadamard(amplifier(h_v, fe, p, stack),
                                   ad.matvec(p.W, relabel(stack.wl_depth - 1, u)))
            term = ad.scale(core, lam) if not isinstance(lam, float) \
                else ad.scale(core, lam)
            terms.append(_coef(term, c))
        nbsum = _sum_terms(terms, stack.dims[l - 1] if stack.arch == "sage"
                           else stack.hidden)

        if stack.arch == "sage":
            z1 = ad.matvec(p.W1, h_u)
            z2 = ad.matvec(p.W2, nbsum)
            if stack.combine == "sum":
                z = ad.add(z1, z2)
            elif stack.combine == "hadamard":
                z = ad.hadamard(z1, z2)
            else:
                z = ad.concat([z1, z2])
            return ad.relu(z)
        return activation(nbsum)

    return {u: hid(stack.depth, u) for u in batch}


def _coef(t, c):
    return t if c == 1.0 else ad.scale(t, c)


def wl_relabel(g, stack, d):
    """Numpy relabeling rounds r(0)=f(u) .. r(d); rows are nodes."""
    r = g.node_features.copy()
    p1 = stack.P1.data
    p2 = stack.P2.data
    q = stack.Q.data
    for _ in range(d):
        nxt = np.zeros_like(r)
        for u in range(g.n_nodes):
            acc = np.zeros(r.shape[1])
            for v, _ in g.neighbors(u):
                acc = acc + _sig(q @ r[v])
            nxt[u] = _sig(p1 @ r[u] + p2 @ acc)
        r = nxt
    return r


def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


# ---------------------------------------------------------------------------
# Numpy (no-grad) full-neighborhood forward
# ---------------------------------------------------------------------------

def full_forward(g, stack):
    """Full-neighborhood forward pass without a tape.

    Returns {"H": [array (n, dim_l) per layer], "R": relabel array or None}.
    Accumulation order matches the taped forward bit for bit.
    """
    n = g.n_nodes
    r = wl_relabel(g, stack, stack.wl_depth - 1) if stack.arch == "wl" else None

    if stack.arch == "rw":
        h = g.node_features @ stack.layers[0].W.data.T
    elif stack.arch == "wl":
        h = r @ stack.layers[0].W.data.T
    else:
        h = g.node_features.copy()
    hs = [h]

    for l in range(1, stack.depth + 1):
        p = stack.layers[l]
        prev = hs[-1]
        out = np.zeros((n, stack.dims[l]))
        for u in range(n):
            out[u] = _node_forward(g, stack, p, prev, r, l, u)
        hs.append(out)
    return {"H": hs, "R": r}


def _gate_value(stack, p, h_u, h_v, fe):
    if stack.kernel_mode:
        return stack.constant_decay
    z = p.V.data @ np.concatenate([h_u, fe, h_v]).reshape(-1, 1)
    return float(_sig(z[0, 0] + p.b.data[0, 0]))


def _amp_vec(stack, p, fe):
    a = p.U.data @ fe
    return _sig(a) if stack.amplifier_sigmoid else a


def neighbor_term(g, stack, p, prev, r, l, u, v, eid):
    """lambda-free summand g(v|u) for layer l as a numpy vector."""
    fe = g.link_features[eid]
    if stack.arch == "concat":
        return np.concatenate([prev[v], fe])
    if stack.arch == "sage":
        return prev[v] * _amp_vec(stack, p, fe)
    if stack.strict_paper_rw:
        return prev[u] * _amp_vec(stack, p, fe) * (stack.layers[l].W.data @ g.node_features[v])
    if stack.arch == "rw":
        return prev[v] * _amp_vec(stack, p, fe) * (stack.layers[l].W.data @ g.node_features[u])
    return prev[v] * _amp_vec(stack, p, fe) * (stack.layers[l].W.data @ r[u])


def neighbor_gates(g, stack, p, prev, l, u):
    """Gate value per neighbor of u, in adjacency order."""
    out = []
    for v, eid in g.neighbors(u):
        out.append(_gate_value(stack, p, prev[u], prev[v], g.link_features[eid]))
    return np.array(out)


def _node_forward(g, stack, p, prev, r, l, u):
    nbrs = g.neighbors(u)
    if stack.arch == "concat":
        hsum = np.zeros(prev.shape[1])
        fesum = np.zeros(g.d_link)
        for v, eid in nbrs:
            hsum = hsum + prev[v]
            fesum = fesum + g.link_features[eid]
        return np.maximum(p.W1.data @ hsum + p.W2.data @ fesum, 0.0)

    acc = np.zeros(prev.shape[1] if stack.arch == "sage" else stack.hidden)
    for v, eid in nbrs:
        lam = _gate_value(stack, p, prev[u], prev[v], g.link_features[eid])
        acc = acc + lam * neighbor_term(g, stack, p, prev, r, l, u, v, eid)
    if stack.arch == "sage":
        z1 = p.W1.data @ prev[u]
        z2 = p.W2.data @ acc
        if stack.combine == "sum":
            z = z1 + z2
        elif stack.combine == "hadamard":
            z = z1 * z2
        else:
            z = np.concatenate([z1, z2])
        return np.maximum(z, 0.0)
    return acc if stack.kernel_mode else np.maximum(acc, 0.0)


def full_hidden_arrays(g, stack):
    """Per-layer hidden matrices under full neighborhoods (no tape)."""
    return full_forward(g, stack)["H"]
