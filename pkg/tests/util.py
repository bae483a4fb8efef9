"""Shared test helpers: random small graphs and finite-difference checking."""

import numpy as np

from lase import autodiff as ad
from lase.graph import AttributedGraph


def random_graph(rng, max_nodes=8, d_node=3, d_link=2, p_link=0.5):
    """Random simple undirected graph with gaussian features."""
    n = int(rng.integers(2, max_nodes + 1))
    links = [(u, v) for u in range(n) for v in range(u + 1, n)
             if rng.random() < p_link]
    if not links:
        links = [(0, 1)]
    nf = rng.normal(size=(n, d_node))
    lf = rng.normal(size=(len(links), d_link))
    return AttributedGraph(nf, [None] * n, links, lf, 1)


def finite_diff_worst(params, loss_fn, h=1e-6):
    """Max relative error between backward and central-difference gradients.

    ``loss_fn`` must rebuild the loss from scratch on each call (it is
    evaluated off-tape for the differences).  Entries where both gradients
    are below 1e-6 in magnitude are treated as matching: the difference
    quotient carries ~1e-10 of float64 roundoff noise at ``h`` = 1e-6, so a
    relative comparison is meaningless below that scale.
    """
    with ad.Tape() as tape:
        loss = loss_fn()
        for _, t in params:
            t.zero_grad()
        tape.backward(loss)
    worst = 0.0
    for _, t in params:
        it = np.nditer(t.data, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = t.data[idx]
            t.data[idx] = orig + h
            lp = loss_fn().item()
            t.data[idx] = orig - h
            lm = loss_fn().item()
            t.data[idx] = orig
            fd = (lp - lm) / (2 * h)
            an = t.grad[idx]
            if abs(fd) < 1e-6 and abs(an) < 1e-6:
                continue
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an)))
    return worst
