"""Minibatch Adam training with early stopping on a validation loss."""
from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

from .nn.autodiff import no_grad
from .nn.optim import Adam

log = logging.getLogger(__name__)


def fit(model, loss_fn: Callable, train: Sequence, val: Sequence, epochs: int = 100, lr: float = 1e-3,
        early_stop_window: int = 5, batch_size: int = 16, seed: int = 0, val_batch_size: int = 256):
    """Train ``model.params`` on (graph, label) pairs and keep the best validation state.

    ``loss_fn(model, graphs, labels)`` returns a scalar tensor averaged over
    the graphs it is given. Stops after ``early_stop_window`` epochs without a
    validation improvement. Returns ``(model, history)``.
    """
    if not train:
        raise ValueError("empty training set")
    if not val:
        raise ValueError("empty validation set")
    rng = np.random.default_rng(seed)
    opt = Adam(model.params, lr=lr)

    def evaluate(items):
        total = 0.0
        with no_grad():
            for lo in range(0, len(items), val_batch_size):
                chunk = items[lo:lo + val_batch_size]
                loss = loss_fn(model, [g for g, _ in chunk], [y for _, y in chunk])
                total += float(loss.data) * len(chunk)
        return total / len(items)

    best = evaluate(val)
    best_state = model.params.snapshot()
    history = [{"epoch": 0, "train_loss": evaluate(train), "val_loss": best}]
    since_best = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train))
        running = 0.0
        for lo in range(0, len(order), batch_size):
            chunk = [train[k] for k in order[lo:lo + batch_size]]
            model.params.zero_grad()
            loss = loss_fn(model, [g for g, _ in chunk], [y for _, y in chunk])
            loss.backward()
            opt.step()
            running += float(loss.data) * len(chunk)
        val_loss = evaluate(val)
        history.append({"epoch": epoch, "train_loss": running / len(train), "val_loss": val_loss})
        log.info("epoch %d train %.6g val %.6g", epoch, running / len(train), val_loss)
        if val_loss < best:
            best, best_state, since_best = val_loss, model.params.snapshot(), 0
        else:
            since_best += 1
            if since_best >= early_stop_window:
                break
    model.params.restore(best_state)
    return model, history
