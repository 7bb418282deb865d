"""Mini-batch SGD with gradient clipping for the sequence models.

Each step draws its batch from a per-step child generator of the training
seed, so run history is a pure function of (dataset, model init, seed):
reruns give identical loss traces, and no generator state needs saving.
The loss is the mean NLL per target token within the batch, which keeps
one learning rate usable across tasks with different output lengths.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .checkpoint import save_model
from .data import Example
from .models import Model, nll_batch
from .tensor import NonFiniteError, TrainingError, scale, sgd_step

__all__ = ["HyperParams", "TrainRecord", "batch_indices", "train"]


@dataclass(frozen=True)
class HyperParams:
    hidden: int = 256
    lr: float = 1.0
    batch: int = 128
    clip: float = 2.0
    init_range: float = 0.08
    beam_width: int = 1
    max_steps: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("hidden", "lr", "batch", "clip", "init_range",
                     "beam_width", "max_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")


class TrainRecord(NamedTuple):
    step: int      # 1-based
    loss: float    # mean NLL per target token over the batch
    seconds: float  # wall time since training started


def batch_indices(seed: int, step: int, population: int, k: int) -> np.ndarray:
    """Example indices for one step: a without-replacement draw from a
    child generator keyed by (seed, step).  k is capped at the population."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(step,))
    rng = np.random.Generator(np.random.PCG64(ss))
    return rng.choice(population, size=min(k, population), replace=False)


def train(model: Model, examples: Sequence[Example], hp: HyperParams,
          checkpoint_path=None, checkpoint_every: int = 500,
          callback: Callable[[int, Model], bool] | None = None,
          callback_every: int = 100, start_step: int = 0,
          on_record: Callable[[TrainRecord], None] | None = None) -> list[TrainRecord]:
    """Run up to hp.max_steps SGD steps in place on the model.

    ``callback(step, model)`` is polled every ``callback_every`` steps and
    may return True to stop early (checkpoint still written).  A non-finite
    loss or gradient aborts with TrainingError; the checkpoint file then
    still holds the last periodic save, never the poisoned state.

    ``start_step`` resumes a run: steps start_step+1 .. max_steps execute.
    Batches are keyed by absolute step number and SGD carries no state
    between steps, so resuming from a step-k checkpoint replays the exact
    losses an uninterrupted run would have produced from step k+1 on.
    ``on_record`` sees each TrainRecord as it is produced.
    """
    examples = list(examples)
    if not examples:
        raise ValueError("empty training set")
    tasks = {ex.task for ex in examples}
    if len(tasks) > 1:
        raise ValueError(f"training set mixes tasks {sorted(tasks)}")
    if not 0 <= start_step <= hp.max_steps:
        raise ValueError(f"start_step must be in [0, {hp.max_steps}], got {start_step}")
    task = examples[0].task

    records: list[TrainRecord] = []
    start = time.perf_counter()
    for step in range(start_step + 1, hp.max_steps + 1):
        idx = batch_indices(hp.seed, step, len(examples), hp.batch)
        batch = [examples[i] for i in idx]
        try:
            total, tokens = nll_batch(model, batch)
            mean = scale(total, 1.0 / tokens)
            grads = mean.tape.backward(mean, model.parameters())
            sgd_step(model.parameters(), grads, lr=hp.lr, clip_norm=hp.clip)
        except (NonFiniteError, TrainingError) as e:
            raise TrainingError(f"aborted at step {step}: {e}") from e
        records.append(TrainRecord(step, mean.item(), time.perf_counter() - start))
        if on_record is not None:
            on_record(records[-1])
        if checkpoint_path is not None and step % checkpoint_every == 0:
            save_model(checkpoint_path, model, task)
        if callback is not None and step % callback_every == 0 and callback(step, model):
            break
    if checkpoint_path is not None:
        save_model(checkpoint_path, model, task)
    return records
