"""Value learning with replay memory and a target network.

One network scores every actuator at once: its output concatenates one
block of action values per actuator, and each head is trained against its
own one-step return while sharing the trunk.  Exploration is per head:
with probability epsilon an actuator takes a uniform random value instead
of its argmax.  The target network is a frozen copy of the online one,
refreshed every ``sync_every`` gradient steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .mlp import MLP, TrainingError, make_optimizer


@dataclass(frozen=True)
class Encoding:
    """How one input state enters the network.

    ``one_hot`` spreads a discrete state over ``size`` indicator features;
    ``scaled`` divides a continuous state by ``scale``; ``raw`` passes the
    value through.
    """

    name: str
    mode: str
    size: int = 1
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in ("one_hot", "scaled", "raw"):
            raise ValueError(f"unknown encoding mode {self.mode!r}")
        if self.mode == "one_hot" and self.size < 2:
            raise ValueError("one_hot encoding needs size >= 2")
        if self.mode == "scaled" and self.scale == 0.0:
            raise ValueError("scaled encoding needs a non-zero scale")

    @property
    def width(self) -> int:
        return self.size if self.mode == "one_hot" else 1


class StateEncoder:
    """Maps samples to fixed-width feature vectors, in declaration order."""

    def __init__(self, encodings: Sequence[Encoding]) -> None:
        self.encodings = tuple(encodings)
        if not self.encodings:
            raise ValueError("encoder needs at least one encoding")

    @property
    def width(self) -> int:
        return sum(e.width for e in self.encodings)

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.encodings)

    def encode(self, sample: Mapping[str, float]) -> np.ndarray:
        out = np.zeros(self.width, dtype=np.float64)
        pos = 0
        for e in self.encodings:
            value = float(sample[e.name])
            if e.mode == "one_hot":
                idx = int(value)
                if not (0 <= idx < e.size and idx == value):
                    raise ValueError(f"state {e.name!r}: {value!r} is not a category in 0..{e.size - 1}")
                out[pos + idx] = 1.0
                pos += e.size
            elif e.mode == "scaled":
                out[pos] = value / e.scale
                pos += 1
            else:
                out[pos] = value
                pos += 1
        return out

    def encode_batch(self, samples: Sequence[Mapping[str, float]]) -> np.ndarray:
        return np.stack([self.encode(s) for s in samples])

    def to_dict(self) -> dict:
        return {
            "encodings": [
                {"name": e.name, "mode": e.mode, "size": e.size, "scale": e.scale}
                for e in self.encodings
            ]
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "StateEncoder":
        return cls(
            [
                Encoding(
                    name=str(e["name"]),
                    mode=str(e["mode"]),
                    size=int(e.get("size", 1)),
                    scale=float(e.get("scale", 1.0)),
                )
                for e in payload["encodings"]
            ]
        )


@dataclass(frozen=True)
class Transition:
    """One step of experience, with the chosen index per actuator."""

    state: Mapping[str, float]
    actions: Mapping[str, int]
    reward: float
    next_state: Mapping[str, float]


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("replay capacity must be positive")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._cursor] = transition
        self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform sample without replacement (all of it if short)."""
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        k = min(batch_size, len(self._items))
        idx = rng.choice(len(self._items), size=k, replace=False)
        return [self._items[i] for i in idx]


class QAgent:
    """Multi-actuator value agent over a shared from-scratch network.

    ``actuator_values`` fixes the action blocks: one (name, values) entry
    per actuator, concatenated in order at the network output.  ``decide``
    is the greedy policy mapped back to actuator values; ``act`` adds
    epsilon exploration over the joint action.

    ``hysteresis`` scales updates that would pull a taken action's value
    down.  At 1 the step is the plain TD regression.  Below 1 each head
    stays optimistic about outcomes the other actuator can spoil, which is
    what lets independently updated heads settle on a joint action that
    only pays off when both pick it; with symmetric updates the heads
    average over each other's mistakes and talk each other out of it.
    """

    def __init__(
        self,
        encoder: StateEncoder,
        actuator_values: Mapping[str, Sequence[float]],
        hidden_layer_sizes: tuple[int, ...] = (32, 32),
        gamma: float = 0.9,
        lr: float = 1e-3,
        optimizer: str = "adam",
        sync_every: int = 200,
        hysteresis: float = 1.0,
        rng: np.random.Generator | None = None,
        net: MLP | None = None,
    ) -> None:
        if not 0.0 < hysteresis <= 1.0:
            raise ValueError("hysteresis must lie in (0, 1]")
        self.encoder = encoder
        self.actuators = tuple(actuator_values)
        self.values = {n: tuple(float(v) for v in actuator_values[n]) for n in self.actuators}
        self.gamma = gamma
        self.lr = lr
        self.optimizer = optimizer
        self.sync_every = sync_every
        self.hysteresis = hysteresis
        self.hidden_layer_sizes = tuple(hidden_layer_sizes)

        self._slices: dict[str, tuple[int, int]] = {}
        pos = 0
        for name in self.actuators:
            n_actions = len(self.values[name])
            if n_actions < 1:
                raise ValueError(f"actuator {name!r} needs at least one value")
            self._slices[name] = (pos, pos + n_actions)
            pos += n_actions

        if net is not None:
            self.online = net
        else:
            if rng is None:
                raise ValueError("QAgent needs an rng to initialize its network")
            sizes = [encoder.width, *self.hidden_layer_sizes, pos]
            self.online = MLP.create(sizes, rng, hidden_activation="tanh")
        self.target = self.online.clone()
        self._opt = make_optimizer(optimizer, self.online.parameters(), lr=lr)
        self._steps = 0

    @property
    def input_names(self) -> tuple[str, ...]:
        return self.encoder.input_names

    def q_values(self, sample: Mapping[str, float]) -> dict[str, np.ndarray]:
        out = self.online.forward(self.encoder.encode(sample)[None, :])[0]
        return {n: out[lo:hi] for n, (lo, hi) in self._slices.items()}

    def greedy_indices(self, sample: Mapping[str, float]) -> dict[str, int]:
        q = self.q_values(sample)
        return {n: int(np.argmax(q[n])) for n in self.actuators}

    def decide(self, sample: Mapping[str, float]) -> dict[str, float]:
        idx = self.greedy_indices(sample)
        return {n: self.values[n][idx[n]] for n in self.actuators}

    def act(
        self, sample: Mapping[str, float], epsilon: float, rng: np.random.Generator
    ) -> dict[str, int]:
        """Epsilon-greedy over the joint action.

        One exploration draw covers every actuator at once.  Randomizing
        heads independently would make coordinated action combinations
        exponentially rare at small epsilon, and those combinations are
        exactly what the agent still needs to see.
        """
        if rng.random() < epsilon:
            return {n: int(rng.integers(len(self.values[n]))) for n in self.actuators}
        return self.greedy_indices(sample)

    def action_values(self, indices: Mapping[str, int]) -> dict[str, float]:
        return {n: self.values[n][indices[n]] for n in self.actuators}

    def sync_target(self) -> None:
        self.target.copy_from(self.online)

    def train_step(self, batch: Sequence[Transition]) -> float:
        """One gradient step on a batch; returns the summed head loss.

        Each head regresses its chosen action value toward the one-step
        return computed from the target network's best next value for that
        same head.  Downward corrections are weighted by ``hysteresis``.
        """
        n = len(batch)
        states = self.encoder.encode_batch([t.state for t in batch])
        next_states = self.encoder.encode_batch([t.next_state for t in batch])
        rewards = np.array([t.reward for t in batch], dtype=np.float64)
        q_next = self.target.forward(next_states)
        q, cache = self.online.forward_cached(states)

        dout = np.zeros_like(q)
        rows = np.arange(n)
        loss = 0.0
        for name, (lo, hi) in self._slices.items():
            targets = rewards + self.gamma * q_next[:, lo:hi].max(axis=1)
            cols = lo + np.array([t.actions[name] for t in batch], dtype=np.int64)
            diff = q[rows, cols] - targets
            weight = np.where(diff > 0.0, self.hysteresis, 1.0)
            loss += float(0.5 * np.mean(weight * diff * diff))
            dout[rows, cols] += weight * diff / n
        if not np.isfinite(loss):
            raise TrainingError("value loss became non-finite")

        gw, gb = self.online.backward(dout, cache)
        self._opt.step([*gw, *gb])
        self._steps += 1
        if self._steps % self.sync_every == 0:
            self.sync_target()
        return loss

    def to_dict(self) -> dict:
        return {
            "kind": "qagent",
            "encoder": self.encoder.to_dict(),
            "actuators": [[n, list(self.values[n])] for n in self.actuators],
            "hidden_layer_sizes": list(self.hidden_layer_sizes),
            "gamma": self.gamma,
            "lr": self.lr,
            "optimizer": self.optimizer,
            "sync_every": self.sync_every,
            "hysteresis": self.hysteresis,
            "net": self.online.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "QAgent":
        agent = cls(
            encoder=StateEncoder.from_dict(payload["encoder"]),
            actuator_values={str(n): [float(v) for v in vals] for n, vals in payload["actuators"]},
            hidden_layer_sizes=tuple(int(h) for h in payload["hidden_layer_sizes"]),
            gamma=float(payload["gamma"]),
            lr=float(payload["lr"]),
            optimizer=str(payload["optimizer"]),
            sync_every=int(payload["sync_every"]),
            hysteresis=float(payload.get("hysteresis", 1.0)),
            net=MLP.from_dict(payload["net"]),
        )
        return agent
