'''
Per-user packet erasure channels.

Two variants: a memoryless Bernoulli erasure channel with per-user success
probabilities β, and a Markov-modulated channel whose per-user loss probability
follows a finite-state chain with transition matrix Γ, switching every dwell_slots.
Users' chains are independent and share Γ.

A transmission consumes exactly one uniform draw from the channel stream, whichever
user is scheduled, so channel realizations line up across schedulers.
'''

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np


# Three link-quality states (excellent / good / satisfactory), switching every 0.5 s
DEFAULT_DROP_PROBS = (0.001, 0.002, 0.005)
DEFAULT_GAMMA = (
    (0.3, 0.6, 0.1),
    (0.2, 0.6, 0.2),
    (0.1, 0.6, 0.3),
)
DEFAULT_DWELL_S = 0.5

_ROW_TOL = 1e-12


class UniformSource(Protocol):
    def random(self) -> float: ...


def _check_prob(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f'{name} must lie in [0, 1], got {p}')


@dataclass(frozen=True)
class BernoulliErasure:
    '''Independent per-slot success with probability beta[user].'''

    beta: tuple[float, ...]

    def __post_init__(self) -> None:
        for i, b in enumerate(self.beta):
            _check_prob(f'beta[{i}]', b)

    @classmethod
    def from_loss(cls, loss: float | list[float], num_users: int) -> BernoulliErasure:
        losses = [loss] * num_users if isinstance(loss, (int, float)) else list(loss)
        if len(losses) != num_users:
            raise ValueError(f'{len(losses)} loss values for {num_users} users')
        return cls(tuple(1.0 - p for p in losses))


@dataclass
class MarkovModulated:
    '''
    Loss probability drop_probs[state] for each user, with each user's state
    resampled from row gamma[state] every dwell_slots slots.
    '''

    drop_probs: tuple[float, ...]
    gamma: np.ndarray
    dwell_slots: int
    current_state: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.gamma = np.asarray(self.gamma, dtype=float)
        k = len(self.drop_probs)
        if self.gamma.shape != (k, k):
            raise ValueError(f'gamma must be {k}x{k}, got shape {self.gamma.shape}')
        for i, p in enumerate(self.drop_probs):
            _check_prob(f'drop_probs[{i}]', p)
        if np.any(self.gamma < 0) or np.any(self.gamma > 1):
            raise ValueError('gamma entries must lie in [0, 1]')
        row_sums = self.gamma.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > _ROW_TOL):
            raise ValueError(f'gamma rows must sum to 1, got {row_sums.tolist()}')
        if self.dwell_slots < 1:
            raise ValueError(f'dwell_slots must be ≥ 1, got {self.dwell_slots}')
        if any(not 0 <= s < k for s in self.current_state):
            raise ValueError(f'state index out of range: {self.current_state}')
        self._cum = np.cumsum(self.gamma, axis=1).tolist()

    def with_states(self, states: list[int]) -> MarkovModulated:
        '''Fresh copy (episode-owned) starting in the given per-user states.'''
        return MarkovModulated(self.drop_probs, self.gamma.copy(), self.dwell_slots, list(states))


ChannelModel = BernoulliErasure | MarkovModulated


def stationary_distribution(gamma: np.ndarray | list[list[float]]) -> np.ndarray:
    '''π solving πΓ = π with Σπ = 1.'''
    g = np.asarray(gamma, dtype=float)
    k = g.shape[0]
    a = np.vstack([g.T - np.eye(k), np.ones(k)])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    return pi


def sample_channel(model: ChannelModel, user: int, rng: UniformSource) -> bool:
    '''One transmission attempt to user; True when the packet gets through.'''
    u = rng.random()
    if isinstance(model, BernoulliErasure):
        return u < model.beta[user]
    return u >= model.drop_probs[model.current_state[user]]


def advance_channel(model: ChannelModel, slot: int, rng: UniformSource) -> ChannelModel:
    '''
    Step the Markov chains at a dwell boundary (slot > 0 and slot % dwell_slots == 0).

    Draws one uniform per user at a boundary and none otherwise; a no-op for the
    Bernoulli variant.
    '''
    if isinstance(model, BernoulliErasure):
        return model
    if slot <= 0 or slot % model.dwell_slots:
        return model
    cum = model._cum
    states = model.current_state
    for user, state in enumerate(states):
        u = rng.random()
        row = cum[state]
        nxt = 0
        while nxt < len(row) - 1 and u >= row[nxt]:
            nxt += 1
        states[user] = nxt
    return model


def initial_states(model: MarkovModulated, num_users: int, rng: np.random.Generator) -> list[int]:
    '''Per-user starting states drawn from the chain's stationary law.'''
    pi = np.clip(stationary_distribution(model.gamma), 0.0, None)
    pi = pi / pi.sum()
    return rng.choice(len(pi), size=num_users, p=pi).tolist()
