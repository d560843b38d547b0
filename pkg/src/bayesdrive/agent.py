"""Bayesian reinforcement-learning agent over an adaptive Gaussian mixture.

The Q table couples mixture components to actions. Offset Q values are read
as unnormalised probabilities ``p(m | a)`` and ``p(a)``; combining them with
the component likelihoods gives the action posterior used for decisions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from bayesdrive.core import N_ACTIONS, AgentConfig
from bayesdrive.mixture import Mixture, NIGPrior


class WeightCase(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"
    MIDDLE = "middle"


@dataclass(frozen=True)
class StepDiagnostics:
    td_error: float
    weight: float | None
    weight_case: WeightCase | None
    created_component: int | None
    m_t: int
    d_t: float
    a_next: int
    m_next: int
    chosen_action: int = -1
    greedy_action: int = -1


def _normalize(mass: np.ndarray) -> np.ndarray:
    """Normalise non-negative masses; all-zero mass becomes uniform."""
    total = mass.sum()
    if total > 0 and np.isfinite(total):
        return mass / total
    return np.full(mass.shape, 1.0 / mass.shape[0])


def q_offset(q: np.ndarray) -> float:
    """Shift that makes every ``q + offset`` non-negative."""
    q = np.asarray(q)
    if q.size == 0:
        raise ValueError("q_offset of an empty table")
    qmin = float(q.min())
    a = abs(qmin)
    return a / (1.0 + a) - qmin


class Agent:
    """Mixture + Q table + schedules; owns nothing random except what is passed in."""

    def __init__(self, config: AgentConfig | None = None, prior: NIGPrior | None = None,
                 n_actions: int = N_ACTIONS):
        self.config = config or AgentConfig()
        self.mixture = Mixture(prior if prior is not None else NIGPrior.default(cfg=self.config.prior))
        self.n_actions = n_actions
        self.q = np.zeros((0, n_actions))
        self.alpha = self.config.alpha.init
        self.tau = self.config.tau.init
        self.rho = self.config.rho.init
        self.steps = 0

    # -- structure -------------------------------------------------------

    @property
    def n_components(self) -> int:
        return len(self.mixture)

    def bootstrap(self, s0) -> int:
        """Create the first component at the initial state, with a zero Q row."""
        if self.n_components:
            raise RuntimeError("agent already bootstrapped")
        return self.create_component(s0)

    def create_component(self, s) -> int:
        m = self.mixture.create_component(s)
        self.q = np.vstack([self.q, np.zeros((1, self.n_actions))])
        return m

    def advance_schedules(self) -> None:
        cfg = self.config
        self.alpha = cfg.alpha.step(self.alpha)
        self.tau = cfg.tau.step(self.tau)
        self.rho = cfg.rho.step(self.rho)
        self.steps += 1

    # -- probabilities ---------------------------------------------------

    def likelihoods(self, s) -> np.ndarray:
        """``p(s | m)`` for every component, scaled so the largest is 1."""
        ll = self.mixture.loglik_all(s)
        return np.exp(ll - ll.max())

    def _shifted_q(self) -> np.ndarray:
        return self.q + q_offset(self.q)

    def p_m_given_a(self) -> np.ndarray:
        """Column-normalised offset Q: entry ``[m, a]`` is ``p(m | a)``."""
        qs = self._shifted_q()
        return np.column_stack([_normalize(qs[:, a]) for a in range(self.n_actions)])

    def p_a(self) -> np.ndarray:
        return _normalize(self._shifted_q().sum(axis=0))

    def p_m(self) -> np.ndarray:
        return _normalize(self._shifted_q().sum(axis=1))

    def action_posterior(self, s) -> np.ndarray:
        lik = self.likelihoods(s)
        mass = self.p_a() * (lik @ self.p_m_given_a())
        return _normalize(mass)

    def component_posterior(self, s, a: int) -> np.ndarray:
        lik = self.likelihoods(s)
        mass = lik * self.p_m_given_a()[:, a]
        if mass.sum() > 0:
            return mass / mass.sum()
        return _normalize(lik)

    def component_posterior_not(self, s, a: int) -> np.ndarray:
        lik = self.likelihoods(s)
        return _normalize(lik * (1.0 - self.p_m_given_a()[:, a]))

    def component_posterior_marginal(self, s) -> np.ndarray:
        """``p(m | s)`` with the component prior taken from the offset Q row sums."""
        return _normalize(self.likelihoods(s) * self.p_m())

    # -- learning --------------------------------------------------------

    def greedy_action(self, s) -> int:
        # argmax returns the first maximum, i.e. the lowest action index
        return int(np.argmax(self.action_posterior(s)))

    def td_error(self, r: float, a_t: int, m_t: int, a_next: int, m_next: int,
                 terminal: bool = False) -> float:
        target = r if terminal else r + self.config.gamma * self.q[m_next, a_next]
        return float(target - self.q[m_t, a_t])

    def update_weight(self, td: float, s, a_t: int, m_t: int) -> tuple[float, WeightCase]:
        cfg = self.config
        if td > cfg.t_upper:
            return float(self.component_posterior(s, a_t)[m_t]), WeightCase.UPPER
        if td < cfg.t_lower:
            return float(self.component_posterior_not(s, a_t)[m_t]), WeightCase.LOWER
        return float(self.component_posterior_marginal(s)[m_t]), WeightCase.MIDDLE

    def q_update(self, m_t: int, a_t: int, alpha: float, w: float, td: float) -> None:
        self.q[m_t, a_t] += alpha * w * td

    def behavior_distribution(self, s, tau: float | None = None) -> tuple[int, np.ndarray]:
        tau = self.tau if tau is None else tau
        if not 0.0 <= tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {tau}")
        greedy = self.greedy_action(s)
        dist = np.full(self.n_actions, (1.0 - tau) / self.n_actions)
        dist[greedy] += tau
        return greedy, dist

    def select_action(self, s, rng: np.random.Generator, tau: float | None = None) -> tuple[int, np.ndarray]:
        """Sample from the temperature-greedy behaviour policy.

        Returns the sampled action and the distribution it was drawn from.
        """
        _, dist = self.behavior_distribution(s, tau)
        a = int(rng.choice(self.n_actions, p=dist))
        return a, dist

    def step(self, s_t, a_t: int, r_t: float, s_next, terminal: bool = False,
             allow_create: bool = True) -> StepDiagnostics:
        """One learning step on the transition ``(s_t, a_t, r_t, s_next)``.

        Uses the current alpha and rho, then advances all schedules.
        """
        if self.n_components == 0:
            raise RuntimeError("agent must be bootstrapped before stepping")
        greedy_t = self.greedy_action(s_t)
        a_next = self.greedy_action(s_next)
        m_next = int(np.argmax(self.component_posterior(s_next, a_next)))
        m_t, d_t = self.mixture.nearest_component(s_t)
        td = self.td_error(r_t, a_t, m_t, a_next, m_next, terminal)

        created = None
        w = case = None
        if d_t < self.rho or td > self.config.t_lower or not allow_create:
            w, case = self.update_weight(td, s_t, a_t, m_t)
            self.mixture.update_component(m_t, s_t)
            self.q_update(m_t, a_t, self.alpha, w, td)
        else:
            created = self.create_component(s_t)

        self.advance_schedules()
        return StepDiagnostics(td, w, case, created, m_t, d_t, a_next, m_next, int(a_t), greedy_t)

    # -- persistence -----------------------------------------------------

    def copy(self) -> "Agent":
        out = Agent(self.config, self.mixture.prior, self.n_actions)
        out.mixture = self.mixture.copy()
        out.q = self.q.copy()
        out.alpha, out.tau, out.rho, out.steps = self.alpha, self.tau, self.rho, self.steps
        return out

    def state_dict(self) -> dict:
        return {
            "n_actions": self.n_actions,
            "mixture": self.mixture.to_dict(),
            "q": self.q.tolist(),
            "schedule": {"alpha": self.alpha, "tau": self.tau, "rho": self.rho, "steps": self.steps},
        }

    @classmethod
    def from_state_dict(cls, d: dict, config: AgentConfig) -> "Agent":
        mixture = Mixture.from_dict(d["mixture"])
        out = cls(config, mixture.prior, int(d["n_actions"]))
        out.mixture = mixture
        out.q = np.asarray(d["q"], dtype=float).reshape(-1, out.n_actions)
        sched = d["schedule"]
        out.alpha, out.tau, out.rho = float(sched["alpha"]), float(sched["tau"]), float(sched["rho"])
        out.steps = int(sched["steps"])
        if out.q.shape[0] != len(mixture):
            raise ValueError("checkpoint Q rows do not match mixture size")
        return out
