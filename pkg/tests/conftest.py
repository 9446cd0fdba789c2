import numpy as np
import pytest

from smoothfp.game import GameClass, StochasticGame, random_ergodic_game


def seeded_game(k, num_states, actions, cls="General", mixing=0.2, discount=0.5, master=2024):
    """Game number ``k`` of a reproducible family, plus the generator that made it."""
    rng = np.random.default_rng(np.random.SeedSequence(master, spawn_key=(k,)))
    return random_ergodic_game(num_states, actions, cls if isinstance(cls, GameClass) else GameClass(cls), mixing, rng, discount), rng


def one_state_mdp(rewards, discount):
    r = np.asarray(rewards, dtype=float)
    return StochasticGame(1, (r.size,), r.reshape(1, 1, -1), np.ones((1, r.size, 1)), discount)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
