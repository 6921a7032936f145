import pytest

from mcgs.envs import make_env
from mcgs.oracle import solved_table


@pytest.fixture(scope="session")
def ttt():
    return make_env("tictactoe")


@pytest.fixture(scope="session")
def ttt_table(ttt):
    """Exhaustive negamax table for tictactoe, built once per session."""
    return solved_table(ttt)
