import math

import numpy as np
import pytest

from lqmkv.equilibrium import solve_nash
from lqmkv.model import make_game
from lqmkv.tracking_example import DEFAULT_PARAMS, build_game

# Stationary coefficients of the symmetric tracking game (b = sigma = delta = theta = xi = 1,
# rho = 3, targets 0 and 10), computed independently with mpmath at 30 digits.
K_SYM = -3.0 + math.sqrt(13.0)
LAM_SYM = (-3.0 + math.sqrt(13.0)) / 2.0
PI_SYM = -0.0439984626551590182
PI_HAT_SYM = -0.0219992313275795091
ETA_SYM = (0.262784634644590979, -3.07054869868874235)
A_SYM = -0.280776406404415137
RATE_SYM = 0.561552812808830275
VAR_SYM = 0.890388203202207569

ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def record(request):
    """Append one summary line for the acceptance report."""
    return request.config.stash[ACCEPTANCE_LINES].append


def scalar_game(
    *,
    horizon: float = math.inf,
    rho: float = 3.0,
    b=(1.0, 1.0),
    q=(2.0, 2.0),
    q_tilde=(-1.0, -1.0),
    n=(2.0, 2.0),
    n_tilde=(-1.0, -1.0),
    l_x=(0.0, -10.0),
    sigma: float = 1.0,
    x0: float = 0.0,
    x0_var: float = 0.0,
    p=(0.0, 0.0),
    b_x: float = 0.0,
):
    """Two players, scalar state, each with an own-control cost and a linear state cost."""
    players = []
    for i in range(2):
        blocks = [dict(N=0.0), dict(N=0.0)]
        blocks[i] = dict(N=n[i], N_tilde=n_tilde[i])
        players.append(dict(Q=q[i], Q_tilde=q_tilde[i], L_x=[l_x[i]], P=p[i], blocks=blocks))
    return make_game(
        d=1,
        control_dims=[1, 1],
        horizon=horizon,
        rho=rho,
        x0_mean=[x0],
        x0_cov=[[x0_var]],
        dynamics=dict(b_x=b_x, gamma=[[sigma]], controls=[dict(b=b[0]), dict(b=b[1])]),
        players=players,
    )


@pytest.fixture(scope="session")
def tracking_game():
    return build_game(DEFAULT_PARAMS)


@pytest.fixture(scope="session")
def tracking_law(tracking_game):
    return solve_nash(tracking_game)


@pytest.fixture(scope="session")
def finite_game():
    return scalar_game(horizon=1.0, x0=2.0, x0_var=0.25, p=(0.5, 1.0))


@pytest.fixture(scope="session")
def finite_law(finite_game):
    return solve_nash(finite_game)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_deterministic_game(rng, horizon: float = 1.0):
    """Two players, scalar state, zero volatility, no mean-field cost terms, random coefficients."""
    players = []
    for i in range(2):
        n_ii = rng.uniform(0.5, 2.0)
        i_ii = rng.uniform(-0.3, 0.3)
        blocks = [dict(N=rng.uniform(0.0, 0.5), L=[rng.uniform(-0.5, 0.5)]) for _ in range(2)]
        blocks[i] = dict(N=n_ii, I=[[i_ii]], L=[rng.uniform(-0.5, 0.5)])
        players.append(
            dict(
                Q=i_ii**2 / n_ii + rng.uniform(0.0, 2.0),
                L_x=[rng.uniform(-1.0, 1.0)],
                P=rng.uniform(0.0, 1.0),
                r=[rng.uniform(-0.5, 0.5)],
                blocks=blocks,
                cross=[dict(k=0, l=1, G=[[rng.uniform(-0.2, 0.2)]])],
            )
        )
    return make_game(
        d=1,
        control_dims=[1, 1],
        horizon=horizon,
        rho=rng.uniform(0.0, 1.0),
        x0_mean=[rng.uniform(-2.0, 2.0)],
        dynamics=dict(
            beta=[rng.uniform(-0.5, 0.5)],
            b_x=rng.uniform(-0.5, 0.5),
            gamma=[[0.0]],
            controls=[dict(b=rng.uniform(0.5, 1.5)), dict(b=rng.uniform(0.5, 1.5))],
        ),
        players=players,
    )
