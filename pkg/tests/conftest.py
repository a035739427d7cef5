import numpy as np
import pytest

from dyninfer.model import Scenario


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def zero_one_loss(n_x, n_y, n_yhat):
    loss = np.ones((n_x, n_y, n_yhat))
    for y in range(min(n_y, n_yhat)):
        loss[:, y, y] = 0.0
    return loss


def steering_scenario():
    """Two observations; estimating 1 at x=0 is myopically worse but moves to the easy state.

    At x=0, P(Y=0)=0.6; at x=1, Y=0 surely. Estimating 1 sends x to 1, estimating
    0 keeps x at 0. Under 0-1 loss with n=2 the optimal round-1 estimate at x=0 is 1.
    """
    quantity = [[0.6, 0.4], [1.0, 0.0]]
    kernel = np.zeros((2, 2, 2))
    kernel[:, 0, 0] = 1.0
    kernel[:, 1, 1] = 1.0
    return Scenario(2, 2, 2, 2, [1.0, 0.0], [kernel], zero_one_loss(2, 2, 2), quantity=quantity)


# Acceptance criteria record their outcome here; the summary hook prints one line each.
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        status, title, seconds, detail = ACCEPTANCE[num]
        line = f"[{status}] criterion {num:>2}: {title} ({seconds:.1f} s)"
        if detail:
            line += f" {detail}"
        terminalreporter.write_line(line)
