import numpy as np
import pytest

from vaeverif.model import AffineLayer, VaeConfig, init_params
from vaeverif.training import fit

_CRITERIA = []


def random_model(config, seed, scale=0.7):
    """Model with all weights and biases drawn N(0, scale^2); biases at 0.7 scale."""
    rng = np.random.default_rng(seed)
    model = init_params(config, seed)
    layers = {
        name: AffineLayer(rng.normal(0, scale, layer.weights.shape),
                          rng.normal(0, 0.7 * scale, layer.bias.shape))
        for name, layer in model.named_layers().items()
    }
    return model.with_layers(layers)


@pytest.fixture(scope="session")
def toy_1d_model():
    """A 1-D VAE trained to an ELBO plateau on a two-component mixture."""
    rng = np.random.default_rng(7)
    x = np.concatenate([rng.normal(-1.5, 0.4, 600), rng.normal(1.5, 0.4, 600)])[:, None]
    config = VaeConfig(d_x=1, d_d=4, d_h=1, beta=1.0, gamma=0.9, eta=3e-3,
                       minibatch=50, max_iters=1500, seed=3)
    model, _ = fit(x, config)
    return model


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (passed, detail)."""
    def record(passed, detail):
        _CRITERIA.append((request.node.name, bool(passed), detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def speaker_bench():
    """Converged VAE on the shared synthetic speaker benchmark."""
    from bench import build_bench
    return build_bench()
