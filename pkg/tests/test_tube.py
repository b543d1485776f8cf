import dataclasses

import numpy as np
import pytest

from reachcert import Ball, build_tube, greedy_policy, lipschitz_tube
from reachcert.exceptions import ConfigError
from reachcert.policy import ConstantPolicy, simulate
from reachcert.systems import Box
from reachcert.tube import lipschitz_tube_closed_form, nominal_rollout


def test_nominal_rollout_hand_iteration(lin):
    states, controls = nominal_rollout(lin, ConstantPolicy(lin, [0.0]), [1.0], 2)
    np.testing.assert_allclose(states[:, 0], [1.0, 1.01, 1.0201], atol=1e-15)
    assert controls.shape == (2, 1)


def test_nominal_rollout_single_step(lin):
    states, controls = nominal_rollout(lin, ConstantPolicy(lin, [0.5]), [-1.5], 1)
    assert states.shape == (2, 1) and controls.shape == (1, 1)
    with pytest.raises(ConfigError):
        nominal_rollout(lin, ConstantPolicy(lin, [0.5]), [-1.5], 0)


def test_nominal_rollout_needs_zero_disturbance(lin):
    # rejected when the model is built, before any rollout can use d = 0
    with pytest.raises(ConfigError):
        shifted = dataclasses.replace(lin, D=Box([0.1], [0.5]))
        nominal_rollout(shifted, ConstantPolicy(lin, [0.0]), [0.0], 3)


def test_greedy_nominal_descends(lin, lin_field, lin_lattice):
    pol = greedy_policy(lin_field, lin, lin_lattice)
    states, _ = nominal_rollout(lin, pol, [0.4], 30)
    assert np.all(np.diff(states[:, 0]) < 0)


def test_tube_radii_examples(lin):
    radii = lipschitz_tube(lin, 0.1, 5)
    assert radii[0] == 0.1
    assert radii[1] == pytest.approx(0.106, abs=1e-15)
    assert np.all(lipschitz_tube(lin, 0.0, 5, eps_d=0.0) == 0.0)
    assert np.all(np.diff(radii) >= 0)


@pytest.mark.parametrize("name", ["lin", "di2"])
def test_closed_form_agrees(name, request):
    model = request.getfixturevalue(name)
    radii = lipschitz_tube(model, 0.05, 50)
    closed = lipschitz_tube_closed_form(model.L_fx, model.L_fd, 0.05, model.eps_d, 50)
    np.testing.assert_allclose(radii, closed, rtol=1e-12, atol=1e-12)


def _containment(model, policy, x0, eps_x, T, seed):
    tube = build_tube(model, policy, x0, eps_x, T)
    rng = np.random.default_rng(seed)
    X0 = Ball(x0, eps_x).sample(rng, 1000)
    dseq = model.D.sample(rng, 1000 * T).reshape(1000, T, model.m_d)
    U = tube.nominal_controls
    states, _, _ = simulate(model, X0, T, lambda t, X: np.repeat(U[t][None], len(X), 0),
                            lambda t, X, Uu: dseq[:, t])
    dev = np.linalg.norm(states - tube.nominal_states[None], axis=-1)
    return np.max(dev - tube.radii[None])


def test_containment_linear1d(lin, lin_field, lin_lattice):
    pol = greedy_policy(lin_field, lin, lin_lattice)
    assert _containment(lin, pol, [0.3], 0.05, 30, 1) <= 1e-12


def test_containment_di2(di2, di2_field, di2_lattice):
    pol = greedy_policy(di2_field, di2, di2_lattice)
    assert _containment(di2, pol, [0.8, -0.4], 0.05, 30, 2) <= 1e-12
