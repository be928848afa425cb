"""Network, distribution, normalizer, and checkpoint tests."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from semdrive.mdpcore import OBS_DIM
from semdrive.policy import (
    ACTION_DIM,
    LOG_STD_INIT,
    ActorCritic,
    CheckpointError,
    RunningNorm,
    entropy,
    init_params,
    load_checkpoint,
    log_prob,
    sample,
    save_checkpoint,
)


def test_forward_shapes_and_ranges():
    model = init_params(0)
    obs = torch.randn(7, OBS_DIM)
    mean, std, value = model(obs)
    assert mean.shape == (7, ACTION_DIM)
    assert std.shape == (7, ACTION_DIM)
    assert value.shape == (7,)
    assert torch.all(mean >= -1.0) and torch.all(mean <= 1.0)
    assert torch.all(std > 0)


def test_forward_single_observation():
    model = init_params(0)
    mean, std, value = model(torch.zeros(OBS_DIM))
    assert mean.shape == (ACTION_DIM,)
    assert value.dim() == 0


def test_forward_rejects_wrong_width():
    model = init_params(0)
    with pytest.raises(ValueError, match="observation"):
        model(torch.zeros(OBS_DIM + 1))


def test_initial_std_matches_log_std_init():
    model = init_params(0)
    _, std, _ = model(torch.zeros(OBS_DIM))
    np.testing.assert_allclose(std.detach().numpy(), math.exp(LOG_STD_INIT))


def test_init_is_deterministic_per_seed():
    a = init_params(3)
    b = init_params(3)
    c = init_params(4)
    for (pa, pb) in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert any(
        not torch.equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters())
    )


def test_everything_is_float64():
    model = init_params(0)
    assert all(p.dtype == torch.float64 for p in model.parameters())


# ---------------------------------------------------------------------------
# Gaussian density

def scipy_style_logpdf(mean, std, x):
    """Independent per-dimension normal log-density, summed."""
    total = 0.0
    for m, s, v in zip(mean, std, x):
        total += -0.5 * math.log(2 * math.pi) - math.log(s) - 0.5 * ((v - m) / s) ** 2
    return total


@given(
    st.lists(st.floats(-2, 2), min_size=2, max_size=2),
    st.lists(st.floats(0.1, 3), min_size=2, max_size=2),
    st.lists(st.floats(-4, 4), min_size=2, max_size=2),
)
@settings(max_examples=100)
def test_log_prob_matches_direct_formula(mean, std, x):
    lp = log_prob(torch.tensor(mean), torch.tensor(std), torch.tensor(x))
    assert float(lp) == pytest.approx(scipy_style_logpdf(mean, std, x), abs=1e-10)


@given(st.lists(st.floats(0.1, 3), min_size=2, max_size=2))
def test_entropy_closed_form(std):
    expected = sum(0.5 * (1 + math.log(2 * math.pi)) + math.log(s) for s in std)
    assert float(entropy(torch.tensor(std))) == pytest.approx(expected, abs=1e-10)


def test_sample_statistics():
    rng = np.random.default_rng(0)
    mean = np.array([0.3, -0.2])
    std = np.array([0.5, 1.5])
    draws = np.array([sample(mean, std, rng) for _ in range(20000)])
    np.testing.assert_allclose(draws.mean(axis=0), mean, atol=0.03)
    np.testing.assert_allclose(draws.std(axis=0), std, atol=0.03)


def test_sample_is_reproducible_for_equal_rng_state():
    a = sample(np.zeros(2), np.ones(2), np.random.default_rng(5))
    b = sample(np.zeros(2), np.ones(2), np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# RunningNorm

@given(
    st.lists(
        st.lists(st.floats(-100, 100), min_size=3, max_size=3),
        min_size=2, max_size=60,
    )
)
@settings(max_examples=60)
def test_running_norm_matches_numpy(batches):
    norm = RunningNorm(dim=3)
    for row in batches:
        norm.update(np.asarray(row, dtype=float))
    data = np.asarray(batches, dtype=float)
    np.testing.assert_allclose(norm.mean, data.mean(axis=0), atol=1e-8)
    np.testing.assert_allclose(norm.std, data.std(axis=0) + norm.eps, atol=1e-6)


def test_running_norm_identity_before_two_samples():
    norm = RunningNorm(dim=2)
    np.testing.assert_array_equal(norm.normalize(np.array([3.0, -1.0])), [3.0, -1.0])


def test_running_norm_freeze():
    norm = RunningNorm(dim=2)
    norm.update(np.array([1.0, 1.0]))
    norm.update(np.array([3.0, 5.0]))
    frozen_mean = norm.mean.copy()
    norm.frozen = True
    norm.update(np.array([100.0, 100.0]))
    np.testing.assert_array_equal(norm.mean, frozen_mean)


def test_running_norm_state_round_trip():
    norm = RunningNorm(dim=2)
    for v in ([1.0, 2.0], [3.0, -2.0], [0.5, 0.0]):
        norm.update(np.asarray(v))
    other = RunningNorm(dim=2)
    other.load_state(norm.state())
    x = np.array([0.7, -0.3])
    np.testing.assert_array_equal(norm.normalize(x), other.normalize(x))


# ---------------------------------------------------------------------------
# checkpoints

def test_checkpoint_round_trip(tmp_path):
    model = init_params(1)
    norm = RunningNorm()
    rng = np.random.default_rng(0)
    for _ in range(10):
        norm.update(rng.normal(size=OBS_DIM))
    path = tmp_path / "ck.npz"
    save_checkpoint(path, model, norm, extra={"agent": "covlm"})
    loaded, lnorm, extra = load_checkpoint(path)
    obs = torch.from_numpy(rng.normal(size=OBS_DIM))
    m1, s1, v1 = model(obs)
    m2, s2, v2 = loaded(obs)
    assert torch.equal(m1, m2) and torch.equal(s1, s2) and torch.equal(v1, v2)
    np.testing.assert_array_equal(norm.mean, lnorm.mean)
    assert lnorm.frozen
    assert extra == {"agent": "covlm"}


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "junk.npz"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError, match="parse"):
        load_checkpoint(path)


def test_checkpoint_rejects_wrong_version(tmp_path):
    import json

    model = init_params(0)
    norm = RunningNorm()
    path = tmp_path / "ck.npz"
    save_checkpoint(path, model, norm)
    data = dict(np.load(path))
    manifest = json.loads(bytes(data["manifest"]).decode())
    manifest["version"] = 99
    data["manifest"] = np.frombuffer(json.dumps(manifest).encode(), dtype=np.uint8)
    np.savez(path, **data)
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_checkpoint_rejects_shape_mismatch(tmp_path):
    model = init_params(0)
    norm = RunningNorm()
    path = tmp_path / "ck.npz"
    save_checkpoint(path, model, norm)
    data = dict(np.load(path))
    key = "param/log_std"
    data[key] = np.zeros(5)
    np.savez(path, **data)
    with pytest.raises(CheckpointError, match="shape|log_std"):
        load_checkpoint(path)


def test_checkpoint_rejects_missing_tensor(tmp_path):
    model = init_params(0)
    norm = RunningNorm()
    path = tmp_path / "ck.npz"
    save_checkpoint(path, model, norm)
    data = dict(np.load(path))
    del data["param/log_std"]
    np.savez(path, **data)
    with pytest.raises(CheckpointError, match="missing"):
        load_checkpoint(path)
