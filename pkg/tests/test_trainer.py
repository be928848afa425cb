"""PPO machinery tests: GAE, losses, rollouts, updates."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from semdrive.advisor import Advisor, AdvisorConfig, EMBEDDINGS, MetaAction
from semdrive.env import DrivingEnv
from semdrive.policy import RunningNorm, init_params
from semdrive.simworld import load_bundled_map
from semdrive.trainer import (
    EnvironmentFault,
    RolloutBuffer,
    TrainConfig,
    collect_rollout,
    compute_gae,
    consistency_loss,
    ppo_loss,
    total_loss,
    train,
    update,
)

torch.set_num_threads(1)


# ---------------------------------------------------------------------------
# GAE

def gae_direct_sum(rewards, values, dones, bootstrap, gamma, lam):
    """Oracle: advantage as the explicit sum of discounted TD residuals."""
    n = len(rewards)
    vals = list(values) + [bootstrap]
    deltas = []
    for t in range(n):
        next_v = 0.0 if dones[t] else vals[t + 1]
        deltas.append(rewards[t] + gamma * next_v - vals[t])
    adv = np.zeros(n)
    for t in range(n):
        acc = 0.0
        factor = 1.0
        for k in range(t, n):
            acc += factor * deltas[k]
            if dones[k]:
                break
            factor *= gamma * lam
        adv[t] = acc
    return adv


def test_gae_matches_direct_sum_on_random_sequences():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = 100
        rewards = rng.normal(size=n)
        values = rng.normal(size=n)
        dones = (rng.random(n) < 0.1).astype(float)
        bootstrap = float(rng.normal())
        gamma = float(rng.uniform(0.9, 0.999))
        lam = float(rng.uniform(0.8, 1.0))
        adv, ret = compute_gae(rewards, values, dones, bootstrap, gamma, lam)
        oracle = gae_direct_sum(rewards, values, dones, bootstrap, gamma, lam)
        np.testing.assert_allclose(adv, oracle, atol=1e-10)
        np.testing.assert_allclose(ret, oracle + values, atol=1e-10)


def test_gae_single_step_closed_form():
    adv, ret = compute_gae([1.0], [0.5], [0.0], 2.0, 0.98, 0.95)
    assert adv[0] == pytest.approx(1.0 + 0.98 * 2.0 - 0.5)
    assert ret[0] == pytest.approx(adv[0] + 0.5)


def test_gae_done_blocks_bootstrap():
    adv, _ = compute_gae([1.0], [0.5], [1.0], 100.0, 0.98, 0.95)
    assert adv[0] == pytest.approx(0.5)


def test_gae_length_mismatch():
    with pytest.raises(ValueError, match="equal length"):
        compute_gae([1.0, 2.0], [0.5], [0.0], 0.0, 0.98, 0.95)


# ---------------------------------------------------------------------------
# consistency loss

def softmax_oracle(a, j, kappa):
    logits = [kappa * float(np.dot(w, a)) for w in EMBEDDINGS]
    m = max(logits)
    exps = [math.exp(l - m) for l in logits]
    return -math.log(exps[j] / sum(exps))


def test_consistency_zero_action_is_uniform():
    a = torch.zeros(1, 2)
    for j in range(5):
        loss = consistency_loss(a, torch.tensor([j]))
        assert float(loss) == pytest.approx(math.log(5.0), abs=1e-12)


@given(
    st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 4), st.floats(0.1, 5.0)
)
@settings(max_examples=200)
def test_consistency_matches_softmax_oracle(ax, ay, j, kappa):
    loss = consistency_loss(torch.tensor([[ax, ay]]), torch.tensor([j]), kappa)
    assert float(loss) == pytest.approx(softmax_oracle((ax, ay), j, kappa), abs=1e-9)


@given(st.floats(0.01, 1.0))
def test_consistency_left_right_mirror_symmetry(mag):
    left = consistency_loss(
        torch.tensor([[0.0, -mag]]), torch.tensor([int(MetaAction.LEFT)])
    )
    right = consistency_loss(
        torch.tensor([[0.0, mag]]), torch.tensor([int(MetaAction.RIGHT)])
    )
    assert float(left) == pytest.approx(float(right), abs=1e-12)


def test_consistency_minimized_by_matching_embedding():
    for meta in MetaAction:
        a = torch.from_numpy(EMBEDDINGS[int(meta)]).unsqueeze(0)
        losses = [
            float(consistency_loss(a, torch.tensor([j]))) for j in range(5)
        ]
        if meta == MetaAction.IDLE:
            # the zero embedding scores every label equally
            assert losses == pytest.approx([math.log(5.0)] * 5)
        else:
            assert int(np.argmin(losses)) == int(meta)


def test_consistency_batched_shape():
    a = torch.randn(8, 2)
    idx = torch.randint(0, 5, (8,))
    loss = consistency_loss(a, idx)
    assert loss.shape == (8,)
    for i in range(8):
        single = consistency_loss(a[i : i + 1], idx[i : i + 1])
        assert float(loss[i]) == pytest.approx(float(single), abs=1e-12)


def test_consistency_rejects_bad_index():
    with pytest.raises(IndexError):
        consistency_loss(torch.zeros(1, 2), torch.tensor([5]))
    with pytest.raises(IndexError):
        consistency_loss(torch.zeros(1, 2), torch.tensor([-1]))


def test_consistency_gradient_pulls_toward_embedding():
    a = torch.zeros(1, 2, requires_grad=True)
    loss = consistency_loss(a, torch.tensor([int(MetaAction.FAST)])).mean()
    loss.backward()
    # moving along -grad should increase the FAST (+1, 0) component
    assert a.grad[0, 0] < 0


# ---------------------------------------------------------------------------
# losses on batches

def make_batch(n=32, seed=0):
    rng = np.random.default_rng(seed)
    return {
        "observations": torch.from_numpy(rng.normal(size=(n, 18))),
        "actions": torch.from_numpy(rng.normal(size=(n, 2)) * 0.3),
        "log_probs": torch.from_numpy(rng.normal(size=n) - 1.0),
        "advantages": torch.from_numpy(rng.normal(size=n)),
        "returns": torch.from_numpy(rng.normal(size=n)),
        "meta_indices": torch.from_numpy(rng.integers(0, 5, size=n)),
    }


def test_ppo_loss_stats_keys():
    model = init_params(0)
    loss, stats = ppo_loss(make_batch(), model, TrainConfig())
    assert torch.isfinite(loss)
    for key in ("policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl"):
        assert key in stats
    assert 0.0 <= stats["clip_fraction"] <= 1.0


def test_total_loss_reduces_to_ppo_when_lambda_zero():
    model = init_params(0)
    batch = make_batch()
    cfg0 = TrainConfig(lambda_cons=0.0)
    base, _ = ppo_loss(batch, model, cfg0)
    total, stats = total_loss(batch, model, cfg0)
    assert float(total.detach()) == float(base.detach())
    assert stats["consistency"] == 0.0


def test_total_loss_adds_weighted_consistency():
    model = init_params(0)
    batch = make_batch()
    cfg = TrainConfig(lambda_cons=0.7, kappa=1.3)
    base, _ = ppo_loss(batch, model, cfg)
    total, stats = total_loss(batch, model, cfg)
    with torch.no_grad():
        mean, _, _ = model(batch["observations"])
        cons = consistency_loss(mean, batch["meta_indices"], 1.3).mean()
    assert float(total.detach()) == pytest.approx(
        float(base.detach()) + 0.7 * float(cons), abs=1e-12
    )
    assert stats["consistency"] == pytest.approx(float(cons))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(gamma=0.0)
    with pytest.raises(ValueError):
        TrainConfig(gae_lambda=1.5)
    with pytest.raises(ValueError):
        TrainConfig(clip_range=0.0)
    with pytest.raises(ValueError):
        TrainConfig(lambda_cons=-0.1)


# ---------------------------------------------------------------------------
# rollout collection

@pytest.fixture(scope="module")
def seen_map():
    return load_bundled_map("map_seen")


def small_config(**kw):
    base = dict(n_steps=64, minibatch_size=32, n_epochs=2, total_steps=128, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_collect_rollout_exact_length(seen_map):
    env = DrivingEnv(seen_map, max_steps=40)     # forces several resets
    model = init_params(0)
    advisor = Advisor(AdvisorConfig(backend="oracle"))
    norm = RunningNorm()
    rng = np.random.default_rng(0)
    buf = collect_rollout(env, model, advisor, small_config(), norm, rng)
    assert len(buf) == 64
    assert buf.advantages is not None and len(buf.advantages) == 64
    assert buf.episode_stats                      # at least one episode ended
    assert all(s["length"] <= 40 for s in buf.episode_stats)


def test_collect_rollout_carries_episode_state(seen_map):
    env = DrivingEnv(seen_map, max_steps=500)
    model = init_params(0)
    advisor = Advisor(AdvisorConfig(backend="none"))
    norm = RunningNorm()
    rng = np.random.default_rng(0)
    state: dict = {}
    collect_rollout(env, model, advisor, small_config(), norm, rng, state)
    mid_steps = state["steps"]
    collect_rollout(env, model, advisor, small_config(), norm, rng, state)
    # the running episode continued across the rollout boundary
    assert state["steps"] >= mid_steps or state["steps"] < 64


def test_collect_rollout_wraps_env_failures(seen_map):
    env = DrivingEnv(seen_map, max_steps=100)
    model = init_params(0)
    advisor = Advisor(AdvisorConfig(backend="none"))
    norm = RunningNorm()

    original = env.step
    calls = {"n": 0}

    def exploding(action):
        calls["n"] += 1
        if calls["n"] > 10:
            raise RuntimeError("sensor dropout")
        return original(action)

    env.step = exploding
    with pytest.raises(EnvironmentFault, match="after 10 transitions"):
        collect_rollout(env, model, advisor, small_config(), norm, np.random.default_rng(0))


def test_rollout_meta_indices_follow_advisor(seen_map):
    env = DrivingEnv(seen_map, max_steps=200)
    model = init_params(0)
    advisor = Advisor(AdvisorConfig(backend="oracle", query_interval=10))
    norm = RunningNorm()
    buf = collect_rollout(
        env, model, advisor, small_config(), norm, np.random.default_rng(0)
    )
    assert set(buf.meta_indices) <= set(range(5))
    for i, j in enumerate(buf.meta_indices):
        np.testing.assert_array_equal(buf.embeddings[i], EMBEDDINGS[j])


# ---------------------------------------------------------------------------
# update and train loop

def test_update_runs_and_changes_parameters(seen_map):
    env = DrivingEnv(seen_map, max_steps=100)
    model = init_params(0)
    advisor = Advisor(AdvisorConfig(backend="oracle"))
    norm = RunningNorm()
    rng = np.random.default_rng(0)
    cfg = small_config(lambda_cons=0.5)
    buf = collect_rollout(env, model, advisor, cfg, norm, rng)
    before = [p.detach().clone() for p in model.parameters()]
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-3)
    stats = update(model, optimizer, buf, cfg, rng)
    assert any(
        not torch.equal(a, b) for a, b in zip(before, model.parameters())
    )
    assert math.isfinite(stats["loss"])
    assert stats["consistency"] > 0.0


def test_update_requires_advantages():
    buf = RolloutBuffer(
        observations=np.zeros((4, 18)), actions=np.zeros((4, 2)),
        log_probs=np.zeros(4), values=np.zeros(4), rewards=np.zeros(4),
        dones=np.zeros(4), meta_indices=np.zeros(4, dtype=int),
        embeddings=np.zeros((4, 2)), bootstrap_value=0.0,
    )
    model = init_params(0)
    optimizer = torch.optim.Adam(model.parameters())
    with pytest.raises(ValueError, match="advantages"):
        update(model, optimizer, buf, TrainConfig(), np.random.default_rng(0))


def test_train_writes_curves_and_checkpoint(tmp_path, seen_map):
    env = DrivingEnv(seen_map, max_steps=60)
    advisor = Advisor(AdvisorConfig(backend="oracle"))
    cfg = small_config(total_steps=128)
    model, norm = train(env, advisor, cfg, tmp_path)
    curves = (tmp_path / "curves.csv").read_text().splitlines()
    assert curves[0].startswith("step,episode_reward,")
    assert len(curves) == 3                       # header + 2 updates
    assert (tmp_path / "checkpoint.npz").exists()
    assert norm.count == 128


def test_train_is_deterministic(tmp_path, seen_map):
    cfg = small_config(total_steps=128)

    def run(tag):
        env = DrivingEnv(seen_map, max_steps=60)
        advisor = Advisor(AdvisorConfig(backend="oracle"))
        out = tmp_path / tag
        train(env, advisor, cfg, out)
        return (out / "curves.csv").read_bytes()

    assert run("a") == run("b")
