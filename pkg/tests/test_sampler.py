from collections import Counter

import numpy as np
import pytest
from oracles import enumerate_mask_probs, total_variation

from probitsel import (
    DataSet,
    DiagonalCov,
    GammaMask,
    HyperParams,
    RngHandle,
    SimConfig,
    generate,
    load_run_report,
    mh_gamma_step,
    propose_swap,
    rank_selections,
    run_chain,
    save_run_report,
)


def _plain_data(X, y=None):
    n = X.shape[0]
    if y is None:
        y = np.tile([0, 1], (n + 1) // 2)[:n]
    return DataSet(y=y, X=X, feature_names=tuple(f"f{j}" for j in range(X.shape[1])))


def test_propose_swap_changes_exactly_two_positions():
    rng = RngHandle(0)
    gamma = GammaMask.from_indices([0, 1], 4)
    for _ in range(200):
        prop = propose_swap(rng, gamma, 2)
        assert prop.d == 2
        assert int(np.sum(prop.bits != gamma.bits)) == 2


def test_propose_swap_preserves_popcount():
    rng = RngHandle(1)
    gamma = GammaMask.random(rng, 40, 7)
    for _ in range(2000):
        gamma = propose_swap(rng, gamma, 4)
        assert gamma.d == 7


def test_propose_swap_kernel_is_uniform():
    rng = RngHandle(2)
    gamma = GammaMask.from_indices([0, 1], 4)
    counts = Counter()
    trials = 100000
    for _ in range(trials):
        counts[tuple(propose_swap(rng, gamma, 2).indices)] += 1
    assert set(counts) == {(1, 2), (1, 3), (0, 2), (0, 3)}
    sigma = np.sqrt(0.25 * 0.75 / trials)
    for key in counts:
        assert abs(counts[key] / trials - 0.25) < 3.5 * sigma


def test_propose_swap_validates_bounds():
    rng = RngHandle(3)
    gamma = GammaMask.from_indices([0], 4)
    with pytest.raises(ValueError):
        propose_swap(rng, gamma, 7)  # odd
    with pytest.raises(ValueError):
        propose_swap(rng, gamma, 4)  # r/2 = 2 > d = 1


def test_mh_step_degenerate_space_returns_init():
    gen = np.random.default_rng(4)
    data = _plain_data(gen.standard_normal((6, 2)))
    gamma = GammaMask.from_indices([0, 1], 2)  # p == d: nowhere to move
    hp = HyperParams(num_selected=2, swap_size=2, mh_iters=10, total_iters=2,
                     burn_in=1, mode="fixed_effects_only")
    rng = RngHandle(5)
    out = mh_gamma_step(rng, data, gamma, gen.standard_normal(6), None, hp)
    assert np.array_equal(out.indices, gamma.indices)


def test_mh_chain_matches_enumeration_small_instance():
    gen = np.random.default_rng(6)
    n, p, d = 12, 6, 2
    X = gen.standard_normal((n, p))
    data = _plain_data(X)
    L = gen.standard_normal(n)
    c = 5.0
    hp = HyperParams(c=c, include_prob=0.5, num_selected=d, swap_size=2, mh_iters=1,
                     total_iters=2, burn_in=1, mode="fixed_effects_only")
    exact = enumerate_mask_probs(X, L, c=c, pi=0.5, d=d)

    rng = RngHandle(7)
    gamma = GammaMask.from_indices([0, 1], p)
    counts = Counter()
    steps = 40000
    for _ in range(steps):
        gamma = mh_gamma_step(rng, data, gamma, L, None, hp)
        counts[tuple(gamma.indices)] += 1
    empirical = {k: v / steps for k, v in counts.items()}
    assert total_variation(exact, empirical) < 0.05


def test_run_chain_counting_identity():
    gen = np.random.default_rng(8)
    data = _plain_data(gen.standard_normal((20, 8)))
    hp = HyperParams(num_selected=3, swap_size=2, mh_iters=5, total_iters=10,
                     burn_in=5, seed=1, mode="fixed_effects_only")
    report = run_chain(data, hp)
    assert report.selection_counts.sum() == 3 * 5
    assert (report.selection_counts >= 0).all()
    assert (report.selection_counts <= report.kept).all()


def test_run_chain_deterministic_given_seed():
    cfg = SimConfig(n=40, p=15, support=(0, 1), beta_values=(1.0, -1.0),
                    u_levels=(0.5, -0.5), group_sizes=(20, 20), seed=2)
    data, _ = generate(cfg)
    hp = HyperParams(num_selected=2, swap_size=2, mh_iters=20, total_iters=60,
                     burn_in=30, seed=3, cov=DiagonalCov(shape=1, scale=1))
    a = run_chain(data, hp)
    b = run_chain(data, hp)
    assert np.array_equal(a.selection_counts, b.selection_counts)
    assert np.allclose(a.final_state.L, b.final_state.L)
    c = run_chain(data, hp.with_(seed=4))
    assert not np.array_equal(a.selection_counts, c.selection_counts) or not np.allclose(
        a.final_state.L, c.final_state.L
    )


def test_run_chain_mixed_mode_requires_z():
    gen = np.random.default_rng(9)
    data = _plain_data(gen.standard_normal((10, 4)))
    hp = HyperParams(num_selected=2, swap_size=2, mh_iters=2, total_iters=4, burn_in=2)
    with pytest.raises(ValueError, match="random-effect design"):
        run_chain(data, hp)


def test_run_chain_final_state_invariants():
    cfg = SimConfig(n=30, p=10, support=(0,), beta_values=(1.0,),
                    u_levels=(0.0, 0.0), group_sizes=(15, 15), seed=5)
    data, _ = generate(cfg)
    hp = HyperParams(num_selected=2, swap_size=2, mh_iters=10, total_iters=30,
                     burn_in=10, seed=6, cov=DiagonalCov(shape=1, scale=1))
    report = run_chain(data, hp)
    state = report.final_state
    assert state.gamma.d == 2
    assert ((state.L > 0) == (data.y == 1)).all()
    np.linalg.cholesky(state.D)


def test_run_chain_fixed_gamma_counts_every_iteration():
    gen = np.random.default_rng(10)
    data = _plain_data(gen.standard_normal((20, 6)))
    hp = HyperParams(num_selected=2, swap_size=2, mh_iters=5, total_iters=12,
                     burn_in=4, seed=7, mode="fixed_effects_only")
    frozen = GammaMask.from_indices([1, 4], 6)
    report = run_chain(data, hp, fixed_gamma=frozen)
    expected = np.zeros(6, dtype=int)
    expected[[1, 4]] = report.kept
    assert np.array_equal(report.selection_counts, expected)
    assert report.mh_accept_rate == 0.0


def test_run_chain_fixed_effects_only_ignores_groups():
    cfg = SimConfig(n=40, p=12, support=(0, 1), beta_values=(1.5, -1.5),
                    u_levels=(2.0, -2.0), group_sizes=(20, 20), seed=11)
    data, _ = generate(cfg)
    hp = HyperParams(num_selected=2, swap_size=2, mh_iters=10, total_iters=40,
                     burn_in=20, seed=12, mode="fixed_effects_only")
    report = run_chain(data, hp)
    assert report.final_state.U is None
    assert report.final_state.D is None
    assert report.selection_counts.sum() == 2 * report.kept


def test_run_chain_rejects_bad_init():
    from probitsel import ChainState

    gen = np.random.default_rng(13)
    data = _plain_data(gen.standard_normal((10, 4)))
    hp = HyperParams(num_selected=2, swap_size=2, mh_iters=2, total_iters=4,
                     burn_in=2, mode="fixed_effects_only")
    bad_latents = np.where(data.y == 1, -1.0, 1.0)  # signs flipped
    state = ChainState(
        gamma=GammaMask.from_indices([0, 1], 4),
        beta_gamma=np.zeros(2), D=None, L=bad_latents, U=None,
    )
    with pytest.raises(ValueError, match="disagree"):
        run_chain(data, hp, init=state)


def test_run_chain_init_state_is_used():
    from probitsel import ChainState

    gen = np.random.default_rng(14)
    data = _plain_data(gen.standard_normal((10, 4)))
    hp = HyperParams(num_selected=2, swap_size=2, mh_iters=1, total_iters=2,
                     burn_in=1, seed=15, mode="fixed_effects_only")
    good_latents = np.where(data.y == 1, 0.5, -0.5)
    state = ChainState(
        gamma=GammaMask.from_indices([2, 3], 4),
        beta_gamma=np.zeros(2), D=None, L=good_latents, U=None,
    )
    report = run_chain(data, hp, init=state)
    assert report.selection_counts.sum() == 2


def test_traces_are_recorded_when_requested():
    cfg = SimConfig(n=30, p=8, support=(0,), beta_values=(1.0,),
                    u_levels=(0.0, 0.0), group_sizes=(15, 15), seed=16)
    data, _ = generate(cfg)
    hp = HyperParams(num_selected=2, swap_size=2, mh_iters=5, total_iters=20,
                     burn_in=10, seed=17, cov=DiagonalCov(shape=1, scale=1))
    report = run_chain(data, hp, collect_traces=True)
    tr = report.traces
    assert tr.beta_norm.shape == (20,)
    assert np.isfinite(tr.log_marginal).all()
    assert (tr.d_diag_sum > 0).all()


def test_report_round_trip(tmp_path):
    gen = np.random.default_rng(18)
    data = _plain_data(gen.standard_normal((16, 5)))
    hp = HyperParams(c=9.0, num_selected=2, swap_size=2, mh_iters=3, total_iters=8,
                     burn_in=3, seed=19, mode="fixed_effects_only")
    report = run_chain(data, hp)
    path = tmp_path / "report.json"
    save_run_report(report, path, manifest_digest="abc123")
    back = load_run_report(path)
    assert np.array_equal(back.selection_counts, report.selection_counts)
    assert back.feature_names == report.feature_names
    assert back.config_echo == hp
    assert back.kept == report.kept
    ranking = rank_selections(back)
    assert ranking.kept == report.kept
