import numpy as np
import pytest

from _shared import dominated_regret
from fairbandit.core import GroupPartition, SyntheticConfig, generate_instance
from fairbandit.experiments import (ExperimentConfig, Trajectory, cumulative_regret,
                                    figure_preset, grid_from, lookup, run_trial,
                                    sensitive_pull_fraction, sweep, trailing_window,
                                    write_outputs)
from fairbandit.numerics import rng_stream
from fairbandit.policies import Decision, Policy, PolicyConfig, make_policy


class UniformRandom(Policy):
    name = "uniform"

    def select(self, slate, t, rng):
        return Decision(int(rng.integers(self.state.n)), True)


class AlwaysZero(Policy):
    name = "always_zero"

    def select(self, slate, t, rng):
        return Decision(0, False)


def traj(arms, true=None, biased=None):
    arms = np.asarray(arms)
    T = len(arms)
    true = np.zeros(T) if true is None else np.asarray(true, dtype=float)
    biased = np.zeros(T) if biased is None else np.asarray(biased, dtype=float)
    return Trajectory("p", 0, arms, arms, np.zeros(T, bool), np.zeros(T), true, biased)


@pytest.fixture(scope="module")
def instance():
    return generate_instance(SyntheticConfig(), rng_stream(0, "instance"))


def test_empty_trial(instance):
    tr = run_trial(instance, make_policy("top_interval", 10, 2, instance.partition), 0, 1)
    assert tr.T == 0


def test_policies_see_identical_slates(instance):
    digests = [run_trial(instance, make_policy(name, 10, 2, instance.partition), 200, 7,
                         record_slates=True).slate_digests
               for name in ("top_interval", "group_fair", "interval_chaining")]
    assert digests[0] == digests[1] == digests[2]


def test_trial_deterministic(instance):
    a = run_trial(instance, make_policy("group_fair", 10, 2, instance.partition), 300, 3)
    b = run_trial(instance, make_policy("group_fair", 10, 2, instance.partition), 300, 3)
    for field in ("arms", "explored", "rewards", "true_regret", "biased_regret"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_sensitive_fraction_examples():
    part = GroupPartition.two_groups(2, 1)
    assert sensitive_pull_fraction(traj([0, 1, 0, 0]), part) == 0.75
    assert sensitive_pull_fraction(traj([0, 0, 0]), part) == 1.0
    assert sensitive_pull_fraction(traj([0, 1, 0, 0]), part, (2, 3)) == 0.5
    with pytest.raises(ValueError):
        sensitive_pull_fraction(traj([]), part)
    assert trailing_window(1000) == (500, 1000)
    assert trailing_window(7) == (4, 7)


def test_uniform_policy_fraction():
    inst = generate_instance(SyntheticConfig(n=10, n_sensitive=2), rng_stream(2))
    tr = run_trial(inst, UniformRandom(10, 2, inst.partition), 10**4, 2)
    assert abs(sensitive_pull_fraction(tr, inst.partition) - 0.2) <= 0.012


@pytest.mark.parametrize("n_sensitive", [1, 5])
def test_fraction_of_single_arm_policy(n_sensitive):
    inst = generate_instance(SyntheticConfig(n=10, n_sensitive=n_sensitive), rng_stream(3))
    tr = run_trial(inst, AlwaysZero(10, 2, inst.partition), 100, 3)
    assert sensitive_pull_fraction(tr, inst.partition) == float(inst.partition.is_sensitive(0))


def test_cumulative_regret_examples():
    t = traj([0, 0, 0], true=[0.3, 0.0, 0.2], biased=[0.0, 0.1, 0.0])
    np.testing.assert_allclose(cumulative_regret(t, "true"), [0.3, 0.3, 0.5])
    np.testing.assert_allclose(cumulative_regret(t, "biased"), [0.0, 0.1, 0.1])
    with pytest.raises(ValueError):
        cumulative_regret(t, "other")


def test_zero_bias_gives_identical_regret_curves():
    inst = generate_instance(SyntheticConfig(mu=0.0), rng_stream(5))
    for name in ("top_interval", "group_fair"):
        tr = run_trial(inst, make_policy(name, 10, 2, inst.partition), 400, 5)
        assert np.array_equal(cumulative_regret(tr, "true"), cumulative_regret(tr, "biased"))


def test_cumulative_regret_nondecreasing(instance):
    for name in ("top_interval", "interval_chaining", "group_fair", "naive_group_fair"):
        tr = run_trial(instance, make_policy(name, 10, 2, instance.partition), 300, 1)
        for kind in ("true", "biased"):
            assert (np.diff(cumulative_regret(tr, kind)) >= 0).all()


def test_sweep_bookkeeping():
    cfg = ExperimentConfig(T=50, policies=("top_interval",), seeds=tuple(range(5)))
    res = sweep([cfg])
    rows = [r for r in res.summary if r["metric"] == "sensitive_fraction"]
    assert len(rows) == 1 and rows[0]["n_seeds"] == 5
    assert 0.0 <= rows[0]["mean"] <= 1.0
    assert len(res.trajectories) == 5


def test_sweep_identifies_failing_cell():
    cfg = ExperimentConfig(T=30, policies=("top_interval",), seeds=(0,),
                           policy_config=PolicyConfig(ridge=0.0), preset="broken")
    with pytest.raises(RuntimeError, match="preset=broken.*policy=top_interval seed=0"):
        sweep([cfg])


def test_sweep_rejects_empty_grid():
    with pytest.raises(ValueError):
        sweep([])


def test_sweep_output_is_deterministic(tmp_path):
    grid = grid_from(ExperimentConfig(T=60, seeds=(0, 1)), "mu", [0.0, 10.0], preset="t")
    a = write_outputs(sweep(grid, jobs=1), tmp_path / "a")
    b = write_outputs(sweep(grid, jobs=2), tmp_path / "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()
    header = a["rounds"].read_text().splitlines()[0]
    assert header == "run_id,policy,seed,t,arm,group,explored,reward,true_regret_cum,biased_regret_cum"
    header = a["summary"].read_text().splitlines()[0]
    assert header == "preset,swept_param,swept_value,policy,metric,mean,std,n_seeds"


def test_reals_use_nine_significant_digits(tmp_path):
    paths = write_outputs(sweep([ExperimentConfig(T=5, seeds=(0,), policies=("top_interval",))]),
                          tmp_path)
    row = paths["rounds"].read_text().splitlines()[3].split(",")
    reward = row[7]
    assert len(reward.lstrip("-").replace(".", "").lstrip("0").split("e")[0]) <= 9


def test_preset_pulls_ratio():
    grid = figure_preset("pulls_ratio")
    assert [g.synthetic.n_sensitive for g in grid] == list(range(1, 10))
    for g in grid:
        assert (g.synthetic.n, g.T, g.synthetic.mu, g.synthetic.d) == (10, 1000, 10.0, 2)


def test_preset_pulls_error():
    grid = figure_preset("pulls_error")
    assert all(g.synthetic.d == 5 and g.synthetic.n == 10 and g.T == 1000 for g in grid)
    assert len({g.synthetic.mu for g in grid}) == len(grid) > 1


def test_preset_pulls_T():
    grid = figure_preset("pulls_T")
    assert [g.T for g in grid] == [250, 500, 1000, 2000, 4000]
    for g in grid:
        s = g.synthetic
        assert (s.n, s.mu, s.n_sensitive, s.d) == (10, 10.0, 5, 2)


def test_preset_appendix_sweeps():
    delta = figure_preset("appx_delta")
    assert len({g.policy_config.delta for g in delta}) == len(delta)
    assert all(g.T == 1000 and g.synthetic.n_sensitive == 5 and g.synthetic.d == 2 for g in delta)
    c = figure_preset("appx_c")
    assert len({g.synthetic.c for g in c}) == len(c)
    dim = figure_preset("appx_dim")
    assert len({g.synthetic.d for g in dim}) == len(dim)
    with pytest.raises(ValueError):
        figure_preset("fig_99")


def test_naive_group_fair_linear_regret():
    summary = dominated_regret()
    r1 = lookup(summary, "naive_group_fair", "true_regret_cum", 1000)["mean"]
    r2 = lookup(summary, "naive_group_fair", "true_regret_cum", 2000)["mean"]
    assert r2 >= 1.8 * r1
