import math

import numpy as np
import pytest

from momentfit.basis import BasisSpec
from momentfit.errors import NoSplitError
from momentfit.fixtures import WAVY_NOISE, linear_sample, step_sample, wavy_mean, wavy_sample
from momentfit.modelselect import SelectConfig
from momentfit.moments import WeightedSample, accumulate, parameter_vector
from momentfit.partition import Internal, Leaf, SplitRule, grow_tree, predict_tree, principal_axis, route, training_loss
from momentfit.polyfit import predict


def rule_for(x, w=None):
    x = np.asarray(x, dtype=float)
    s = WeightedSample(x, np.zeros(len(x)), w)
    basis = BasisSpec.for_data(s.x, 1, s.w)
    return principal_axis(parameter_vector(accumulate(s, basis)))


def test_one_dimensional_split_at_mean():
    rule = rule_for([0.0, 1.0, 2.0, 3.0])
    assert rule.point[0] == pytest.approx(1.5)
    assert rule.normal.tolist() == [1.0]
    assert rule.goes_left(np.array([0.0, 1.0, 2.0, 3.0])).tolist() == [True, True, False, False]


def test_diagonal_points_give_diagonal_normal():
    t = np.linspace(-1, 1, 9)
    rule = rule_for(np.c_[t, t])
    np.testing.assert_allclose(rule.normal, [1 / math.sqrt(2)] * 2, atol=1e-12)


def test_anisotropic_cloud_orientation():
    rng = np.random.default_rng(55)
    angle = math.radians(30)
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    pts = (rng.normal(size=(10_000, 2)) * [3.0, 1.0]) @ rot.T + [5.0, -2.0]
    rule = rule_for(pts)
    got = math.degrees(math.atan2(rule.normal[1], rule.normal[0]))
    assert abs(got - 30.0) < 2.0
    np.testing.assert_allclose(rule.point, pts.mean(axis=0), atol=1e-9)


def test_weights_move_the_split_point():
    rule = rule_for([0.0, 1.0, 2.0, 3.0], w=[3.0, 1.0, 1.0, 1.0])
    assert rule.point[0] == pytest.approx(1.0)


def test_ties_on_the_plane_go_left():
    rule = SplitRule(np.array([0.5, 0.5]), np.array([1.0, 0.0]))
    assert rule.goes_left(np.array([[0.5, 9.0], [0.5 + 1e-15, 0.0]])).tolist() == [True, False]


def test_coincident_points_cannot_split():
    with pytest.raises(NoSplitError):
        rule_for(np.ones((20, 2)))


def test_linear_data_single_leaf():
    tree = grow_tree(linear_sample())
    assert isinstance(tree.root, Leaf)
    assert tree.root.model.degree <= 1


def test_step_function_splits_into_plateaus():
    s = step_sample()
    tree = grow_tree(s, SelectConfig(n_max=0, scan_extra=2))
    assert len(tree.leaves()) >= 2
    for x0, level in ((-0.5, -1.0), (0.5, 1.0)):
        p = predict_tree(tree, np.array([x0]))
        assert abs(p.value[0] - level) <= 3 * max(p.sigma[0], 0.05 / math.sqrt(len(s)))


def _coverage(tree, noise):
    grid = np.linspace(-0.88, 0.88, 801)
    p = predict_tree(tree, grid)
    truth = wavy_mean(grid)
    within_noise = np.mean(np.abs(p.value - truth) <= noise)
    within_band = np.mean(np.abs(p.value - truth) <= p.sigma)
    return within_noise, within_band


@pytest.mark.parametrize("n_max", [0, 1])
def test_wavy_coverage(n_max):
    s = wavy_sample()
    tree = grow_tree(s, SelectConfig(n_max=n_max, scan_extra=2))
    within_noise, within_band = _coverage(tree, WAVY_NOISE)
    assert len(tree.leaves()) > 1
    assert within_noise >= 0.6
    assert 0.0 < within_band <= 1.0


def test_single_leaf_prediction_matches_model(rng):
    x = rng.uniform(-1, 1, 200)
    s = WeightedSample(x, 1 + 2 * x + rng.normal(0, 0.1, 200), None)
    tree = grow_tree(s, SelectConfig(n_max=1))
    assert isinstance(tree.root, Leaf)
    probe = rng.uniform(-1, 1, 50)
    a, b = predict_tree(tree, probe), predict(tree.root.model, probe)
    assert np.array_equal(a.value, b.value)
    assert np.array_equal(a.variance, b.variance)


def _replay(node, point):
    while isinstance(node, Internal):
        side = float(np.dot(point - node.rule.point, node.rule.normal))
        node = node.left if side <= 0 else node.right
    return node.leaf_id


def test_routing_matches_replay():
    rng = np.random.default_rng(77)
    x = rng.uniform(-1, 1, (4000, 2))
    y = np.sin(3 * x[:, 0]) * np.cos(2 * x[:, 1]) + rng.normal(0, 0.05, 4000)
    tree = grow_tree(WeightedSample(x, y, None), SelectConfig(n_max=1))
    assert len(tree.leaves()) > 2
    probes = rng.uniform(-1.2, 1.2, (100_000, 2))
    ids = route(tree, probes)
    expect = np.array([_replay(tree.root, p) for p in probes])
    assert np.array_equal(ids, expect)
    # every leaf is reachable and every probe lands somewhere
    assert set(np.unique(ids)) == {leaf.leaf_id for leaf in tree.leaves()}


def test_leaves_partition_the_training_set():
    s = wavy_sample(n=3000)
    tree = grow_tree(s)
    ids = route(tree, s.x)
    assert sum(leaf.count for leaf in tree.leaves()) == len(s)
    for leaf in tree.leaves():
        assert np.count_nonzero(ids == leaf.leaf_id) == leaf.count
        assert leaf.count >= tree.min_leaf or leaf.degenerate


def test_growth_is_deterministic():
    s = wavy_sample(n=3000)
    a, b = grow_tree(s), grow_tree(s)
    probe = np.linspace(-1, 1, 301)
    assert np.array_equal(predict_tree(a, probe).value, predict_tree(b, probe).value)
    assert np.array_equal(predict_tree(a, probe).variance, predict_tree(b, probe).variance)


def test_refinement_never_increases_constant_loss():
    s = wavy_sample(n=4000)
    cfg = SelectConfig(n_max=0, scan_extra=2)
    losses = [training_loss(grow_tree(s, cfg, max_depth=d), s) for d in range(0, 9)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_max_depth_zero_is_one_leaf():
    tree = grow_tree(wavy_sample(n=2000), max_depth=0)
    assert isinstance(tree.root, Leaf)
    assert tree.depth == 0
    # the leaf keeps the best degree within budget
    assert tree.root.model.degree <= tree.config.n_max


def test_tiny_input_gives_degenerate_constant_leaf():
    s = WeightedSample([0.0, 1.0, 2.0], [1.0, 2.0, 6.0], None)
    tree = grow_tree(s)
    assert tree.root.degenerate
    assert predict_tree(tree, np.array([5.0])).value[0] == pytest.approx(3.0)


def test_extrapolation_flag_uses_training_box():
    tree = grow_tree(wavy_sample(n=2000))
    p = predict_tree(tree, np.array([0.0, 0.95, -2.0]))
    assert p.extrapolated.tolist() == [False, True, True]
