import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadplasticity.categories.battery import IdealBatteryParams, neighbor_set
from loadplasticity.popmodel import (
    ApplianceRecord,
    Category,
    ClusterSpec,
    InfeasibleSwitchError,
    OutOfRangeError,
    PopulationState,
    QuantizationConfig,
    SwitchMatrix,
    assign_cluster,
    lemma1_load,
    load_from_switches,
    read_snapshots,
    update_occupancy,
    write_snapshots,
)
from oracles import random_battery_trajectory


def battery_clusters(capacities=range(1, 8)):
    return [ClusterSpec.battery(i, Category.IDEAL_BATTERY, E=E) for i, E in enumerate(capacities)]


def single(E, occ, t=0):
    s = PopulationState.empty([ClusterSpec.battery(0, Category.IDEAL_BATTERY, E=E)], t)
    s.occupancy[0][:] = occ
    s.arrivals[0][:] = occ
    return s


def test_quantization_config_rejects_nonpositive_steps():
    with pytest.raises(ValueError):
        QuantizationConfig(delta_t=0)
    with pytest.raises(ValueError):
        QuantizationConfig(delta_x=-1)


def test_record_rejects_negative_arrival():
    with pytest.raises(ValueError):
        ApplianceRecord(0, Category.NID, -1)


def test_capacities_close_together_share_a_cluster():
    clusters = battery_clusters()
    a = ApplianceRecord(0, Category.IDEAL_BATTERY, 0, theta={"E": 5.4})
    b = ApplianceRecord(1, Category.IDEAL_BATTERY, 0, theta={"E": 5.25})
    qa, qb = assign_cluster(a, clusters), assign_cluster(b, clusters)
    assert qa == qb
    assert clusters[qa].theta["E"] == 5


def test_grid_point_maps_to_itself():
    clusters = battery_clusters()
    for c in clusters:
        rec = ApplianceRecord(0, Category.IDEAL_BATTERY, 0, theta={"E": c.theta["E"]})
        assert assign_cluster(rec, clusters) == c.cluster_id


def test_out_of_range_record_raises():
    clusters = battery_clusters()
    with pytest.raises(OutOfRangeError):
        assign_cluster(ApplianceRecord(0, Category.IDEAL_BATTERY, 0, theta={"E": 12.0}), clusters)
    with pytest.raises(OutOfRangeError):
        assign_cluster(ApplianceRecord(0, Category.NID, 0, theta={"E": 3}), clusters)


def test_deadlines_round_down():
    clusters = [
        ClusterSpec(i, Category.NID, {"chi": chi}, (0,)) for i, chi in enumerate((1, 2, 3))
    ]
    rec = ApplianceRecord(0, Category.NID, 0, theta={"chi": 2.9})
    assert clusters[assign_cluster(rec, clusters)].theta["chi"] == 2
    with pytest.raises(OutOfRangeError):
        assign_cluster(ApplianceRecord(0, Category.NID, 0, theta={"chi": 0.5}), clusters)


@given(st.floats(0.5, 7.49))
def test_assignment_is_idempotent(E):
    clusters = battery_clusters()
    q = assign_cluster(ApplianceRecord(0, Category.IDEAL_BATTERY, 0, theta={"E": E}), clusters)
    again = ApplianceRecord(1, Category.IDEAL_BATTERY, 0, theta=dict(clusters[q].theta))
    assert assign_cluster(again, clusters) == q


def test_update_occupancy_example():
    s = single(2, [1, 0, 1])
    sw = SwitchMatrix({0: np.array([[0, 0, 1], [0, 0, 0], [0, 0, 0]])})
    nxt = update_occupancy(s, {0: [0, 1, 0]}, sw)
    assert nxt.occupancy[0].tolist() == [0, 1, 2]
    assert nxt.t == 1
    assert nxt.check_conservation()


def test_update_without_events_is_identity():
    s = single(3, [2, 0, 1, 4])
    nxt = update_occupancy(s, None, None)
    assert nxt.occupancy[0].tolist() == [2, 0, 1, 4]


def test_switch_beyond_occupancy_rejected():
    s = single(2, [1, 0, 0])
    sw = SwitchMatrix({0: np.array([[0, 2, 0], [0, 0, 0], [0, 0, 0]])})
    with pytest.raises(InfeasibleSwitchError):
        update_occupancy(s, None, sw)


def test_switch_matrix_diagonal_and_neighbors():
    s = single(2, [3, 0, 0])
    with pytest.raises(InfeasibleSwitchError):
        SwitchMatrix({0: np.eye(3, dtype=int)}).validate(s)
    nb = {0: [{0, 1}, {0, 1, 2}, {1, 2}]}
    with pytest.raises(InfeasibleSwitchError):
        SwitchMatrix({0: np.array([[0, 0, 1], [0, 0, 0], [0, 0, 0]])}).validate(s, nb)


def test_load_from_switches_examples():
    up = SwitchMatrix({0: np.array([[0, 0, 1], [0, 0, 0], [0, 0, 0]])})
    assert load_from_switches(up) == 2
    both = SwitchMatrix({0: np.array([[0, 0, 3], [0, 0, 0], [3, 0, 0]])})
    assert load_from_switches(both) == 0


def test_lemma1_static_population_is_zero():
    n = np.array([[1, 2, 0], [1, 2, 0], [1, 2, 0]])
    assert lemma1_load(n, n).tolist() == [0, 0]


def test_lemma1_arrival_without_charging_is_zero():
    n = np.array([[0, 0, 0, 0], [0, 0, 1, 0]])
    assert lemma1_load(n, n).tolist() == [0]


def test_lemma1_shape_mismatch():
    with pytest.raises(ValueError):
        lemma1_load(np.zeros((3, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        lemma1_load(np.zeros((1, 2)), np.zeros((1, 2)))


def test_oracle_triangle_ten_batteries():
    rng = np.random.default_rng(3)
    E = 4
    traj = random_battery_trajectory(rng, 10, 5, E, lambda x: neighbor_set(Category.IDEAL_BATTERY, IdealBatteryParams(E), x))
    n, a = traj.occupancy(), traj.arrivals()
    lemma = lemma1_load(n, a)
    for t in range(traj.T):
        sw = SwitchMatrix({0: traj.switch_counts(t)})
        assert lemma[t] == load_from_switches(sw) == traj.load(t)


def test_occupancy_recursion_matches_per_appliance_counts():
    rng = np.random.default_rng(11)
    E, T = 3, 6
    traj = random_battery_trajectory(rng, 12, T, E, lambda x: set(range(E + 1)))
    n, a = traj.occupancy(), traj.arrivals()
    spec = ClusterSpec.battery(0, Category.IDEAL_BATTERY, E=E)
    s = PopulationState.empty([spec])
    s.occupancy[0][:] = n[0]
    s.arrivals[0][:] = a[0]
    for t in range(T):
        s = update_occupancy(s, {0: a[t + 1] - a[t]}, SwitchMatrix({0: traj.switch_counts(t)}))
        assert s.occupancy[0].tolist() == n[t + 1].tolist()
        assert s.check_conservation()


def test_lemma1_sums_clusters():
    n = {0: np.array([[1, 0], [0, 1]]), 1: np.array([[0, 0, 1], [0, 0, 1]])}
    a = {0: np.array([[1, 0], [1, 0]]), 1: np.array([[0, 0, 1], [0, 0, 1]])}
    assert lemma1_load(n, a).tolist() == [1]


def test_snapshot_round_trip():
    s0 = single(2, [1, 0, 3])
    s1 = update_occupancy(s0, {0: [0, 2, 0]}, None)
    buf = io.StringIO()
    write_snapshots([s0, s1], buf)
    back = read_snapshots(io.StringIO(buf.getvalue()))
    assert back[0][0].tolist() == [1, 0, 3]
    assert back[1][0].tolist() == [1, 2, 3]


def test_snapshot_rejects_bad_lines():
    with pytest.raises(ValueError):
        read_snapshots(io.StringIO("0 0 1\n"))
    with pytest.raises(ValueError):
        read_snapshots(io.StringIO("0 0 1 -2\n"))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_nonnegativity_and_conservation_hold_along_random_trajectories(seed):
    rng = np.random.default_rng(seed)
    E = int(rng.integers(1, 5))
    traj = random_battery_trajectory(rng, int(rng.integers(1, 8)), 4, E, lambda x: set(range(E + 1)))
    n = traj.occupancy()
    assert (n >= 0).all()
    assert (n.sum(axis=1) == traj.arrivals().sum(axis=1)).all()
