import io

import numpy as np
import pytest

from loadplasticity.arrivals import (
    ArrivalRateProfile,
    ScenarioTrace,
    build_scenario_set,
    evening_template,
    expected_trace,
    phev_clusters,
    pjm_case_profile,
    read_rate_profile,
    sample_population_scenario,
    sample_scenario,
    write_rate_profile,
)


def flat(rate, hours, step=60.0):
    return ArrivalRateProfile(np.full((1, 1, hours), float(rate)), step)


def test_zero_rate_gives_empty_trace():
    tr = sample_scenario(flat(0.0, 5), 0)
    assert tr.arrivals.shape == (1, 1, 5)
    assert not tr.arrivals.any()


def test_constant_rate_at_minute_steps_matches_mean():
    # 60 per hour at one-minute steps is one expected arrival per step
    prof = flat(60.0, 10_000 // 60 + 1, step=1.0)
    tr = sample_scenario(prof, 4)
    inc = tr.increments[0, 0, :10_000]
    se = np.sqrt(1.0 / inc.size)
    assert abs(inc.mean() - 1.0) <= 3 * se


def test_step_rates_split_hours():
    prof = ArrivalRateProfile(np.array([[[6.0, 12.0]]]), 10.0)
    assert prof.n_steps == 12
    r = prof.step_rates()[0, 0]
    assert np.allclose(r[:6], 1.0) and np.allclose(r[6:], 2.0)


def test_profile_validation():
    with pytest.raises(ValueError):
        ArrivalRateProfile(np.ones((2, 3)))
    with pytest.raises(ValueError):
        ArrivalRateProfile(-np.ones((1, 1, 2)))
    with pytest.raises(ValueError):
        ArrivalRateProfile(np.ones((1, 1, 2)), step_minutes=7.0)


def test_traces_are_cumulative():
    with pytest.raises(ValueError):
        ScenarioTrace(np.array([[[1, 0]]]))
    tr = sample_scenario(flat(3.0, 8), 2)
    assert (np.diff(tr.arrivals, axis=-1) >= 0).all()
    assert tr.increments.sum() == tr.arrivals[..., -1].sum()


def test_sampling_is_deterministic_per_seed():
    prof = pjm_case_profile(scale=0.01)
    a = sample_scenario(prof, (7, 1))
    b = sample_scenario(prof, (7, 1))
    c = sample_scenario(prof, (7, 2))
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_single_scenario_set_and_bad_K():
    s = build_scenario_set(flat(2.0, 4), 1, 0)
    assert s.K == 1 and len(list(s)) == 1
    with pytest.raises(ValueError):
        build_scenario_set(flat(2.0, 4), 0, 0)


def test_scenario_set_totals_average_to_expectation():
    prof = pjm_case_profile(scale=0.01)
    s = build_scenario_set(prof, 50, 3)
    totals = np.array([t.arrivals[..., -1].sum() for t in s])
    se = np.sqrt(prof.total / len(totals))
    assert abs(totals.mean() - prof.total) <= 4 * se
    assert len({t.digest() for t in s}) == 50


def test_fixed_population_has_exact_size():
    prof = pjm_case_profile(scale=0.05)
    s = build_scenario_set(prof, 5, 1, fixed_population=True)
    assert all(t.arrivals[..., -1].sum() == 2000 for t in s)
    assert sample_population_scenario(prof, 0, size=17).arrivals[..., -1].sum() == 17
    with pytest.raises(ValueError):
        sample_population_scenario(flat(0.0, 3), 0, size=1)


def test_case_profile_totals_and_horizon():
    assert pjm_case_profile().total == pytest.approx(40_000)
    assert pjm_case_profile(scale=0.05).total == pytest.approx(2_000)
    prof = pjm_case_profile()
    assert prof.rates.shape == (15, 1, 32)
    assert not prof.rates[..., 24:].any()
    assert expected_trace(prof)[..., -1].sum() == pytest.approx(40_000)


def test_clusters_need_five_minus_soc_hours():
    cl = phev_clusters()
    assert len(cl) == 15
    assert {len(c.pulse) for c in cl} == {1, 2, 3, 4, 5}
    for c in cl:
        assert len(c.pulse) == 5 - c.soc
        assert c.nid.chi == c.slack


def test_evening_template_peaks_in_the_evening():
    w = evening_template()
    assert w.sum() == pytest.approx(1.0)
    assert int(np.argmax(w)) in (17, 18)
    assert w[21] > w[12] > w[3]


def test_rate_file_round_trip():
    prof = pjm_case_profile(scale=0.1, horizon=6, arrival_hours=6)
    buf = io.StringIO()
    write_rate_profile(prof, buf)
    back = read_rate_profile(io.StringIO(buf.getvalue()))
    assert np.allclose(back.rates, prof.rates)


def test_rate_file_rejects_bad_input():
    with pytest.raises(ValueError):
        read_rate_profile(io.StringIO("# nothing\n"))
    with pytest.raises(ValueError):
        read_rate_profile(io.StringIO("0 0 1\n"))


def test_short_horizon_keeps_population():
    prof = pjm_case_profile(population=100, horizon=8)
    assert prof.rates.shape[-1] == 8
    assert prof.total == pytest.approx(100)
