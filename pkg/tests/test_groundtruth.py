import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phytosim.groundtruth import (
    GroundTruthError, GroundTruthRecord, Phase, TitrationRecord, dawn_dusk_delta,
    groundtruth_from_trace, local_slope, malic_acid_percent, read_groundtruth_csv,
    read_titration_csv, sample_titrations, validate_inverse_relation,
    write_groundtruth_csv, write_titration_csv,
)
from phytosim.podsim import Seal, make_scenario, simulate
from phytosim.series import SensorSeries

DAY = 86400


def _rec(v, c=0.001, m=0.5, t=0, phase="dawn"):
    return TitrationRecord(v_naoh=v, c_naoh=c, m_leaf=m, sample_time=t, phase=phase)


# --- titration ---------------------------------------------------------------

def test_worked_example():
    assert malic_acid_percent(_rec(0.010)) == pytest.approx(0.13409, rel=1e-12)


def test_zero_volume_gives_zero():
    assert malic_acid_percent(_rec(0.0)) == 0.0


def test_bad_mass_rejected():
    with pytest.raises(GroundTruthError):
        _rec(0.01, m=0.0)
    with pytest.raises(GroundTruthError):
        _rec(-0.01)


def test_concentration_outside_range_warns():
    with pytest.warns(UserWarning):
        malic_acid_percent(_rec(0.01, c=0.1))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        malic_acid_percent(_rec(0.01, c=0.002))


valid = st.tuples(st.just(0.0) | st.floats(1e-6, 0.1), st.floats(0.0005, 0.005), st.floats(0.01, 10.0))


@given(valid)
def test_matches_exact_rational_arithmetic(args):
    v, c, m = args
    exact = Fraction(v) * Fraction(c) * Fraction(134.09) / (2 * Fraction(m)) * 100
    assert malic_acid_percent(_rec(v, c, m)) == pytest.approx(float(exact), rel=1e-12, abs=0.0)


@given(valid, st.floats(0.1, 10.0))
def test_linear_in_volume(args, factor):
    v, c, m = args
    a = malic_acid_percent(_rec(v, c, m))
    b = malic_acid_percent(_rec(v * factor, c, m))
    assert b == pytest.approx(a * factor, rel=1e-12, abs=1e-300)


def test_dawn_dusk_delta_per_day():
    recs = [_rec(0.012, t=8 * 3600, phase="dawn"), _rec(0.010, t=20 * 3600, phase="dusk")]
    (day, delta), = dawn_dusk_delta(recs)
    assert day == "1970-01-01"
    assert delta == pytest.approx(malic_acid_percent(recs[0]) - malic_acid_percent(recs[1]))


def test_dawn_dusk_delta_swap_is_antisymmetric():
    recs = [_rec(0.012, t=DAY * d + 8 * 3600, phase="dawn") for d in range(3)]
    recs += [_rec(0.004 + 0.001 * d, t=DAY * d + 20 * 3600, phase="dusk") for d in range(3)]
    swapped = [TitrationRecord(r.v_naoh, r.c_naoh, r.m_leaf, r.sample_time,
                               Phase.DUSK if r.phase is Phase.DAWN else Phase.DAWN) for r in recs]
    a = dawn_dusk_delta(recs)
    b = dawn_dusk_delta(swapped)
    assert [d for d, _ in a] == [d for d, _ in b]
    assert [x for _, x in a] == pytest.approx([-x for _, x in b])


def test_day_without_pair_skipped_with_warning():
    recs = [_rec(0.01, t=8 * 3600), _rec(0.01, t=DAY + 8 * 3600), _rec(0.005, t=DAY + 20 * 3600, phase="dusk")]
    with pytest.warns(UserWarning):
        out = dawn_dusk_delta(recs)
    assert [d for d, _ in out] == ["1970-01-02"]


def test_synthesized_cam_titrations_positive(cam_week):
    recs = sample_titrations(cam_week.trace, cam_week.scenario.schedule, background_umol=5.0)
    deltas = dawn_dusk_delta(recs)
    assert len(deltas) >= 6
    assert all(d > 0 for _, d in deltas)


def test_titration_csv_round_trip():
    recs = [_rec(0.0105, t=1700000000), _rec(0.0031, c=0.002, m=0.75, t=1700040000, phase="dusk")]
    assert read_titration_csv(write_titration_csv(recs)) == recs


def test_titration_csv_errors():
    with pytest.raises(GroundTruthError):
        read_titration_csv("sample_time,phase,v_naoh_l,c_naoh_mol_l,m_leaf_g\n0,noon,0.01,0.001,0.5\n")


# --- inverse relation ------------------------------------------------------------

def test_local_slope_exact_on_line():
    t = np.arange(0, 3600, 60, dtype=float)
    assert np.allclose(local_slope(t, 3.0 - 0.25 * t, 900.0), -0.25)


def _ramp_pod(hours=12):
    ts = np.arange(0, hours * 3600, 60)
    co2 = 450 + 40 * np.sin(2 * np.pi * ts / (6 * 3600))
    return SensorSeries(ts, co2, np.full(ts.size, 50.0), np.full(ts.size, 22.0))


def _gt_from_rate(pod, scale=1.0, offset=0.0):
    rate = np.gradient(pod.co2, pod.timestamps)
    return [GroundTruthRecord(int(t), float(offset - scale * r), 1.0)
            for t, r in zip(pod.timestamps[::10], rate[::10])]


def test_inverse_relation_on_exact_rate():
    pod = _ramp_pod()
    assert validate_inverse_relation(_gt_from_rate(pod), pod) < -0.99


@given(st.floats(0.1, 100.0), st.floats(-50.0, 50.0))
def test_inverse_relation_affine_invariant(scale, offset):
    pod = _ramp_pod()
    base = validate_inverse_relation(_gt_from_rate(pod), pod)
    assert validate_inverse_relation(_gt_from_rate(pod, scale, offset), pod) == pytest.approx(base, abs=1e-9)


def test_constant_photo_rejected():
    pod = _ramp_pod()
    gt = [GroundTruthRecord(int(t), 5.0, 1.0) for t in pod.timestamps[::10]]
    with pytest.raises(GroundTruthError):
        validate_inverse_relation(gt, pod)


def test_too_few_pairs_rejected():
    pod = _ramp_pod()
    gt = [GroundTruthRecord(int(t), float(i), 1.0) for i, t in enumerate(range(0, 9 * 3600, 3600))]
    with pytest.raises(GroundTruthError):
        validate_inverse_relation(gt, pod)


def test_short_overlap_rejected():
    pod = _ramp_pod(hours=4)
    with pytest.raises(GroundTruthError):
        validate_inverse_relation(_gt_from_rate(pod), pod)


def test_simulated_leaf_against_its_pod():
    sc = make_scenario("env1", "c3", duration=3, seal=Seal.PARAFILM)
    r = simulate(sc)
    gt = groundtruth_from_trace(r.trace, area_m2=sc.leaf.area_m2)
    assert validate_inverse_relation(gt, r.plant) < -0.9
    photo = np.random.default_rng(0).permutation([g.photo for g in gt])
    shuffled = [GroundTruthRecord(g.timestamp, float(p), g.trmmol) for g, p in zip(gt, photo)]
    assert abs(validate_inverse_relation(shuffled, r.plant)) < 0.2


def test_groundtruth_csv_round_trip():
    recs = [GroundTruthRecord(1700000000, 4.25, 1.5), GroundTruthRecord(1700000600, -0.75, 0.1)]
    assert read_groundtruth_csv(write_groundtruth_csv(recs)) == recs


def test_cam_leaf_photo_positive_at_night(cam_week):
    tr = cam_week.trace
    night = tr.clock_phase >= 12.0
    assert tr.photo[night].mean() > 0 > tr.photo[~night].mean()
