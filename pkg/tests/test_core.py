import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nashkkt.core import (AgentSpec, DataQualityError, DemonstrationSet, FamilySpec, KktCertificate,
                          Layout, ScenarioError, ScenarioSpec, Trajectory, check_scenario,
                          validate_scenario)


def di_spec(N=2, T=2, theta_bounds=((0, 0), (10, 10))):
    agents = tuple(AgentSpec(4, 2, "double_int", "individual_smoothness") for _ in range(N))
    fam = FamilySpec.make("spherical", theta_bounds)
    origins = tuple((float(i), 0.0) for i in range(N))
    goals = tuple((float(i), 5.0) for i in range(N))
    return ScenarioSpec(agents, T, 1.0, fam, origins, goals)


def test_first_slot_is_zero():
    assert di_spec().layout().flat_index(0, 0, "state", 0) == 0


def test_second_agent_state_follows_first():
    assert di_spec().layout().flat_index(1, 0, "state", 0) == 4


def test_states_precede_controls_each_step():
    lay = di_spec().layout()
    assert lay.flat_index(0, 0, "control", 0) == 8
    assert lay.flat_index(0, 1, "state", 0) == 12
    assert lay.size == (8 + 4) * 2


def test_flat_index_round_trip_exhaustive():
    lay = di_spec(T=3).layout()
    seen = set()
    for a, t in itertools.product(range(2), range(3)):
        for kind, dim in (("state", 4), ("control", 2)):
            for c in range(dim):
                k = lay.flat_index(a, t, kind, c)
                assert lay.unflatten(k) == (a, t, kind, c)
                seen.add(k)
    assert seen == set(range(lay.size))


@pytest.mark.parametrize("args", [(2, 0, "state", 0), (0, 3, "state", 0), (0, 0, "control", 2),
                                  (0, 0, "other", 0)])
def test_flat_index_out_of_range(args):
    with pytest.raises(IndexError):
        di_spec(T=3).layout().flat_index(*args)


def test_validate_well_formed():
    assert validate_scenario(di_spec()) == []


def test_validate_single_agent():
    assert "need ≥ 2 agents" in validate_scenario(di_spec(N=1))


def test_validate_reversed_bounds_names_component():
    diags = validate_scenario(di_spec(theta_bounds=((0, 5), (10, 1))))
    assert any("component 1" in d for d in diags)
    with pytest.raises(ScenarioError):
        check_scenario(di_spec(theta_bounds=((0, 5), (10, 1))))


def test_validate_dims_mismatch():
    spec = di_spec()
    bad = spec.replace(agents=(AgentSpec(3, 2, "double_int", "individual_smoothness"),) + spec.agents[1:])
    assert any("do not match" in d for d in validate_scenario(bad))


def test_trajectory_accessors_match_layout(rng):
    spec = di_spec(T=3)
    lay = spec.layout()
    tr = Trajectory(rng.normal(size=lay.size), lay)
    for a, t in itertools.product(range(2), range(3)):
        p = [tr.data[lay.flat_index(a, t, "state", c)] for c in range(2)]
        v = [tr.data[lay.flat_index(a, t, "state", 2 + c)] for c in range(2)]
        assert np.array_equal(tr.position(a, t), p)
        assert np.array_equal(tr.velocity(a, t), v)


def test_trajectory_length_checked():
    with pytest.raises(ValueError):
        Trajectory(np.zeros(5), di_spec().layout())


def test_scenario_json_round_trip():
    spec = di_spec()
    again = ScenarioSpec.from_json(spec.to_json())
    assert again == spec
    assert again.digest() == spec.digest()
    d = json.loads(spec.to_json())
    assert set(d) >= {"version", "agents", "horizon", "dt", "known_constraints", "unknown_family",
                      "boundary"}


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=24, max_size=24))
def test_demo_file_round_trip_bit_identical(values):
    spec = di_spec()
    ds = DemonstrationSet(spec, (Trajectory(np.array(values), spec.layout(), spec.digest()),))
    back = DemonstrationSet.from_json(ds.to_json())
    assert np.array_equal(back.trajectories[0].data, ds.trajectories[0].data)


def test_demo_digest_mismatch_is_data_quality_error():
    spec = di_spec()
    ds = DemonstrationSet(spec, (Trajectory(np.zeros(24), spec.layout()),))
    d = json.loads(ds.to_json())
    d["scenario_hash"] = "0" * 64
    with pytest.raises(DataQualityError, match="digest mismatch"):
        DemonstrationSet.from_dict(d)


def test_demonstration_set_needs_entries():
    with pytest.raises(ValueError):
        DemonstrationSet(di_spec(), ())


def test_certificate_rejects_negative_multiplier():
    cert = KktCertificate(np.zeros(2), ((np.array([-1.0]),),), ((np.zeros(1),),), residuals=((0.0,),))
    with pytest.raises(ValueError):
        cert.check()
