import numpy as np
import pytest

from routeswarm.model import Flow, FlowEvent, Params, Scenario, validate_scenario
from routeswarm.scenarios import random_scenario, reference_scenario, single_flow_scenario


def two_statics(d, **params):
    return Scenario(
        m=0, s=2,
        static_positions=[(0, 0), (d, 0)],
        initial_mobile_positions=np.zeros((0, 2)),
        flows=[Flow(3, 1, 2)],
        params=Params(**params),
    )


def test_reference_layout_valid():
    sc = reference_scenario()
    assert (sc.m, sc.s, sc.f) == (9, 6, 3)
    assert validate_scenario(sc) == []


def test_isolated_statics():
    assert validate_scenario(two_statics(2.0)) == ["disconnected-initial-graph"]


def test_radius_ordering():
    assert validate_scenario(two_statics(0.5, rho1=1.0, rho2=1.0)) == ["radius-ordering"]


def test_validate_is_pure():
    sc = reference_scenario()
    assert validate_scenario(sc) == validate_scenario(sc)


@pytest.mark.parametrize(
    "mutate, code",
    [
        (lambda sc: sc.flows.append(Flow(3, 1, 2)), "duplicate-flow-id"),
        (lambda sc: sc.flows.__setitem__(0, Flow(9, 1, 2)), "flow-id-range:9"),
        (lambda sc: sc.flows.__setitem__(0, Flow(3, 1, 1)), "flow-degenerate:3"),
        (lambda sc: sc.events.append(FlowEvent(5, 7, True)), "event-unknown-flow:7"),
        (lambda sc: sc.events.append(FlowEvent(-1, 3, True)), "event-negative-tick"),
    ],
)
def test_structural_violations(mutate, code):
    sc = two_statics(0.5)
    mutate(sc)
    assert code in validate_scenario(sc)


def test_mobile_endpoint_rejected():
    sc = Scenario(
        m=1, s=1,
        static_positions=[(0.5, 0)],
        initial_mobile_positions=[(0, 0)],
        flows=[Flow(3, 1, 2)],
    )
    assert "flow-endpoint-not-static:3" in validate_scenario(sc)


def test_coincident_agents():
    sc = Scenario(
        m=1, s=2,
        static_positions=[(0, 0), (0.5, 0)],
        initial_mobile_positions=[(0, 0)],
        flows=[Flow(4, 2, 3)],
    )
    assert "coincident-agents" in validate_scenario(sc)


def test_param_violations():
    assert "non-positive-dt" in Params(dt=0).violations()
    assert "non-positive-beta" in Params(beta=-1).violations()
    assert Params().violations() == []


def test_params_for_range_scales():
    q = Params.for_range(2.0)
    assert (q.rho1, q.b, q.a, q.vmax, q.eps_f) == (1.6, 1.2, 5.0, 0.2, 0.1)
    assert q.violations() == []


def test_id_ranges():
    sc = reference_scenario()
    assert list(sc.mobile_ids) == list(range(1, 10))
    assert list(sc.static_ids) == list(range(10, 16))
    assert sorted(fl.id for fl in sc.flows) == [16, 17, 18]


def test_builders_produce_valid_scenarios():
    for m in (0, 1, 2, 3, 5):
        assert validate_scenario(single_flow_scenario(m)) == []
    for seed in range(10):
        assert validate_scenario(random_scenario(seed)) == []
    with pytest.raises(ValueError):
        single_flow_scenario(2, gaps=[1.0])
