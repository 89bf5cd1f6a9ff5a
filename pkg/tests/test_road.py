import pytest

from palcas import road
from palcas.errors import ContractViolation
from palcas.road import (ClusterZone, RampSpec, RoadNetwork, Route, Vehicle,
                         cluster_of, distance_to_exit, evenly_spaced_clusters,
                         remaining_lane_count, standard_network)


@pytest.fixture
def net():
    return standard_network()


def make_vehicle(net, x, lane, route=Route(None, None), **kw):
    v = Vehicle(id=0, kind="CAV", x=x, lat_pos=net.lane_center(lane), lane=lane,
                v=30.0, route=route, **kw)
    v.prev_x = x
    return v


def test_standard_geometry(net):
    assert net.mainline_length == 2500.0
    assert net.lane_count == 5
    assert len(net.clusters) == 3
    assert [c.start for c in net.clusters] == [100.0, 900.0, 1700.0]
    assert all(c.length == 800.0 for c in net.clusters)
    for c in net.clusters:
        assert c.on_ramp.kind == "on" and c.off_ramp.kind == "off"
        assert c.on_ramp.accel_lane_length == 200.0


def test_cluster_of_containment(net):
    c1 = net.clusters[0]
    assert cluster_of(net, (c1.start + c1.end) / 2) == 1
    assert cluster_of(net, net.clusters[1].start) == 2       # half-open boundary
    assert cluster_of(net, net.clusters[0].end) == 2


def test_cluster_of_warmup_and_bounds(net):
    # brute-force scan over zone bounds: warm-up is covered by no cluster
    for pos in [0.0, 33.0, 99.999]:
        assert all(not c.contains(pos) for c in net.clusters)
        assert cluster_of(net, pos) is None
    with pytest.raises(ContractViolation):
        cluster_of(net, -0.1)
    with pytest.raises(ContractViolation):
        cluster_of(net, net.mainline_length + 0.1)


def test_cluster_of_is_a_partition(net):
    # every position maps to at most one cluster; adjacent clusters share none
    step = 7.3
    pos = 0.0
    while pos <= net.mainline_length:
        holders = [c.id for c in net.clusters if c.contains(pos)]
        assert len(holders) <= 1
        got = cluster_of(net, pos)
        assert got == (holders[0] if holders else None)
        pos += step


def test_distance_to_exit(net):
    exit_route = Route(None, 2)
    junction = net.exit_position(exit_route)
    v = make_vehicle(net, junction - 400.0, 3, exit_route)
    assert distance_to_exit(net, v) == pytest.approx(400.0)
    v.x = junction + 50.0
    assert distance_to_exit(net, v) == 0.0
    through = make_vehicle(net, 2000.0, 3, Route(None, None))
    assert distance_to_exit(net, through) == pytest.approx(net.mainline_length - 2000.0)


def test_distance_to_exit_monotone_under_forward_motion(net):
    v = make_vehicle(net, 200.0, 2, Route(None, 3))
    last = distance_to_exit(net, v)
    for _ in range(60):
        v.x += 37.0
        if v.x > net.mainline_length:
            break
        d = distance_to_exit(net, v)
        assert d <= last
        last = d


def test_remaining_lane_count(net):
    exiting = make_vehicle(net, 500.0, 5, Route(None, 2))
    assert remaining_lane_count(exiting, net) == 4
    exiting.lane = 1
    assert remaining_lane_count(exiting, net) == 0
    through = make_vehicle(net, 500.0, 3, Route(None, None))
    assert remaining_lane_count(through, net) == 0
    ramp_vehicle = make_vehicle(net, 210.0, 0, Route(1, 2), on_accel_lane=True)
    with pytest.raises(ContractViolation):
        remaining_lane_count(ramp_vehicle, net)


def test_routes(net):
    assert Route(None, 2).label() == "main>off2"
    assert Route(1, None).label() == "ramp1>end"
    assert Route.parse("ramp1>off2") == Route(1, 2)
    # canonical routes: exits strictly downstream of entries
    for route in (Route(None, 2), Route(None, 3), Route(None, None), Route(1, 2)):
        net.validate_route(route)
    feasible = net.feasible_routes(None)
    assert Route(None, None) in feasible and Route(None, 1) in feasible
    from_last_ramp = net.feasible_routes(3)
    assert Route(3, None) in from_last_ramp
    assert Route(3, 1) not in from_last_ramp


def test_invalid_geometry_rejected():
    with pytest.raises(ContractViolation):
        # clusters overlapping the warm-up zone
        RoadNetwork(clusters=evenly_spaced_clusters(start=10.0))
    with pytest.raises(ContractViolation):
        # extends past the end
        RoadNetwork(mainline_length=2000.0, clusters=evenly_spaced_clusters())
    with pytest.raises(ContractViolation):
        ClusterZone(1, 200.0, 100.0, RampSpec("on", 150.0, 200.0), RampSpec("off", 180.0))
    with pytest.raises(ContractViolation):
        RampSpec("on", 100.0, 0.0)


def test_lane_centers(net):
    assert net.lane_center(1) == pytest.approx(1.6)
    assert net.lane_center(5) == pytest.approx(14.4)
    assert net.lane_center(road.ACCEL_LANE) == pytest.approx(-1.6)
