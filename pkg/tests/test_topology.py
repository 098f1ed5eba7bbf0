import numpy as np
import pytest

from uwhfl.channel import AcousticParams
from uwhfl.errors import ConfigError
from uwhfl.topology import (DeploymentConfig, GaussMarkovState, MobilityConfig,
                            Topology, build_graph, deploy, direct_reachability,
                            fog_reachability, gauss_markov_step)

PARAMS = AcousticParams()


def make_topo(n=50, seed=0, **kw):
    cfg = DeploymentConfig(n_sensors=n, seed=seed, **kw)
    return cfg, deploy(cfg, np.random.default_rng([seed, 3]))


class TestDeploymentConfig:
    def test_default_fog_count(self):
        assert DeploymentConfig(n_sensors=100).resolved_n_fogs == 10
        assert DeploymentConfig(n_sensors=5).resolved_n_fogs == 1
        assert DeploymentConfig(n_sensors=100, n_fogs=3).resolved_n_fogs == 3

    def test_default_gateway_centre(self):
        assert DeploymentConfig().resolved_gateway_xy == (1000.0, 1000.0)

    def test_rejects_inverted_strata(self):
        with pytest.raises(ConfigError):
            DeploymentConfig(sensor_depth=(100.0, 400.0), fog_depth=(500.0, 1000.0))

    def test_rejects_nonpositive_volume(self):
        with pytest.raises(ConfigError):
            DeploymentConfig(lx_m=0.0)


class TestDeploy:
    def test_positions_within_strata(self):
        cfg, topo = make_topo(n=200)
        assert topo.sensor_pos.shape == (200, 3)
        assert topo.fog_pos.shape == (20, 3)
        assert np.all(topo.sensor_pos[:, 2] >= 500.0)
        assert np.all(topo.sensor_pos[:, 2] <= 1000.0)
        assert np.all(topo.fog_pos[:, 2] >= 100.0)
        assert np.all(topo.fog_pos[:, 2] <= 400.0)
        assert np.all(topo.sensor_pos[:, :2] >= 0.0)
        assert np.all(topo.sensor_pos[:, 0] <= 2000.0)
        assert topo.gateway_pos[2] == 0.0

    def test_deterministic(self):
        _, a = make_topo(seed=7)
        _, b = make_topo(seed=7)
        np.testing.assert_array_equal(a.sensor_pos, b.sensor_pos)
        np.testing.assert_array_equal(a.fog_pos, b.fog_pos)

    def test_seed_changes_layout(self):
        _, a = make_topo(seed=0)
        _, b = make_topo(seed=1)
        assert not np.array_equal(a.sensor_pos, b.sensor_pos)

    def test_json_round_trip(self, tmp_path):
        _, topo = make_topo()
        path = tmp_path / "topo.json"
        topo.dump(path)
        back = Topology.load(path)
        np.testing.assert_array_equal(back.sensor_pos, topo.sensor_pos)
        np.testing.assert_array_equal(back.fog_pos, topo.fog_pos)
        np.testing.assert_array_equal(back.gateway_pos, topo.gateway_pos)
        assert back.seed == topo.seed


class TestGraph:
    def test_shapes(self):
        _, topo = make_topo(n=30)
        graph = build_graph(topo, PARAMS)
        assert graph.n_sensors == 30
        assert graph.n_fogs == 3
        assert len(graph.s2f) == 30 and len(graph.s2f[0]) == 3
        assert len(graph.f2f) == 3 and len(graph.f2f[0]) == 3

    def test_symmetric_fog_distances(self):
        _, topo = make_topo(n=30)
        graph = build_graph(topo, PARAMS)
        for m in range(3):
            for j in range(3):
                assert graph.f2f[m][j].distance_m == pytest.approx(
                    graph.f2f[j][m].distance_m)

    def test_feasibility_matches_distance_threshold(self):
        # Feasibility is a pure distance cut under fixed params (boundary
        # between 1000 and 1100 m at defaults).
        _, topo = make_topo(n=80)
        graph = build_graph(topo, PARAMS)
        for row in graph.s2f:
            for lb in row:
                if lb.distance_m <= 1000.0:
                    assert lb.feasible
                if lb.distance_m >= 1100.0:
                    assert not lb.feasible


class TestReachability:
    def test_bounds(self):
        _, topo = make_topo(n=100)
        graph = build_graph(topo, PARAMS)
        assert 0.0 <= direct_reachability(graph) <= 1.0
        assert 0.0 <= fog_reachability(graph) <= 1.0

    def test_fog_layer_extends_reach(self):
        # Fogs sit far closer to the sensor stratum than the surface gateway.
        reach_d, reach_f = [], []
        for seed in range(5):
            _, topo = make_topo(n=100, seed=seed)
            graph = build_graph(topo, PARAMS)
            reach_d.append(direct_reachability(graph))
            reach_f.append(fog_reachability(graph))
        assert np.mean(reach_f) > np.mean(reach_d)


class TestMobility:
    def test_step_keeps_fogs_in_stratum(self):
        cfg, topo = make_topo(n=50)
        mob = MobilityConfig(mean_speed_mps=2.0, dt_s=600.0)
        state = GaussMarkovState.init(5, mob, np.random.default_rng(1))
        pos = topo.fog_pos
        for t in range(20):
            pos, state = gauss_markov_step(pos, state, mob, cfg,
                                           np.random.default_rng([0, 4, t]))
        assert np.all(pos[:, 2] >= 100.0) and np.all(pos[:, 2] <= 400.0)
        assert np.all(pos[:, 0] >= 0.0) and np.all(pos[:, 0] <= 2000.0)

    def test_velocity_relaxes_to_mean(self):
        cfg, topo = make_topo(n=10)
        mob = MobilityConfig(mean_speed_mps=1.0, memory_alpha=0.5, noise_frac=0.0)
        state = GaussMarkovState.init(1, mob, np.random.default_rng(2))
        pos = topo.fog_pos[:1].copy()
        rng = np.random.default_rng(3)
        for _ in range(50):
            pos, state = gauss_markov_step(pos, state, mob, cfg, rng)
        np.testing.assert_allclose(state.velocity, state.mean_velocity, atol=1e-9)

    def test_zero_speed_is_static(self):
        cfg, topo = make_topo(n=10)
        mob = MobilityConfig(mean_speed_mps=0.0)
        state = GaussMarkovState.init(1, mob, np.random.default_rng(4))
        pos, _ = gauss_markov_step(topo.fog_pos[:1].copy(), state, mob, cfg,
                                   np.random.default_rng(5))
        np.testing.assert_array_equal(pos, topo.fog_pos[:1])

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            MobilityConfig(memory_alpha=1.5)
        with pytest.raises(ConfigError):
            MobilityConfig(dt_s=0.0)
