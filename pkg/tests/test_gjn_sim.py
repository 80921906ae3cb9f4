import numpy as np
import pytest
from scipy import stats

from multiscale_gjn.errors import EventOverflow, GridMismatch, NegativeStart
from multiscale_gjn.gjn_sim import (
    SERVICE, Primitives, lowest_initial, matching_initial, mm1_scaled_mean,
    multiscale_probe, replicate_probes, scaled_obs_grid, scaled_path, simulate,
    simulate_reference, stationary_sample)
from multiscale_gjn.network_model import (
    DistributionSpec, NetworkSpec, ScaleRegime, random_network, single_station, tandem)
from multiscale_gjn.srbm_sim import SrbmSpec, simulate_srbm_batch

DET = DistributionSpec("deterministic")


def dd1():
    return single_station(arrival=DET, service=DET)


class TestHandTraces:
    def test_dd1(self):
        # arrivals at 1, 2, ...; each service takes 0.5
        out = simulate(dd1(), 0.5, [0], 11.0, [0.75, 1.0, 1.25, 1.5, 10.0, 10.5],
                       seed=1, mu=[2.0])
        assert out.queue_lengths[:, 0].tolist() == [0, 1, 1, 0, 1, 0]
        assert out.arrivals[-2:, 0].tolist() == [10, 10]
        assert out.departures[-2:, 0].tolist() == [9, 10]
        assert out.busy_times[-2:, 0] == pytest.approx([4.5, 5.0])
        assert out.idle_regulator[-1, 0] == pytest.approx(2.0 * (10.5 - 5.0))

    def test_initial_jobs(self):
        # two jobs at time 0, no arrivals before t = 1, service 0.25
        out = simulate(dd1(), 0.5, [2], 0.9, [0.25, 0.5, 0.9], seed=1, mu=[4.0])
        assert out.queue_lengths[:, 0].tolist() == [1, 0, 0]
        assert out.busy_times[:, 0] == pytest.approx([0.25, 0.5, 0.5])

    def test_deterministic_tandem(self):
        spec = NetworkSpec.build([[0, 1], [0, 0]], [1, 0], ScaleRegime.singletons([1, 2]),
                                 arrival=DET, service=DET)
        out = simulate(spec, 0.5, [0, 0], 5.0, [1.0, 1.3, 4.95], seed=0, mu=[2.5, 2.0])
        # arrival at 1, leaves 1 at 1.4, leaves 2 at 1.9
        assert out.queue_lengths.tolist() == [[1, 0], [1, 0], [0, 0]]
        assert out.routed_in[-1].tolist() == [0, 4]


class TestKernelAgainstReference:
    def test_random_networks(self, rng):
        for i in range(12):
            spec = random_network(rng, int(rng.integers(1, 6)))
            z0 = rng.integers(0, 4, spec.J)
            obs = np.sort(rng.uniform(0, 60, 25))
            a = simulate(spec, 0.2, z0, 60.0, obs, seed=i, replication=3)
            b = simulate_reference(spec, 0.2, z0, 60.0, obs, seed=i, replication=3)
            assert np.array_equal(a.queue_lengths, b.queue_lengths)
            assert np.array_equal(a.departures, b.departures)
            assert np.allclose(a.busy_times, b.busy_times, rtol=1e-12, atol=1e-12)
            assert np.allclose(a.area, b.area, rtol=1e-10)
            assert a.event_count == b.event_count

    def test_crosses_chunk_boundaries(self):
        spec = tandem()
        obs = np.linspace(0, 20_000, 11)
        a = simulate(spec, 0.3, [0, 0], 20_000.0, obs, seed=2)
        b = simulate_reference(spec, 0.3, [0, 0], 20_000.0, obs, seed=2)
        assert a.arrivals[-1, 0] > 3 * 4096
        assert np.array_equal(a.queue_lengths, b.queue_lengths)


class TestInvariants:
    def test_random_runs(self, rng):
        for i in range(10):
            spec = random_network(rng, int(rng.integers(1, 7)))
            out = simulate(spec, 0.1, np.zeros(spec.J, int), 200.0,
                           np.linspace(0, 200, 41), seed=i)
            assert out.check_invariants() == []

    def test_work_conservation(self, rng):
        # busy time = completed service work + elapsed part of the current service
        spec = random_network(rng, 3)
        seed, rep = 9, 0
        out = simulate(spec, 0.2, [1, 0, 2], 300.0, np.linspace(1, 300, 30), seed, rep)
        prim = Primitives(spec, seed, rep)
        s = prim.buf[SERVICE]
        for m in range(out.sample_times.size):
            for j in range(spec.J):
                D, Z, B = out.departures[m, j], out.queue_lengths[m, j], out.busy_times[m, j]
                done = s[j, :D].sum() / out.mu[j]
                if Z > 0:
                    assert -1e-9 <= B - done < s[j, D] / out.mu[j] + 1e-9
                else:
                    assert B == pytest.approx(done, abs=1e-9)

    def test_determinism(self):
        spec = tandem()
        a = simulate(spec, 0.2, [1, 1], 50.0, [10.0, 50.0], seed=4, replication=2)
        b = simulate(spec, 0.2, [1, 1], 50.0, [10.0, 50.0], seed=4, replication=2)
        c = simulate(spec, 0.2, [1, 1], 50.0, [10.0, 50.0], seed=4, replication=3)
        assert np.array_equal(a.queue_lengths, b.queue_lengths)
        assert not np.array_equal(a.departures, c.departures)

    def test_event_cap(self):
        with pytest.raises(EventOverflow):
            simulate(tandem(), 0.2, [0, 0], 1000.0, [1000.0], seed=1, event_cap=100)

    def test_bad_inputs(self):
        with pytest.raises(NegativeStart):
            simulate(tandem(), 0.2, [-1, 0], 1.0, [1.0], seed=1)
        with pytest.raises(GridMismatch):
            simulate(tandem(), 0.2, [0, 0], 1.0, [2.0], seed=1)
        with pytest.raises(ValueError):
            simulate(tandem(), 0.2, [0, 0], 1.0, [0.5, 0.2], seed=1)


class TestPrimitives:
    @pytest.mark.parametrize("dist", [DistributionSpec("exponential"),
                                      DistributionSpec("erlang", {"k": 2}),
                                      DistributionSpec("lognormal", {"sigma": 0.5})])
    def test_unit_means(self, dist):
        spec = single_station(arrival=dist, service=dist)
        prim = Primitives(spec, 3, chunk=1_000_000)
        assert abs(prim.buf[0, 0].mean() - 1) < 0.005
        assert abs(prim.buf[1, 0].mean() - 1) < 0.005

    def test_streams_independent(self):
        prim = Primitives(tandem(), 3, chunk=50_000)
        r = np.corrcoef(prim.buf[0, 0], prim.buf[1, 0])[0, 1]
        assert abs(r) < 4 / np.sqrt(50_000)

    def test_heavier_load_longer_queues(self):
        # sign test over paired seeds: smaller r means higher load
        spec = single_station()
        wins = 0
        for i in range(30):
            hi = simulate(spec, 0.05, [0], 2000.0, [2000.0], seed=i).area[-1, 0]
            lo = simulate(spec, 0.5, [0], 2000.0, [2000.0], seed=i).area[-1, 0]
            wins += hi > lo
        assert stats.binomtest(wins, 30).pvalue < 1e-3 and wins > 15


class TestScaling:
    def test_initial_states(self):
        reg = ScaleRegime.singletons([1.0, 2.0])
        assert matching_initial(reg, 0.1, [1.0, 1.0]).tolist() == [10, 100]
        assert lowest_initial(reg, 0.1, [1.0, 0.25]).tolist() == [10, 3]

    def test_scaled_path(self):
        reg = tandem().regime
        obs = scaled_obs_grid([0, 1, 2], 1, reg, 0.1)
        assert obs.tolist() == pytest.approx([0.0, 100.0, 200.0])
        out = simulate(tandem(), 0.1, [10, 100], 200.0, obs, seed=1)
        p = scaled_path(out, 1, reg, stations=[1], scaled_times=[0.0, 1.0, 2.0])
        assert p.values[0, 0] == pytest.approx(1.0)
        assert np.allclose(p.values[:, 0], 0.1 * out.queue_lengths[:, 0])
        full = scaled_path(out, 1, reg)
        assert np.allclose(full.times, [0, 1, 2])
        with pytest.raises(GridMismatch):
            scaled_path(out, 1, reg, scaled_times=[0.5])
        with pytest.raises(GridMismatch):
            scaled_path(out, 1, reg, scaled_times=[3.0])

    def test_exponent_zero_is_unscaled(self):
        reg = ScaleRegime.singletons([0.0])
        spec = NetworkSpec.build([[0.0]], [1.0], reg)
        out = simulate(spec, 0.5, [3], 4.0, [0.0, 2.0, 4.0], seed=1)
        p = scaled_path(out, 1, reg)
        assert np.array_equal(p.values, out.queue_lengths.astype(float))
        assert np.array_equal(p.times, out.sample_times)
        assert scaled_obs_grid([1.0, 2.0], 1, reg, 0.5).tolist() == [1.0, 2.0]

    def test_probe_worker_invariance(self):
        a = replicate_probes(tandem(), 0.2, [1, 1], [5.0, 10.0], 3, 6, workers=1)
        b = replicate_probes(tandem(), 0.2, [1, 1], [5.0, 10.0], 3, 6, workers=3)
        assert np.array_equal(a, b) and a.shape == (6, 2, 2)

    def test_multiscale_probe_clocks(self):
        spec = tandem()
        r = 0.2
        joint = multiscale_probe(spec, r, [5, 25], 0.5, 3, 4)
        raw1 = replicate_probes(spec, r, [5, 25], [0.5 / r**2], 3, 4)[:, 0, 0] * r
        raw2 = replicate_probes(spec, r, [5, 25], [0.5 / r**4], 3, 4)[:, 0, 1] * r**2
        assert np.allclose(joint[:, 0], raw1) and np.allclose(joint[:, 1], raw2)

    def test_station_one_mean_matches_rbm(self):
        # station 1 of the matching tandem converges to RBM(1, -1, 2, 1) on clock r
        r = 0.05
        z = replicate_probes(tandem(), r, [20, 400], [400.0], 11, 600, scale=r)[:, 0, 0]
        rbm = simulate_srbm_batch(SrbmSpec([1.0], [-1.0], [[2.0]], [[1.0]]), 1.0, 1e-3,
                                  seed=12, replications=2000, probe_steps=[1000])
        ref = rbm[:, 0, 0, 0]
        se = np.sqrt(z.var() / z.size + ref.var() / ref.size)
        assert abs(z.mean() - ref.mean()) < 4 * se + 0.05


class TestStationary:
    def test_mm1_mean(self):
        s = stationary_sample(single_station(), 0.2, seed=3, burn_in=50, batches=100,
                              batch_len=20)
        assert mm1_scaled_mean(0.2) == pytest.approx(1.0)
        m = s.means[:, 0]
        assert abs(m.mean() - 1.0) < 4 * m.std() / np.sqrt(m.size) + 0.05
        assert s.boundary.shape == (100, 1)
