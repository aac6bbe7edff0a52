import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mvsde_tools import conf
from mvsde_tools.geometry import Box, FullSpace, HalfSpace
from mvsde_tools.model import (
    DiffusionSpec, ModelSpec, PsiProfile, builtin_model)
from mvsde_tools.particle import (
    CoupledEnsemble, Dirac, DistanceObserver, Ensemble, FromPoints, Gaussian,
    LocalTimeObserver, MomentObserver, Uniform, coupling_statistics,
    empirical_mean_variance, init_ensemble, sampler_from_dict,
    simulate, simulate_coupled, snapshot_table, step, trajectory_table)
from mvsde_tools.utils.exceptions import (
    BlowUpError, CouplingError, DimensionError, SamplerError)


def test_init_dirac():
    ens = init_ensemble(3, Dirac(0.5), Box([0], [1]), seed=0)
    assert_array_equal(ens.positions[:, 0], [0.5, 0.5, 0.5])
    assert ens.time == 0
    assert ens.step_index == 0
    assert_array_equal(ens.local_time, 0)


def test_init_uniform_mean():
    ens = init_ensemble(10000, Uniform([0], [1]), Box([0], [1]), seed=1)
    assert abs(ens.positions.mean() - 0.5) < 4 * np.sqrt(1 / 12 / 10000)


def test_init_gaussian_projected():
    ens = init_ensemble(1000, Gaussian([0.0]), HalfSpace([1.0]), seed=2)
    assert np.all(ens.positions >= 0)
    # About half the draws land on the boundary.
    assert 0.4 < np.mean(ens.positions == 0) < 0.6


def test_init_errors():
    with pytest.raises(SamplerError):
        init_ensemble(10, Uniform([2], [3]), Box([0], [1]), seed=0)
    with pytest.raises(SamplerError):
        init_ensemble(10, Dirac(2.0), Box([0], [1]), seed=0)
    with pytest.raises(DimensionError):
        init_ensemble(10, Dirac([0.0, 0.0]), Box([0], [1]), seed=0)
    with pytest.raises(ValueError):
        init_ensemble(0, Dirac(0.5), Box([0], [1]), seed=0)


def test_init_deterministic():
    a = init_ensemble(100, Gaussian([0.0, 0.0]), FullSpace(2), seed=7)
    b = init_ensemble(100, Gaussian([0.0, 0.0]), FullSpace(2), seed=7)
    c = init_ensemble(100, Gaussian([0.0, 0.0]), FullSpace(2), seed=7,
                      side=1)
    assert_array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)


def test_from_points():
    pts = np.array([[0.1], [0.2], [0.3]])
    ens = init_ensemble(3, FromPoints(pts), Box([0], [1]), seed=0)
    assert_array_equal(ens.positions, pts)
    ens = init_ensemble(50, FromPoints(pts), Box([0], [1]), seed=0)
    assert set(ens.positions[:, 0]) <= {0.1, 0.2, 0.3}


def test_sampler_from_dict():
    assert isinstance(sampler_from_dict({'kind': 'dirac', 'point': [1.0]}),
                      Dirac)
    g = sampler_from_dict({'kind': 'gaussian', 'mean': [0, 0],
                           'cov': [1, 4]})
    assert_allclose(g.cov, np.diag([1, 4]))
    with pytest.raises(ValueError, match='Unknown initial law'):
        sampler_from_dict({'kind': 'cauchy'})


def test_step_is_pure():
    ens = init_ensemble(10, Dirac(0.0), FullSpace(1), seed=0)
    new = step(ens, builtin_model('ou'), FullSpace(1), 0.01)
    assert_array_equal(ens.positions, 0)
    assert new.step_index == 1
    assert_allclose(new.time, 0.01)
    with pytest.raises(ValueError):
        step(ens, builtin_model('ou'), FullSpace(1), 0.0)


def test_ou_variance():
    domain = FullSpace(1)
    ens = init_ensemble(20000, Dirac(0.0), domain, seed=3)
    traj = simulate(ens, builtin_model('ou'), domain, 0.01, 1.0,
                    observers=[MomentObserver()])
    assert_allclose(traj.times, [0, 1])
    assert_allclose(traj.statistics['variance'][-1], 1 - np.exp(-2),
                    rtol=0.05)
    assert abs(traj.statistics['mean'][-1]) < 0.03


def test_reflected_bm_stays_in_box():
    domain = Box([0], [1])
    ens = init_ensemble(2000, Dirac(0.5), domain, seed=4)
    traj = simulate(ens, builtin_model('ou', theta=0.0), domain, 1e-3, 1.0,
                    observation_times=np.linspace(0, 1, 11),
                    observers=[LocalTimeObserver()], keep_snapshots=True)
    for snap in traj.snapshots:
        assert np.all((snap.positions >= 0) & (snap.positions <= 1))
    lt = traj.statistics['local_time_total']
    assert lt[0] == 0
    assert np.all(np.diff(lt) >= 0)
    assert lt[-1] > 0


def test_zero_horizon():
    ens = init_ensemble(5, Dirac(0.5), Box([0], [1]), seed=0)
    traj = simulate(ens, builtin_model('ou'), Box([0], [1]), 0.1, 0.0,
                    keep_snapshots=True)
    assert_array_equal(traj.times, [0])
    assert len(traj.snapshots) == 1
    assert traj.final is ens


def test_observation_times_validation():
    ens = init_ensemble(5, Dirac(0.5), Box([0], [1]), seed=0)
    model = builtin_model('ou')
    with pytest.raises(ValueError, match='multiple of dt'):
        simulate(ens, model, Box([0], [1]), 0.3, 1.0)
    with pytest.raises(ValueError, match='increasing'):
        simulate(ens, model, Box([0], [1]), 0.1, 1.0,
                 observation_times=[0.5, 0.2])


@pytest.mark.parametrize('n_workers', [2, 4, 8])
def test_worker_count_does_not_change_result(n_workers):
    domain = Box([-2, -2], [2, 2])
    model = builtin_model('granular_media', dim=2)
    ens = init_ensemble(500, Gaussian([0.0, 0.0]), domain, seed=5)
    with conf.set_temp('block_size', 64):
        one = simulate(ens, model, domain, 0.01, 0.2, n_workers=1)
        many = simulate(ens, model, domain, 0.01, 0.2, n_workers=n_workers)
    assert_array_equal(one.final.positions, many.final.positions)
    assert_array_equal(one.final.local_time, many.final.local_time)


def test_blow_up():
    model = ModelSpec(name='explode', dim=1,
                      b1=lambda x: np.full_like(x, np.inf),
                      diffusion=DiffusionSpec.isotropic(1.0, 1))
    ens = init_ensemble(4, Dirac(0.0), FullSpace(1), seed=0)
    with pytest.raises(BlowUpError) as exc:
        simulate(ens, model, FullSpace(1), 0.1, 0.2)
    assert exc.value.index == 0
    assert_allclose(exc.value.time, 0.1)


def test_distance_observer():
    domain = FullSpace(1)
    reference = init_ensemble(2000, Gaussian([0.0]), domain, seed=100)
    ens = init_ensemble(2000, Dirac(2.0), domain, seed=6)
    traj = simulate(ens, builtin_model('ou'), domain, 0.01, 2.0,
                    observation_times=[0.0, 1.0, 2.0],
                    observers=[DistanceObserver(reference.positions, 'w2')])
    w2 = traj.statistics['w2']
    assert w2[0] > w2[1] > w2[2]

    tab = trajectory_table(traj)
    assert tab.colnames == ['time', 'statistic', 'value']
    assert len(tab) == 3


def _pair(mode, n=1000):
    domain = FullSpace(1)
    x = init_ensemble(n, Dirac(-1.0), domain, seed=7)
    y = init_ensemble(n, Dirac(1.5), domain, seed=8, side=1)
    return CoupledEnsemble(x=x, y=y, mode=mode), domain


def test_synchronous_x_side_matches_plain_run():
    model = builtin_model('mean_field_ou')
    pair, domain = _pair('synchronous', n=200)
    coupled = simulate_coupled(pair, model, domain, 0.01, 0.5)
    plain = simulate(pair.x, model, domain, 0.01, 0.5)
    assert_array_equal(coupled.final.x.positions, plain.final.positions)
    # Same noise on both sides of an OU keeps the gap deterministic.
    assert_allclose(coupled.final.distances(), 2.5 * np.exp(-0.5),
                    rtol=1e-2)


def test_reflection_coupling_meets():
    model = builtin_model('ou')
    pair, domain = _pair('reflection')
    run = simulate_coupled(pair, model, domain, 1e-3, 3.0,
                           observation_times=np.linspace(0, 3, 7))
    frac = run.statistics['fraction_coupled']
    assert frac[0] == 0
    assert np.all(np.diff(frac) >= 0)
    assert frac[-1] > 0.8

    final = run.final
    assert_array_equal(final.x.positions[final.coupled],
                       final.y.positions[final.coupled])

    stats = coupling_statistics(run)
    assert_allclose(stats['psi_distance'], stats['mean_distance'])
    stats = coupling_statistics(run, PsiProfile.exponential())
    assert np.all(stats['psi_distance'] <= stats['mean_distance'])

    tab = snapshot_table(run)
    assert tab.colnames == ['time', 'particle_index', 'side', 'coupled', 'x0']
    assert len(tab) == 7 * 2 * 1000


def test_reflection_needs_split():
    model = ModelSpec(name='direct', dim=1, b1=lambda x: -x,
                      diffusion=DiffusionSpec(1, matrix=[[1.0]]))
    pair, domain = _pair('reflection', n=10)
    with pytest.raises(CouplingError):
        simulate_coupled(pair, model, domain, 0.01, 0.1)


def test_coupled_ensemble_validation():
    x = Ensemble(np.zeros((3, 1)))
    with pytest.raises(DimensionError):
        CoupledEnsemble(x=x, y=Ensemble(np.zeros((4, 1))))
    with pytest.raises(ValueError, match='Unknown coupling mode'):
        CoupledEnsemble(x=x, y=x, mode='maximal')
    assert CoupledEnsemble(x=x, y=x).coupled.all()


def test_propagation_of_chaos():
    domain = FullSpace(1)
    model = builtin_model('mean_field_ou', beta=0.5)
    seeds = range(30)
    small = empirical_mean_variance(model, domain, Dirac(0.0), 50, 0.05, 0.5,
                                    seeds)
    large = empirical_mean_variance(model, domain, Dirac(0.0), 800, 0.05,
                                    0.5, seeds)
    assert small['means'].shape == (30, 1)
    ratio = small['variance'][0] / large['variance'][0]
    assert 4 < ratio < 64
