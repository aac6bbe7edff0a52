import numpy as np
import pytest
from astropy.utils.exceptions import AstropyUserWarning
from numpy.testing import assert_allclose

from mvsde_tools import conf
from mvsde_tools.metrics import EmpiricalMeasure
from mvsde_tools.model import (
    DiffusionSpec, LinearInteraction, LyapunovSpec, ModelSpec,
    PairwiseInteraction, PsiProfile, builtin_model, check_B1,
    check_compact_function, check_decomposition, check_dissipativity,
    check_growth_conditions, check_interaction_bound, check_lyapunov,
    check_psi_class, drift, model_from_dict, piecewise_polynomial_model)
from mvsde_tools.utils.exceptions import ModelEvaluationError


def _line(lo, hi, n):
    return np.linspace(lo, hi, n)[:, None]


def _custom(b1):
    return ModelSpec(name='custom', dim=1, b1=b1,
                     diffusion=DiffusionSpec.isotropic(2.0, 1))


def test_drift_builtin():
    assert_allclose(drift(builtin_model('ou'), [2.0]), [-2])
    assert_allclose(drift(builtin_model('granular_media', beta=0.1),
                          [1.0], EmpiricalMeasure([0.0])), [-2.1])
    mu = EmpiricalMeasure([0.0, 1.0])
    assert_allclose(drift(builtin_model('mean_field_ou', beta=0.1), [1.0], mu),
                    [-1.05])
    assert_allclose(drift(builtin_model('double_well'), [[0.0], [2.0]]),
                    [[0], [-6]])
    assert_allclose(drift(builtin_model('partial_dissipative'), [0.5]),
                    [0.0])


def test_drift_needs_measure():
    with pytest.raises(ValueError, match='needs a measure'):
        drift(builtin_model('mean_field_ou'), [1.0])


def test_freeze():
    model = builtin_model('mean_field_ou', beta=0.1)
    frozen = model.freeze(EmpiricalMeasure([0.0]))
    assert model.distribution_dependent_drift
    assert not frozen.distribution_dependent_drift
    # The frozen measure wins over the one passed in.
    assert_allclose(drift(frozen, [1.0], EmpiricalMeasure([5.0])), [-1.1])


def test_drift_not_finite():
    model = _custom(lambda x: np.full_like(x, np.inf))
    with pytest.raises(ModelEvaluationError) as exc:
        drift(model, [[0.0], [1.0]])
    assert_allclose(exc.value.x, [0])


def test_singular_part():
    model = builtin_model('ou', b0={'kind': 'sign', 'amplitude': 0.5})
    assert_allclose(drift(model, [[-1.0], [2.0]]), [[1.5], [-2.5]])
    model = builtin_model('ou', dim=2, b0={'kind': 'indicator',
                                          'amplitude': 1, 'radius': 1})
    assert_allclose(drift(model, [[0.5, 0], [2, 0]]), [[0.5, 1], [-2, 0]])


def test_model_from_dict():
    model = model_from_dict({'name': 'ou', 'dim': 2,
                             'params': {'theta': 3.0}})
    assert model.dim == 2
    assert_allclose(drift(model, [1.0, -1.0]), [-3, 3])
    with pytest.raises(ValueError, match='Unknown model'):
        model_from_dict({'name': 'lorenz'})


def test_piecewise_polynomial_model():
    model = piecewise_polynomial_model([-1, 0, 1], [[0, -1], [0, -2]])
    assert_allclose(drift(model, [[-0.5], [0.5]]), [[-0.5], [-1]])


def test_pairwise_matches_linear():
    rng = np.random.default_rng(3)
    mu = EmpiricalMeasure(rng.normal(size=(50, 2)))
    x = rng.normal(size=(7, 2))
    pairwise = PairwiseInteraction(lambda x, z: -(x - z), chunk=3)
    linear = LinearInteraction(1.0)
    assert_allclose(pairwise.average(x, mu), linear.average(x, mu))


def test_pairwise_warns_on_large_n():
    kernel = PairwiseInteraction(lambda x, z: x - z)
    with conf.set_temp('kernel_warn_n', 2):
        with pytest.warns(AstropyUserWarning, match='O\\(N\\^2\\)'):
            kernel.prepare(EmpiricalMeasure([0.0, 1.0, 2.0]))


def test_diffusion_split():
    diff = DiffusionSpec(1, matrix=[[2.0]], alpha=1.0,
                         sigma_hat=[[np.sqrt(3)]])
    assert diff.noise_dim == 2
    assert check_decomposition(diff, _line(-1, 1, 3))
    xi = np.array([[1.0, 1.0]])
    assert_allclose(diff.apply(np.zeros((1, 1)), xi), [[1 + np.sqrt(3)]])

    with pytest.raises(ValueError, match='does not match'):
        DiffusionSpec(1, matrix=[[2.0]], alpha=1.0, sigma_hat=[[1.0]])
    with pytest.raises(ValueError):
        DiffusionSpec(1)


def test_check_B1():
    def phi(r):
        return 1 + r

    grid = _line(-10, 10, 201)
    assert check_B1(builtin_model('ou'), phi, 1, 0.5, grid).passed

    report = check_B1(_custom(lambda x: x), phi, 1, 0.5, grid)
    assert not report.passed
    assert report.min_slack < 0
    assert report.n_points == 201

    assert check_B1(builtin_model('granular_media'), phi, 10, 1,
                    grid).passed


def test_check_lyapunov():
    lyap = LyapunovSpec.quadratic(K=10, eps=0.01)
    assert check_lyapunov(builtin_model('ou'), lyap, _line(-5, 5, 101)).passed

    report = check_lyapunov(_custom(lambda x: np.zeros_like(x)), lyap,
                            [[-50.0], [50.0]])
    assert not report.passed
    assert len(report.violations) == 2

    # V = 1 holds whenever K > eps.
    assert check_lyapunov(builtin_model('double_well'),
                          LyapunovSpec.constant(K=1), _line(-3, 3, 31)).passed
    assert not check_lyapunov(builtin_model('double_well'),
                              LyapunovSpec.constant(K=0),
                              _line(-3, 3, 31)).passed


def test_lyapunov_eps_range():
    with pytest.raises(ValueError):
        LyapunovSpec.quadratic(K=1, eps=1.5)


def test_check_dissipativity():
    rng = np.random.default_rng(0)
    pairs = [(rng.normal(size=1), None, rng.normal(size=1), None)
             for _ in range(20)]
    model = builtin_model('ou')
    assert check_dissipativity(model, K1=-2, K2=0, pairs=pairs).passed
    assert not check_dissipativity(model, K1=-3, K2=0, pairs=pairs).passed



@pytest.mark.parametrize(('mode', 'passed'), [('variation', True),
                                              ('wasserstein', False)])
def test_check_dissipativity_uses_kernel_mode(mode, passed):
    kernel = PairwiseInteraction(lambda x, z: np.tanh(z - x), mode=mode)
    model = ModelSpec(name='custom', dim=1, b1=lambda x: np.zeros_like(x),
                      diffusion=DiffusionSpec.isotropic(2.0, 1),
                      interaction=kernel)
    mu = EmpiricalMeasure([0.0])
    nu = EmpiricalMeasure([0.01])
    expected = {'variation': 2, 'wasserstein': 0.01}[mode]
    assert_allclose(kernel.measure_distance(mu, nu), expected)
    # the interaction term needs K2 d^2 >= 0.53, which only TV reaches
    report = check_dissipativity(model, K1=-4, K2=1, pairs=[([0.5], mu,
                                                               [0.0], nu)])
    assert report.passed == passed


def test_check_psi_class():
    grid = np.logspace(-6, 2, 200)
    assert check_psi_class(PsiProfile.identity(), grid)
    assert check_psi_class(PsiProfile.exponential(), grid)
    assert not check_psi_class(PsiProfile.square(), grid)
    with pytest.raises(ValueError):
        check_psi_class(PsiProfile.identity(), [0.0, 1.0])
    with pytest.raises(ValueError, match='Unknown psi'):
        PsiProfile.from_name('cubic')


def test_check_growth_conditions():
    report = check_growth_conditions(lambda r: 1 + r, PsiProfile.identity(),
                                     np.logspace(0.5, 3, 20))
    assert report.passed
    assert report.details['alpha'] > 1
    assert report.details['psi_tail'] == 0


def test_check_compact_function():
    assert check_compact_function(LyapunovSpec.quadratic(K=1), 2).passed
    assert not check_compact_function(LyapunovSpec.constant(K=1), 2).passed


def test_check_interaction_bound():
    model = builtin_model('mean_field_ou')
    bounded = ModelSpec(name='bounded', dim=1, b1=model.b1,
                        diffusion=model.diffusion,
                        interaction=LinearInteraction(1.0, bound=0.5))
    with pytest.warns(AstropyUserWarning, match='above the declared bound'):
        report = check_interaction_bound(bounded, _line(-1, 1, 5))
    assert not report.passed
    assert_allclose(report.details['sampled_max'], 2)

    with pytest.raises(ValueError):
        check_interaction_bound(model, _line(-1, 1, 5))
