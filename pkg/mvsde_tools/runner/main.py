"""MVSDE experiment driver.

The main program takes an experiment config (JSON), runs the declared
pipeline and writes CSV results plus ``manifest.json`` to the output
directory. Smaller subcommands evaluate distances between point files
and the closed-form rate constants.

For more information, see :ref:`mvsde-runner-doc`.

"""
# STDLIB
import argparse
import json
import math
import os
import sys

# THIRD-PARTY
import numpy as np
from astropy import log
from astropy.table import Table, vstack

# LOCAL
from . import rio
from .. import pde, rates
from ..geometry import domain_from_dict
from ..metrics import bin_count, distance, noise_floor
from ..model import (LyapunovSpec, PsiProfile, check_B1, check_lyapunov,
                     check_psi_class, model_from_dict)
from ..particle import (CoupledEnsemble, DistanceObserver, LocalTimeObserver,
                        MomentObserver, Trajectory, coupling_statistics,
                        init_ensemble, sampler_from_dict, simulate,
                        simulate_coupled, snapshot_table, trajectory_table)
from ..utils.exceptions import (AcceptanceError, ConfigValidationError,
                                MVSDEError)
from ..utils.io import output_csv, output_manifest, read_csv, read_points
from ..utils.rng import REFERENCE, NoiseStream

__all__ = ['main', 'run_experiment', 'evaluate_acceptance', 'metrics_ledger',
           'ExperimentResult']

__taskname__ = 'mvsde'

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_ACCEPTANCE = 3

# Subcommands that run one stage of a config.
_STAGE_COMMANDS = {'simulate': ('simulate', 'metrics'),
                   'couple': ('couple',),
                   'pde': ('pde',),
                   'fixed-point': ('fixed_point',),
                   'check': ('check',)}


class ExperimentResult:
    """What `run_experiment` produced.

    Attributes
    ----------
    outdir : str

    files : list of str
        CSV basenames, in the order written.

    curves : dict
        Statistic name to ``(times, values)``.

    certificate : `~mvsde_tools.rates.RateCertificate` or `None`

    noise_floors : dict
        Metric label to same-law distance.

    pde_comparisons : dict
        Comparison name to `~mvsde_tools.pde.L1Comparison`.

    checks : dict
        Check name to pass flag.

    final_coupled : float or `None`
        Fraction of coupled pairs at the last time.

    manifest : dict

    """
    def __init__(self, outdir):
        self.outdir = outdir
        self.files = []
        self.curves = {}
        self.certificate = None
        self.noise_floors = {}
        self.pde_comparisons = {}
        self.checks = {}
        self.manifest = None
        self.final_coupled = None


def _write(result, tab, name, overwrite):
    output_csv(tab, os.path.join(result.outdir, name), overwrite=overwrite)
    result.files.append(name)
    log.info(f'{name} written')


def _metric_params(mcfg):
    params = {}
    for key in ('p', 'reg', 'bins', 'pseudo_count'):
        val = getattr(mcfg, key)
        if val is not None:
            params[key] = val
    if mcfg.psi is not None:
        params['profile'] = PsiProfile.from_name(mcfg.psi)
    elif mcfg.name == 'w_psi':
        params['profile'] = PsiProfile.identity()
    return params


def _long_table(times, curves, key):
    rows_t, rows_name, rows_val = [], [], []
    for name, values in curves.items():
        rows_t.append(np.asarray(times, dtype=float))
        rows_name.extend([name] * len(values))
        rows_val.append(np.asarray(values, dtype=float))
    return Table([np.concatenate(rows_t), rows_name,
                  np.concatenate(rows_val)], names=('time', key, 'value'))


# ------ #
# STAGES #
# ------ #

def _stage_simulate(config, ctx, result, n_workers, overwrite, with_metrics):
    integ = config.integrator
    domain = ctx['domain']
    ens0 = init_ensemble(integ.n, sampler_from_dict(config.initial.to_spec()),
                         domain, integ.seed)

    observers = [MomentObserver(), LocalTimeObserver()]
    labels = []
    if with_metrics:
        ref = config.reference
        ctx['reference'] = init_ensemble(
            ref.n, sampler_from_dict(ref.law.to_spec()), domain,
            ref.seed).measure()
        for mcfg in config.metrics:
            labels.append(mcfg.label)
            observers.append(DistanceObserver(
                ctx['reference'], metric=mcfg.name, name=mcfg.label,
                **_metric_params(mcfg)))

    traj = simulate(ens0, ctx['model'], domain, integ.dt, integ.T,
                    observation_times=integ.observation_times(),
                    observers=observers,
                    keep_snapshots=config.outputs.snapshots,
                    n_workers=n_workers)
    ctx['trajectory'] = traj
    for name, values in traj.statistics.items():
        result.curves[name] = (traj.times, values)

    moments = Trajectory(times=traj.times,
                         statistics={k: v for k, v in traj.statistics.items()
                                     if k not in labels})
    _write(result, trajectory_table(moments), 'trajectory.csv', overwrite)
    if labels:
        _write(result, _long_table(
            traj.times, {k: traj.statistics[k] for k in labels}, 'metric'),
            'distances.csv', overwrite)
    if config.outputs.snapshots:
        _write(result, snapshot_table(traj), 'snapshots.csv', overwrite)


def _stage_couple(config, ctx, result, n_workers, overwrite):
    integ = config.integrator
    ccfg = config.coupling
    domain = ctx['domain']
    seed_y = integ.seed if integ.seed_y is None else integ.seed_y
    x0 = init_ensemble(integ.n, sampler_from_dict(config.initial.to_spec()),
                       domain, integ.seed)
    y0 = init_ensemble(integ.n,
                       sampler_from_dict(config.initial_y.to_spec()),
                       domain, seed_y, side=1)
    pair0 = CoupledEnsemble(x0, y0, mode=ccfg.mode,
                            meet_tolerance=ccfg.meet_tolerance)
    run = simulate_coupled(pair0, ctx['model'], domain, integ.dt, integ.T,
                           observation_times=integ.observation_times(),
                           n_workers=n_workers)

    params = {'scale': ccfg.psi_scale} if ccfg.psi == 'exponential' else {}
    stats = coupling_statistics(run, PsiProfile.from_name(ccfg.psi,
                                                          **params))
    for name in ('fraction_coupled', 'mean_distance', 'psi_distance'):
        result.curves[name] = (stats['time'], stats[name])
    result.final_coupled = float(stats['fraction_coupled'][-1])
    _write(result, Table([stats[k] for k in stats], names=list(stats)),
           'coupling.csv', overwrite)
    if config.outputs.snapshots:
        _write(result, snapshot_table(run), 'coupled_snapshots.csv',
               overwrite)


def _stage_fixed_point(config, ctx, result, n_workers, overwrite):
    fcfg = config.fixed_point
    domain = ctx['domain']
    start = init_ensemble(fcfg.n, sampler_from_dict(config.initial.to_spec()),
                          domain, fcfg.seed)
    res = rates.fixed_point_invariant(
        ctx['model'], domain, start, n=fcfg.n, dt=fcfg.dt,
        T_stat=fcfg.T_stat, tol=fcfg.tol, max_iters=fcfg.max_iters,
        seed=fcfg.seed + 1, n_workers=n_workers)
    ctx['fixed_point'] = res

    cols = {'iteration': np.arange(1, res.iterations + 1),
            'w1_gap': res.history,
            'converged': np.full(res.iterations, int(res.converged))}
    means = np.atleast_2d(res.means[1:])
    for i in range(means.shape[1]):
        cols[f'mean_{i}'] = means[:, i]
    _write(result, cols, 'fixed_point.csv', overwrite)


def _pde_initial(pcfg, icfg):
    if icfg.kind == 'uniform':
        return pde.DensityGrid.uniform(pcfg.a, pcfg.b, pcfg.M)
    return pde.DensityGrid.from_function(
        lambda x: np.exp(-0.5 * ((x - icfg.mean) / icfg.std) ** 2),
        pcfg.a, pcfg.b, pcfg.M)


def _pde_dt(pcfg, grid, b, W, interval):
    """Requested dt, or 0.9 of the stable step rounded to divide the
    observation interval."""
    if pcfg.dt is not None:
        return pcfg.dt
    safe = 0.9 * pde.stable_dt(grid, b, W, pcfg.diffusion)
    if interval <= 0:
        return safe
    return interval / math.ceil(interval / safe)


def _stage_pde(config, ctx, result, n_workers, overwrite):
    pcfg = config.pde
    b, W = pde.from_model(ctx['model'])
    interval = pcfg.observe_every if pcfg.observe_every else pcfg.T
    obs = None
    if pcfg.observe_every:
        k = int(round(pcfg.T / pcfg.observe_every))
        obs = np.arange(k + 1) * pcfg.observe_every

    density, runs = [], []
    for i, icfg in enumerate(pcfg.initial):
        grid0 = _pde_initial(pcfg, icfg)
        dt = _pde_dt(pcfg, grid0, b, W, interval)
        snaps = pde.run(grid0, b, W, dt, pcfg.T, observation_times=obs,
                        diffusion=pcfg.diffusion, flux=pcfg.flux)
        runs.append(snaps)
        tab = pde.density_table(snaps)
        tab.add_column(np.full(len(tab), i), name='initial', index=0)
        density.append(tab)
    _write(result, vstack(density), 'pde_density.csv', overwrite)

    comparisons = {}
    traj = ctx.get('trajectory')
    if traj is not None and abs(config.integrator.T - pcfg.T) < 1e-12:
        comparisons['particles_T'] = pde.l1_against_particles(
            runs[0][-1], traj.final)

    if pcfg.steady_state:
        ss = pde.steady_state(_pde_initial(pcfg, pcfg.initial[0]), b, W,
                              tol=pcfg.tol, T_max=pcfg.T_max,
                              diffusion=pcfg.diffusion, flux=pcfg.flux)
        rows = []
        for i, snaps in enumerate(runs):
            times, l1 = pde.l1_decay(snaps, ss.grid)
            result.curves[f'pde_l1_{i}'] = (times, l1)
            rows.append(Table([np.full(len(times), i), times, l1],
                              names=('initial', 'time', 'l1')))
        _write(result, vstack(rows), 'pde_l1.csv', overwrite)
        fp = ctx.get('fixed_point')
        if fp is not None:
            comparisons['fixed_point'] = pde.l1_against_particles(
                ss.grid, fp.measure.points)

    if comparisons:
        result.pde_comparisons = comparisons
        names = list(comparisons)
        _write(result, Table(
            [names, [comparisons[k].l1 for k in names],
             [comparisons[k].tv for k in names],
             [comparisons[k].leaked_fraction for k in names]],
            names=('comparison', 'l1', 'tv', 'leaked_fraction')),
            'pde_particles.csv', overwrite)


def _stage_metrics(config, ctx, result, n_workers, overwrite):
    integ = config.integrator
    ref = config.reference
    sampler = sampler_from_dict(ref.law.to_spec())
    traj = ctx['trajectory']

    def draw(seed):
        return init_ensemble(integ.n, sampler, ctx['domain'], seed).measure()

    rows = []
    for mcfg in config.metrics:
        params = _metric_params(mcfg)
        floor = noise_floor(
            draw, lambda mu, nu: distance(mcfg.name, mu, nu, **params),
            seeds=(ref.seed + 1, ref.seed + 2))
        result.noise_floors[mcfg.label] = floor
        n_bins = bin_count(mcfg.name, traj.final.measure(), ctx['reference'],
                           bins=params.get('bins', 'fd'))
        rows.append((mcfg.label, float(traj.statistics[mcfg.label][-1]),
                     floor, n_bins))
    _write(result, Table(rows=rows or None,
                         names=('metric', 'value', 'noise_floor', 'n_bins'),
                         dtype=(str, float, float, int)),
           'metrics.csv', overwrite)


def _stage_fit(config, ctx, result, n_workers, overwrite):
    fcfg = config.rate_fit
    if fcfg.statistic not in result.curves:
        raise ValueError(f'No statistic {fcfg.statistic!r} to fit; '
                         f'available: {", ".join(sorted(result.curves))}')
    times, values = result.curves[fcfg.statistic]
    floor = fcfg.noise_floor
    if fcfg.auto_noise_floor:
        floor = max(floor, result.noise_floors.get(fcfg.statistic, 0.0))
    cert = rates.fit_rate(times, values, noise_floor=floor,
                          burn_in=fcfg.burn_in)
    result.certificate = cert
    row = {'statistic': [fcfg.statistic]}
    row.update({k: [v] for k, v in cert.to_row().items()})
    _write(result, row, 'rate.csv', overwrite)


def _stage_check(config, ctx, result, n_workers, overwrite):
    ccfg = config.checks
    model = ctx['model']
    rows = []
    if ccfg.B1 is not None:
        rep = check_B1(model, np.polynomial.Polynomial(ccfg.B1.phi),
                       ccfg.B1.c1, ccfg.B1.c2, ccfg.B1.grid.points())
        rows.append((rep.name, rep.passed, rep.n_points,
                     len(rep.violations), rep.min_slack))
    if ccfg.lyapunov is not None:
        lcfg = ccfg.lyapunov
        lyap = LyapunovSpec.quadratic(lcfg.K,
                                      Phi=np.polynomial.Polynomial(lcfg.Phi),
                                      eps=lcfg.eps)
        rep = check_lyapunov(model, lyap, lcfg.grid.points())
        rows.append((rep.name, rep.passed, rep.n_points,
                     len(rep.violations), rep.min_slack))
    if ccfg.psi_class is not None:
        pcfg = ccfg.psi_class
        params = {'scale': pcfg.scale} if pcfg.profile == 'exponential' else {}
        ok = check_psi_class(PsiProfile.from_name(pcfg.profile, **params),
                             np.geomspace(pcfg.r_min, pcfg.r_max, pcfg.n))
        rows.append(('psi_class', ok, pcfg.n, -1, np.nan))
    for row in rows:
        result.checks[row[0]] = bool(row[1])
        if not row[1]:
            log.warning(f'Condition check {row[0]} failed')
    _write(result, Table(rows=rows or None,
                         names=('check', 'passed', 'n_points',
                                'n_violations', 'min_slack'),
                         dtype=(str, int, int, int, float)),
           'checks.csv', overwrite)


_STAGE_RUNNERS = {'couple': _stage_couple, 'fixed_point': _stage_fixed_point,
                  'pde': _stage_pde, 'metrics': _stage_metrics,
                  'fit': _stage_fit, 'check': _stage_check}


# ---------- #
# ACCEPTANCE #
# ---------- #

def evaluate_acceptance(acceptance, result):
    """Failed acceptance thresholds, as messages.

    Parameters
    ----------
    acceptance : `~mvsde_tools.runner.rio.AcceptanceConfig` or `None`

    result : `ExperimentResult`

    Returns
    -------
    failures : list of str
        Empty when every threshold holds.

    """
    if acceptance is None:
        return []
    failures = []
    cert = result.certificate
    wants_rate = (acceptance.min_rate is not None or
                  acceptance.max_rate is not None or
                  acceptance.min_r_squared is not None)
    if wants_rate and cert is None:
        failures.append('no fitted rate to test')
    elif cert is not None:
        if acceptance.min_rate is not None and not cert.lam >= \
                acceptance.min_rate:
            failures.append(f'rate {cert.lam:.6g} < {acceptance.min_rate}')
        if acceptance.max_rate is not None and not cert.lam <= \
                acceptance.max_rate:
            failures.append(f'rate {cert.lam:.6g} > {acceptance.max_rate}')
        if (acceptance.min_r_squared is not None and
                not cert.r_squared >= acceptance.min_r_squared):
            failures.append(f'R^2 {cert.r_squared:.6g} < '
                            f'{acceptance.min_r_squared}')

    if acceptance.max_final_distance is not None:
        for label, floor in result.noise_floors.items():
            final = float(result.curves[label][1][-1])
            if not final <= acceptance.max_final_distance:
                failures.append(f'final {label} {final:.6g} > '
                                f'{acceptance.max_final_distance}')

    if acceptance.min_fraction_coupled is not None:
        frac = result.final_coupled
        if frac is None or not frac >= acceptance.min_fraction_coupled:
            failures.append(f'fraction coupled {frac} < '
                            f'{acceptance.min_fraction_coupled}')

    if acceptance.max_pde_l1 is not None:
        if not result.pde_comparisons:
            failures.append('no PDE comparison to test')
        for name, cmp in result.pde_comparisons.items():
            if not cmp.l1 <= acceptance.max_pde_l1:
                failures.append(f'PDE L1 ({name}) {cmp.l1:.6g} > '
                                f'{acceptance.max_pde_l1}')

    if acceptance.checks_pass:
        if not result.checks:
            failures.append('no condition checks ran')
        failures.extend(f'check {name} failed'
                        for name, ok in result.checks.items() if not ok)
    return failures


# ---------- #
# EXPERIMENT #
# ---------- #

def run_experiment(config, outdir=None, n_workers=1, stages=None,
                   overwrite=False):
    """Run an experiment and write its results.

    Stages run in the fixed order of `~mvsde_tools.runner.rio.STAGES`.
    Every CSV depends only on the config, so reruns (with any number of
    workers) reproduce them byte for byte.

    Parameters
    ----------
    config : `~mvsde_tools.runner.rio.ExperimentConfig`, dict or str
        Config, parsed document or JSON filename.

    outdir : str or `None`
        Output directory. Default is ``outputs.outdir`` of the config,
        else the current directory.

    n_workers : int
        Worker threads for the particle stages.

    stages : sequence of str or `None`
        Stages to run instead of the config's ``pipeline``.

    overwrite : bool
        Replace existing output files.

    Returns
    -------
    result : `ExperimentResult`

    Raises
    ------
    mvsde_tools.utils.exceptions.ConfigValidationError
        Invalid config, or a stage lacks its config block.

    mvsde_tools.utils.exceptions.AcceptanceError
        An acceptance threshold failed; all files are still written.

    """
    if not isinstance(config, rio.ExperimentConfig):
        config = rio.load_config(config)
    stages = list(config.pipeline if stages is None else stages)
    unknown = [s for s in stages if s not in rio.STAGES]
    if unknown:
        raise ValueError(f'Unknown stages: {", ".join(unknown)}')
    missing = rio.missing_inputs(config, stages)
    if missing:
        raise ConfigValidationError(*missing[0])

    if outdir is None:
        outdir = config.outputs.outdir or os.curdir
    os.makedirs(outdir, exist_ok=True)
    manifest_file = os.path.join(outdir, 'manifest.json')
    if os.path.exists(manifest_file) and not overwrite:
        raise OSError(f'{manifest_file} exists')

    ctx = {'domain': domain_from_dict(config.domain.model_dump(
               exclude_none=True)),
           'model': model_from_dict(config.model.to_spec())}
    result = ExperimentResult(outdir)
    log.info(f'Experiment {config.name!r}: stages {", ".join(stages)}')

    for stage in rio.STAGES:
        if stage not in stages:
            continue
        log.info(f'Stage {stage}')
        if stage == 'simulate':
            _stage_simulate(config, ctx, result, n_workers, overwrite,
                            with_metrics='metrics' in stages)
        else:
            _STAGE_RUNNERS[stage](config, ctx, result, n_workers, overwrite)

    failures = evaluate_acceptance(config.acceptance, result)
    result.manifest = rio.build_manifest(
        config, outdir, result.files, n_workers=n_workers,
        extras={'stages': [s for s in rio.STAGES if s in stages],
                'acceptance_failures': failures})
    output_manifest(result.manifest, manifest_file, overwrite=overwrite)
    log.info(f'{manifest_file} written')

    if failures:
        raise AcceptanceError('; '.join(failures))
    return result


# ------- #
# METRICS #
# ------- #

def metrics_ledger(points_a, points_b, metric='w1', ledger=None,
                   instance_id=None, seed=0, **params):
    """Distance between two point files, with a split-half noise floor.

    The noise floor is the same-metric distance between two disjoint
    random halves of ``points_a``.

    Parameters
    ----------
    points_a, points_b : str
        CSV point files (see `~mvsde_tools.utils.io.read_points`).

    metric : str

    ledger : str or `None`
        CSV file to append the result row to.

    instance_id : str or `None`
        Row label. Default is ``'<a>:<b>'``.

    seed : int
        Seed of the split.

    params
        Passed on to `~mvsde_tools.metrics.distance`.

    Returns
    -------
    row : `~astropy.table.Table`
        Columns ``instance_id``, ``metric``, ``params``, ``value``,
        ``noise_floor`` and ``n_bins`` (0 for metrics that do not bin).

    """
    x = read_points(points_a)
    y = read_points(points_b)
    value = distance(metric, x, y, **params)

    floor = np.nan
    if len(x) >= 2:
        perm = NoiseStream(seed).generator(0, 0, purpose=REFERENCE) \
            .permutation(len(x))
        half = len(x) // 2
        floor = noise_floor(lambda s: x[perm[s * half:(s + 1) * half]],
                            lambda mu, nu: distance(metric, mu, nu,
                                                    **params),
                            seeds=(0, 1))

    if instance_id is None:
        instance_id = (f'{os.path.basename(points_a)}:'
                       f'{os.path.basename(points_b)}')
    shown = {k: v for k, v in params.items() if k != 'profile'}
    if 'profile' in params:
        shown['profile'] = params['profile'].name
    n_bins = bin_count(metric, x, y, bins=params.get('bins', 'fd'))
    row = Table([[instance_id], [metric], [json.dumps(shown, sort_keys=True)],
                 [float(value)], [float(floor)], [n_bins]],
                names=('instance_id', 'metric', 'params', 'value',
                       'noise_floor', 'n_bins'))
    if ledger is not None:
        tab = vstack([read_csv(ledger), row]) if os.path.isfile(ledger) \
            else row
        output_csv(tab, ledger, overwrite=True)
        log.info(f'{ledger} updated')
    return row


# ----- #
# RATES #
# ----- #

def _rates_table(args):
    if args.which == 'harris':
        lam, delta = rates.harris_rate(args.alpha, args.beta, args.t0,
                                       args.t1)
        return {'lam': [lam], 'delta': [delta]}
    elif args.which == 'kappa1':
        kappa, t_star = rates.kappa1(args.c, args.lam)
        return {'kappa1': [kappa], 't_star': [t_star]}
    elif args.which == 'lemma33':
        res = rates.lemma33_constants(args.c, args.lam, args.q, args.k)
        return {'t_hat': [res.t_hat], 'delta_k': [res.delta_k],
                'lambda_prime': [res.lambda_prime], 'k_q': [res.k_q],
                'valid': [int(res.valid)]}
    elif args.which == 'g2':
        res = rates.corollary44_k(args.alpha, args.theta0, args.theta1,
                                  args.theta2, args.beta, args.zeta)
        return {'k': [res.k], 'integral': [res.integral],
                'beta_threshold': [res.beta_threshold]}
    elif args.which == 'dissipative':
        cert = rates.dissipative_rate(args.K1, args.K2)
        return {k: [v] for k, v in cert.to_row().items()}
    elif args.which == 'ex0':
        ht = rates.build_h_transform(np.polynomial.Polynomial(args.Phi))
        return {'t': [args.t],
                'bound': [rates.ex0_bound(ht, args.V_x, args.k, args.lam,
                                          args.t)],
                'H_infinity': [ht.H_infinity]}
    # fit
    tab = read_csv(args.csvfile)
    cert = rates.fit_rate(tab[args.time_column], tab[args.value_column],
                          noise_floor=args.noise_floor, burn_in=args.burn_in)
    return {k: [v] for k, v in cert.to_row().items()}


def _print_table(columns):
    tab = Table(list(columns.values()), names=list(columns.keys()))
    formats = {name: '%.17g' for name in tab.colnames
               if tab[name].dtype.kind == 'f'}
    tab.write(sys.stdout, format='ascii.csv', formats=formats)


# --- #
# CLI #
# --- #

def _add_config_parser(sub, name, help_text):
    p = sub.add_parser(name, help=help_text)
    p.add_argument('config', help='Experiment config (JSON)')
    return p


def _parser():
    try:
        from ..version import version
    except ImportError:
        version = 'unknown'

    parser = argparse.ArgumentParser(
        prog=__taskname__,
        description='Particle simulator and verification harness for '
                    'reflecting McKean-Vlasov SDEs.')
    parser.add_argument('--version', action='version',
                        version=f'{__taskname__} v{version}')
    parser.add_argument('--outdir', default=None,
                        help='Output directory (default: from config, '
                             'else current directory)')
    parser.add_argument('--n-workers', type=int, default=1,
                        help='Worker threads; does not change results')
    parser.add_argument('--overwrite', action='store_true',
                        help='Replace existing output files')
    parser.add_argument('--debug', action='store_true',
                        help='Log at DEBUG level')
    sub = parser.add_subparsers(dest='command', required=True)

    _add_config_parser(sub, 'run', 'Run the whole pipeline of a config')
    for name in _STAGE_COMMANDS:
        _add_config_parser(sub, name, f'Run the {name} stage of a config')

    p = sub.add_parser('metrics', help='Distance between two point files')
    p.add_argument('points_a')
    p.add_argument('points_b')
    p.add_argument('--metric', default='w1')
    p.add_argument('--p', type=float, default=None)
    p.add_argument('--reg', type=float, default=None)
    p.add_argument('--bins', type=int, default=None)
    p.add_argument('--psi', default=None,
                   choices=('identity', 'exponential', 'square'))
    p.add_argument('--ledger', default=None,
                   help='CSV ledger to append the result to')
    p.add_argument('--instance-id', default=None)
    p.add_argument('--seed', type=int, default=0)

    p = sub.add_parser('rates', help='Closed-form rate constants')
    rsub = p.add_subparsers(dest='which', required=True)
    r = rsub.add_parser('harris')
    for arg in ('alpha', 'beta', 't0', 't1'):
        r.add_argument(arg, type=float)
    r = rsub.add_parser('kappa1')
    r.add_argument('c', type=float)
    r.add_argument('lam', type=float)
    r = rsub.add_parser('lemma33')
    for arg in ('c', 'lam', 'q', 'k'):
        r.add_argument(arg, type=float)
    r = rsub.add_parser('g2')
    for arg in ('alpha', 'theta0', 'theta1', 'theta2', 'beta', 'zeta'):
        r.add_argument(arg, type=float)
    r = rsub.add_parser('dissipative')
    r.add_argument('K1', type=float)
    r.add_argument('K2', type=float)
    r = rsub.add_parser('ex0')
    r.add_argument('V_x', type=float)
    r.add_argument('k', type=float)
    r.add_argument('lam', type=float)
    r.add_argument('t', type=float)
    r.add_argument('--Phi', type=float, nargs='+', default=[1.0, 2.0, 1.0],
                   help='Polynomial coefficients of Phi, ascending')
    r = rsub.add_parser('fit')
    r.add_argument('csvfile')
    r.add_argument('--time-column', default='time')
    r.add_argument('--value-column', default='value')
    r.add_argument('--noise-floor', type=float, default=0.0)
    r.add_argument('--burn-in', type=float, default=None)

    p = sub.add_parser('compare', help='Compare two runs')
    p.add_argument('manifest_a')
    p.add_argument('manifest_b')
    p.add_argument('--tolerances', default=None,
                   help='JSON file mapping keys to absolute tolerances')

    sub.add_parser('schema', help='Print the config JSON schema')
    return parser


def main(args):
    """Driver for command line script.

    Parameters
    ----------
    args : list of str
        Command line arguments.

    Returns
    -------
    status : int
        0 on success. Errors propagate as exceptions.

    Raises
    ------
    OSError
        Input file does not exist.

    mvsde_tools.utils.exceptions.ConfigValidationError
        Config fails to validate.

    mvsde_tools.utils.exceptions.AcceptanceError
        An acceptance threshold failed.

    """
    opts = _parser().parse_args(args)
    if opts.debug:
        log.setLevel('DEBUG')

    if opts.command == 'schema':
        print(json.dumps(rio.config_schema(), indent=2, sort_keys=True))
        return EXIT_OK

    if opts.command == 'rates':
        _print_table(_rates_table(opts))
        return EXIT_OK

    if opts.command == 'metrics':
        params = {k: getattr(opts, k) for k in ('p', 'reg', 'bins')
                  if getattr(opts, k) is not None}
        if opts.psi is not None:
            params['profile'] = PsiProfile.from_name(opts.psi)
        row = metrics_ledger(opts.points_a, opts.points_b, metric=opts.metric,
                             ledger=opts.ledger, instance_id=opts.instance_id,
                             seed=opts.seed, **params)
        _print_table({k: list(row[k]) for k in row.colnames})
        return EXIT_OK

    if opts.command == 'compare':
        tolerances = None
        if opts.tolerances is not None:
            if not os.path.isfile(opts.tolerances):
                raise OSError(f'{opts.tolerances} does not exist')
            with open(opts.tolerances) as fin:
                tolerances = json.load(fin)
        report = rio.compare_runs(opts.manifest_a, opts.manifest_b,
                                  tolerances=tolerances)
        if len(report) == 0:
            print('No differences')
        else:
            report.write(sys.stdout, format='ascii.fixed_width')
        return EXIT_OK

    config = rio.load_config(opts.config)
    outdir = opts.outdir or config.outputs.outdir or os.curdir
    os.makedirs(outdir, exist_ok=True)

    # No point keeping the log from the last run
    runlog = os.path.join(outdir, 'run.log')
    if os.path.exists(runlog) and opts.overwrite:
        os.remove(runlog)
    stages = _STAGE_COMMANDS.get(opts.command)
    if opts.command == 'simulate' and 'metrics' not in config.pipeline:
        stages = ('simulate',)
    with log.log_to_file(runlog):
        run_experiment(config, outdir=outdir, n_workers=opts.n_workers,
                       stages=stages, overwrite=opts.overwrite)
    return EXIT_OK


def _provenance(exc):
    """Module where ``exc`` was raised."""
    tb = exc.__traceback__
    if tb is None:
        return __name__
    while tb.tb_next is not None:
        tb = tb.tb_next
    return tb.tb_frame.f_globals.get('__name__', __name__)


def _main():
    """Run from command line."""
    if len(sys.argv) <= 1:
        print('USAGE: mvsde {run,simulate,couple,metrics,rates,pde,'
              'fixed-point,compare,check,schema} ... [--help]')
        sys.exit(EXIT_OK)
    try:
        status = main(sys.argv[1:])
    except ConfigValidationError as e:
        print(f'{__taskname__}: invalid config {e}',
              file=sys.stderr)
        status = EXIT_VALIDATION
    except AcceptanceError as e:
        print(f'{__taskname__}: acceptance failed: {e}', file=sys.stderr)
        status = EXIT_ACCEPTANCE
    except (MVSDEError, OSError, ValueError, ArithmeticError) as e:
        print(f'{__taskname__}: [{_provenance(e)}] '
              f'{e.__class__.__name__}: {e}', file=sys.stderr)
        status = EXIT_RUNTIME
    sys.exit(status)
