"""bis-region: rate-region tracing and binning simulation for biometric
identification with noisy enrollment. Entry point and orchestrator."""

import argparse
import logging
import os
import sys
import time
from dataclasses import replace
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path
from typing import Optional

from binning import CodeParams, run_simulation
from config import ExperimentConfig, MODES, parse_plane
from errors import BisError, ConfigError
from outputs import (emit_projection, write_equivalence, write_hull, write_manifest,
                     write_region, write_simulation, write_special_cases)
from probability import BisSystem, ChannelMatrix, make_stream
from region import (SearchParams, check_equivalence, check_special_cases,
                    degradation_channel, sample_region)

VERSION = '0.3.0'

log = logging.getLogger('bis_region')


def _get_log_dir() -> Path:
    override = os.environ.get('BIS_REGION_LOG_DIR', '')
    d = Path(override) if override else Path.home() / '.config' / 'bis-region' / 'logs'
    d.mkdir(parents=True, exist_ok=True)
    return d


def _setup_logging(verbose: bool = False) -> None:
    fmt = logging.Formatter('%(asctime)s [%(levelname)s] %(message)s')
    console = logging.StreamHandler()
    console.setLevel(logging.DEBUG if verbose else logging.INFO)
    console.setFormatter(fmt)
    handlers: list[logging.Handler] = [console]
    try:
        log_dir = _get_log_dir()
        file_handler = TimedRotatingFileHandler(
            log_dir / 'bis-region.log',
            when='D', interval=1, backupCount=1,
            encoding='utf-8',
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(fmt)
        handlers.append(file_handler)
    except OSError:
        log_dir = None
    logging.basicConfig(level=logging.DEBUG, handlers=handlers, force=True)
    if log_dir:
        log.debug('Log file: %s', log_dir / 'bis-region.log')


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


class Experiment:
    """Runs one configured mode and writes its outputs."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.system: BisSystem = config.system.to_system()
        self.output = Path(config.output)
        self.written: list[Path] = []

    def run(self) -> list[Path]:
        handler = {
            'region': self._run_region,
            'equivalence': self._run_equivalence,
            'simulate': self._run_simulation,
            'special-cases': self._run_special_cases,
        }[self.config.mode]
        handler()
        return self.written

    def _keep(self, path: Path) -> None:
        self.written.append(path)
        log.info('Wrote %s', path)

    def _run_region(self) -> None:
        s = self.config.search
        params = SearchParams(
            samples=s.samples, refine_steps=s.refine_steps, grid_points=s.grid_points,
            u_sizes=s.u_sizes, refine_top=s.refine_top, chunks=s.chunks,
            n_jobs=s.n_jobs, structured=s.structured,
            allow_large_alphabet=s.allow_large_alphabet,
        )
        sample = sample_region(self.system, self.config.r_s, params, self.config.seed)
        self._keep(write_region(sample, self.output))
        self._keep(write_hull(sample, _sibling(self.output, '_hull.csv')))
        if self.config.plane:
            self._keep(emit_projection(self.output, self.config.plane,
                                       _sibling(self.output, '_projection.csv')))

    def _run_equivalence(self) -> None:
        eq = self.config.equivalence
        records = check_equivalence(self.system, eq.pairs, make_stream(self.config.seed),
                                    eq.u_size)
        worst = max((r.deviation for r in records), default=0.0)
        if worst > 1e-6:
            log.warning('Largest bound mismatch %.3g exceeds 1e-6', worst)
        self._keep(write_equivalence(records, self.output))

    def _run_special_cases(self) -> None:
        report = check_special_cases(self.system, self.config.special_cases.samples,
                                     make_stream(self.config.seed))
        if not report.passed:
            log.error('Special-case reductions FAILED (see %s)', self.output)
        self._keep(write_special_cases(report, self.output))

    def _code_params(self, n: int, u_channel: ChannelMatrix,
                     v_channel: ChannelMatrix) -> CodeParams:
        sim = self.config.simulation
        if sim.counts is not None:
            c = sim.counts
            return CodeParams.from_counts(n, c['n_v'], c['n_u'], c['m_s'], c['m_i'], sim.delta)
        if sim.rates is not None:
            r = sim.rates
            return CodeParams.from_rates(n, r['v'], r['u'], r['s'], r['i'], sim.delta)
        return CodeParams.for_scheme(self.system, u_channel, v_channel, n, sim.margin, sim.delta)

    def _run_simulation(self) -> None:
        sim = self.config.simulation
        u_channel = (ChannelMatrix(sim.u_channel) if sim.u_channel is not None
                     else ChannelMatrix.identity(self.system.y_size))
        v_channel = degradation_channel(u_channel.cols, sim.v_mix)
        results = []
        for n in sim.block_lengths:
            params = self._code_params(n, u_channel, v_channel)
            log.info('n=%d: n_v=%d n_u=%d m_s=%d n_b=%d m_i=%d delta=%.4g',
                     n, params.n_v, params.n_u, params.m_s, params.n_b, params.m_i,
                     params.delta)
            results.append(run_simulation(
                self.system, u_channel, v_channel, params, sim.trials,
                delta=sim.delta, seed=self.config.seed, codebook_mode=sim.codebook_mode,
                storage_cap=sim.storage_cap, chunks=sim.chunks, n_jobs=sim.n_jobs))
        self._keep(write_simulation(results, self.output))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='bis-region',
        description='Rate region and binning simulation for biometric identification '
                    'with noisy enrollment.')
    parser.add_argument('mode', choices=MODES + ('project',))
    parser.add_argument('--config', type=Path, help='JSON experiment config')
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--out', type=Path, default=None, help='output CSV path')
    parser.add_argument('--override', action='append', default=[], metavar='KEY=VALUE',
                        help='dotted config field, e.g. search.samples=256 (repeatable)')
    parser.add_argument('--input', type=Path, help='region CSV (project mode)')
    parser.add_argument('--plane', default='r_j,r_i',
                        help='axis pair x,y for project mode (default r_j,r_i)')
    parser.add_argument('-v', '--verbose', action='store_true')
    return parser


def _remove(paths: list[Path]) -> None:
    for p in paths:
        try:
            p.unlink()
            log.info('Removed partial output %s', p)
        except FileNotFoundError:
            pass


def _project(args: argparse.Namespace) -> int:
    if args.input is None or args.out is None:
        log.error('project mode needs --input and --out')
        return ConfigError.exit_code
    try:
        parse_plane(args.plane)
        emit_projection(args.input, args.plane, args.out)
    except BisError as e:
        log.error('%s', e)
        _remove([args.out])
        return e.exit_code
    log.info('Wrote %s', args.out)
    return 0


def load_config(path: Path, mode: str, seed: Optional[int], out: Optional[Path],
                overrides: list[str]) -> ExperimentConfig:
    config = ExperimentConfig.load(path)
    for assignment in overrides:
        config = config.apply_override(assignment)
    config = replace(config, mode=mode)
    if seed is not None:
        config = replace(config, seed=seed)
    if out is not None:
        config = replace(config, output=str(out))
    config.validate()
    return config


def run(argv: Optional[list[str]] = None) -> int:
    """Execute one CLI invocation; returns the process exit code."""
    args = _build_parser().parse_args(argv)
    if args.mode == 'project':
        return _project(args)
    if args.config is None:
        log.error('--config is required for mode %s', args.mode)
        return ConfigError.exit_code

    started = time.perf_counter()
    experiment = None
    try:
        config = load_config(args.config, args.mode, args.seed, args.out, args.override)
        log.info('Mode=%s seed=%d output=%s', config.mode, config.seed, config.output)
        experiment = Experiment(config)
        outputs = experiment.run()
        manifest = _sibling(experiment.output, '.manifest.json')
        write_manifest(manifest, config.to_dict(), VERSION,
                       time.perf_counter() - started, outputs)
        log.info('Wrote %s', manifest)
    except BisError as e:
        log.error('%s: %s', type(e).__name__, e)
        if experiment is not None:
            _remove(experiment.written)
        return e.exit_code
    except Exception:
        log.exception('Unexpected failure')
        if experiment is not None:
            _remove(experiment.written)
        return 1
    log.info('Done in %.2f s', time.perf_counter() - started)
    return 0


def main():
    verbose = '-v' in sys.argv[1:] or '--verbose' in sys.argv[1:]
    _setup_logging(verbose)
    log.info('=== bis-region %s ===', VERSION)
    log.info('Python %s, platform %s', sys.version.split()[0], sys.platform)
    sys.exit(run())


if __name__ == '__main__':
    main()
