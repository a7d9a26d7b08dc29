# moonshot_sim/core/campaign.py

"""
Bulk simulation campaigns and mutation sweeps.

Seeds are independent simulations. With more than one job they run in a
process pool; results are always reduced in seed order, so a summary depends
only on the configuration and the seed range.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

from .config import (
    DEFAULT_EXPLORE_DEPTH,
    TRACE_FILENAME_TEMPLATE,
    AdversaryStrategy,
    Mutation,
    SimConfig,
)
from .errors import ConfigError
from .explorer import explore
from .monitor import Violation
from .network import RunReport, Simulation, script_for
from .utils import output_path

logger = logging.getLogger(__name__)

MUTANT_ADVERSARIES: Tuple[AdversaryStrategy, ...] = (
    AdversaryStrategy.EQUIVOCATOR,
    AdversaryStrategy.VOTE_SPLITTER,
)


@dataclass
class CampaignSummary:
    config: SimConfig
    first_seed: int
    last_seed: int
    runs: int = 0
    total_commits: int = 0
    max_chain_length: int = 0
    min_first_commit: Optional[int] = None
    max_first_commit: Optional[int] = None
    runs_without_commit: int = 0
    violations: List[Tuple[int, Violation, Optional[str]]] = field(default_factory=list)
    """(seed, first violation, trace path) for every violating seed, by seed."""
    warnings: int = 0

    @property
    def safe(self) -> bool:
        return not self.violations

    def add(self, report: RunReport) -> None:
        self.runs += 1
        self.total_commits += report.total_commits
        self.max_chain_length = max(self.max_chain_length, report.max_chain_length)
        self.warnings += len(report.warnings)
        step = report.first_commit_step
        if step is None:
            self.runs_without_commit += 1
        else:
            self.min_first_commit = step if self.min_first_commit is None else min(self.min_first_commit, step)
            self.max_first_commit = step if self.max_first_commit is None else max(self.max_first_commit, step)
        if report.violations:
            self.violations.append((report.config.seed, report.violations[0], report.trace_path))


def run_seed(config: SimConfig, seed: int, out_dir: Optional[str] = None) -> RunReport:
    """Runs one seed of a campaign; the trace is written only if the run is unsafe."""
    cfg = config.with_overrides(seed=seed)
    sim = Simulation(cfg, script_for(cfg))
    report = sim.run()
    if not report.safe and out_dir is not None:
        sim.trace.path = output_path(out_dir, TRACE_FILENAME_TEMPLATE, seed)
        report.trace_path = sim.trace.save()
    return report


def _run_seed_args(args: Tuple[SimConfig, int, Optional[str]]) -> RunReport:
    return run_seed(*args)


def iter_reports(
    config: SimConfig,
    seeds: Iterable[int],
    jobs: int = 1,
    out_dir: Optional[str] = None,
) -> Iterator[RunReport]:
    """Yields one report per seed, in seed order."""
    work = [(config, seed, out_dir) for seed in seeds]
    if jobs <= 1:
        for item in work:
            yield _run_seed_args(item)
        return
    executor = ProcessPoolExecutor(max_workers=jobs)
    try:
        chunk = max(1, len(work) // (jobs * 8))
        yield from executor.map(_run_seed_args, work, chunksize=chunk)
    finally:
        executor.shutdown(wait=True, cancel_futures=True)


def run_campaign(
    config: SimConfig,
    first_seed: int,
    last_seed: int,
    jobs: int = 1,
    out_dir: Optional[str] = None,
    stop_on_violation: bool = False,
) -> CampaignSummary:
    """
    Runs every seed in ``[first_seed, last_seed]`` and reduces the reports.

    Args:
        config: Base configuration; each run overrides only the seed.
        first_seed: First seed, inclusive.
        last_seed: Last seed, inclusive.
        jobs: Worker processes; 1 runs everything in this process.
        out_dir: Directory for traces of violating runs, or None.
        stop_on_violation: Stop after the first violating seed.

    Returns:
        The campaign summary.
    """
    summary = CampaignSummary(config, first_seed, last_seed)
    reports = iter_reports(config, range(first_seed, last_seed + 1), jobs, out_dir)
    try:
        for report in reports:
            summary.add(report)
            if report.violations:
                logger.warning("Seed %d: %s", report.config.seed, report.violations[0].render())
                if stop_on_violation:
                    break
    finally:
        close = getattr(reports, "close", None)
        if close is not None:
            close()
    logger.info(
        "Campaign over seeds %d..%d: %d run(s), %d violation(s)",
        first_seed,
        last_seed,
        summary.runs,
        len(summary.violations),
    )
    return summary


@dataclass
class MutantResult:
    mutation: Mutation
    killed: bool
    method: Optional[str] = None
    """'campaign' or 'explore' for a killed mutant."""
    adversary: Optional[AdversaryStrategy] = None
    seed: Optional[int] = None
    violation: Optional[Violation] = None
    runs: int = 0


def mutant_config(config: SimConfig, mutation: Mutation, strategy: AdversaryStrategy) -> SimConfig:
    """Base config for a mutant sweep; adds one Byzantine validator if none is set."""
    byzantine = config.byzantine or ((config.n - 1,) if config.f >= 1 else ())
    return config.with_overrides(mutation=mutation, adversary_strategy=strategy, byzantine=byzantine)


def sweep_mutants(
    config: SimConfig,
    first_seed: int,
    last_seed: int,
    jobs: int = 1,
    explore_depth: int = DEFAULT_EXPLORE_DEPTH,
    mutations: Sequence[Mutation] = tuple(Mutation),
    out_dir: Optional[str] = None,
) -> List[MutantResult]:
    """
    Tries to kill each mutation: first with seeded campaigns under every
    adversary in ``MUTANT_ADVERSARIES``, then with bounded exploration.

    Exploration runs the mutant config with the scripted adversary, so its
    Byzantine validators inject the messages of ``config.script_path``.

    Raises:
        ConfigError: If a mutant survives the campaigns, exploration is on and
            no script is configured.
    """
    results = []
    for mutation in mutations:
        result = MutantResult(mutation, killed=False)
        for strategy in MUTANT_ADVERSARIES:
            cfg = mutant_config(config, mutation, strategy)
            summary = run_campaign(cfg, first_seed, last_seed, jobs, out_dir, stop_on_violation=True)
            result.runs += summary.runs
            if summary.violations:
                seed, violation, _trace = summary.violations[0]
                result.killed = True
                result.method, result.adversary = "campaign", strategy
                result.seed, result.violation = seed, violation
                break
        if not result.killed and explore_depth > 0:
            if config.script_path is None:
                raise ConfigError(
                    f"Mutant {mutation.value} survived {result.runs} run(s); exploring it needs a script_path vocabulary"
                )
            cfg = mutant_config(config, mutation, AdversaryStrategy.SCRIPTED).with_overrides(seed=first_seed)
            report = explore(cfg, explore_depth)
            if report.violations:
                result.killed, result.method = True, "explore"
                result.violation = report.violations[0]
        logger.info("Mutant %s %s", mutation.value, "killed" if result.killed else "survived")
        results.append(result)
    return results
