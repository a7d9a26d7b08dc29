# tests/test_campaign.py

import os

import pytest

from moonshot_sim.core.campaign import (
    CampaignSummary,
    MutantResult,
    mutant_config,
    run_campaign,
    run_seed,
    sweep_mutants,
)
from moonshot_sim.core import campaign
from moonshot_sim.core.config import AdversaryStrategy, Mutation, SimConfig
from moonshot_sim.core.errors import ConfigError
from moonshot_sim.core.explorer import ExploreReport
from moonshot_sim.core.monitor import Violation
from moonshot_sim.core.network import RunReport, run
from moonshot_sim.core.report import render_campaign_summary


def _small(**extra):
    return SimConfig(max_steps=150, **extra)


def test_summary_counts_reports():
    cfg = SimConfig()
    summary = CampaignSummary(cfg, 0, 2)
    summary.add(RunReport(cfg, 10, {0: 2, 1: 1}, first_commit_step=7))
    summary.add(RunReport(cfg, 10, {0: 0, 1: 0}, warnings=["w"]))
    bad = RunReport(
        cfg.with_overrides(seed=2),
        5,
        {0: 3, 1: 3},
        violations=[Violation("blockchain_prefix", 4, "fork")],
        first_commit_step=3,
        trace_path="t.log",
    )
    summary.add(bad)
    assert summary.runs == 3
    assert summary.total_commits == 9
    assert summary.max_chain_length == 3
    assert (summary.min_first_commit, summary.max_first_commit) == (3, 7)
    assert summary.runs_without_commit == 1
    assert summary.warnings == 1
    assert summary.violations == [(2, bad.violations[0], "t.log")]
    assert not summary.safe


def test_campaign_matches_individual_runs():
    cfg = _small()
    summary = run_campaign(cfg, 0, 2)
    expected = sum(run(cfg.with_overrides(seed=s)).total_commits for s in range(3))
    assert summary.runs == 3
    assert summary.total_commits == expected
    assert summary.safe


def test_campaign_summary_is_reproducible():
    cfg = _small(byzantine=(3,), adversary_strategy="equivocator")
    first = render_campaign_summary(run_campaign(cfg, 4, 6))
    assert render_campaign_summary(run_campaign(cfg, 4, 6)) == first


def test_parallel_campaign_equals_serial():
    cfg = _small(drop_probability=0.1)
    serial = run_campaign(cfg, 0, 3, jobs=1)
    parallel = run_campaign(cfg, 0, 3, jobs=2)
    assert render_campaign_summary(parallel) == render_campaign_summary(serial)


def test_safe_seed_writes_no_trace(tmp_path):
    report = run_seed(_small(), 1, str(tmp_path))
    assert report.config.seed == 1
    assert report.trace_path is None
    assert os.listdir(tmp_path) == []


def test_mutant_config_adds_a_byzantine_validator():
    cfg = mutant_config(SimConfig(), Mutation.NO_LOCK_CHECK, AdversaryStrategy.EQUIVOCATOR)
    assert cfg.byzantine == (3,)
    assert cfg.mutation is Mutation.NO_LOCK_CHECK
    assert cfg.adversary_strategy is AdversaryStrategy.EQUIVOCATOR

    kept = mutant_config(SimConfig(byzantine=(1,)), Mutation.WEAK_QUORUM, AdversaryStrategy.VOTE_SPLITTER)
    assert kept.byzantine == (1,)

    lone = mutant_config(SimConfig(f=0), Mutation.WEAK_QUORUM, AdversaryStrategy.EQUIVOCATOR)
    assert lone.byzantine == ()


def test_sweep_reports_every_mutation():
    results = sweep_mutants(
        _small(),
        0,
        0,
        explore_depth=0,
        mutations=(Mutation.WEAK_QUORUM, Mutation.NO_LOCK_CHECK),
    )
    assert [r.mutation for r in results] == [Mutation.WEAK_QUORUM, Mutation.NO_LOCK_CHECK]
    for result in results:
        assert isinstance(result, MutantResult)
        assert result.runs >= 1
        if result.killed:
            assert result.method == "campaign" and result.violation is not None
        else:
            assert result.runs == 2 and result.violation is None


def _survivor(**extra):
    # No steps, so every mutant survives the campaigns.
    return SimConfig(max_steps=0, **extra)


def test_surviving_mutant_is_explored_with_its_own_adversary(monkeypatch, tmp_path):
    script = tmp_path / "vocab.script"
    script.write_text("", encoding="utf-8")
    seen = []

    def fake_explore(cfg, depth):
        seen.append((cfg, depth))
        return ExploreReport(cfg, depth, 1, True)

    monkeypatch.setattr(campaign, "explore", fake_explore)
    results = sweep_mutants(
        _survivor(script_path=str(script)), 5, 6, explore_depth=3, mutations=(Mutation.NO_LOCK_CHECK,)
    )
    assert not results[0].killed
    ((cfg, depth),) = seen
    assert depth == 3
    assert cfg.mutation is Mutation.NO_LOCK_CHECK
    assert cfg.byzantine == (3,)
    assert cfg.adversary_strategy is AdversaryStrategy.SCRIPTED
    assert cfg.script_path == str(script)
    assert cfg.seed == 5


def test_exploring_a_survivor_needs_a_script():
    with pytest.raises(ConfigError):
        sweep_mutants(_survivor(), 0, 0, explore_depth=2, mutations=(Mutation.WEAK_QUORUM,))


def test_sweep_without_exploration_needs_no_script():
    (result,) = sweep_mutants(_survivor(), 0, 0, explore_depth=0, mutations=(Mutation.WEAK_QUORUM,))
    assert not result.killed and result.method is None


@pytest.mark.slow
def test_every_mutant_is_killed():
    cfg = SimConfig(
        byzantine=(3,),
        drop_probability=0.05,
        duplicate_probability=0.05,
        timer_probability=0.03,
    )
    results = sweep_mutants(cfg, 0, 299, jobs=4, explore_depth=0)
    assert len(results) == len(Mutation)
    assert [r.mutation for r in results if not r.killed] == []
