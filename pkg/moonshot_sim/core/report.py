# moonshot_sim/core/report.py

"""
Plain-text reports rendered with Jinja2.

Every renderer is a pure function of its report object, so a replayed run
renders byte-identical text to the original.
"""

import os
from typing import List, Optional

from jinja2 import Environment, StrictUndefined

from .campaign import CampaignSummary, MutantResult
from .explorer import ExploreReport
from .network import RunReport

_env = Environment(
    loader=None,  # Templates are strings
    autoescape=False,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
    undefined=StrictUndefined,
)

RUN_TEMPLATE = """\
moonshot-sim run report
config: {{ config.canonical() }}
seed: {{ config.seed }}
steps: {{ report.steps }}
first commit at step: {{ report.first_commit_step if report.first_commit_step is not none else "never" }}
commits per validator:
{% for vid, count in commits %}
  v{{ vid }}: {{ count }}
{% endfor %}
max chain length: {{ report.max_chain_length }}
{% if report.warnings %}
warnings:
{% for w in report.warnings %}
  {{ w }}
{% endfor %}
{% endif %}
{% if report.violations %}
result: VIOLATION
{% for v in report.violations %}
  {{ v.render() }}
{% endfor %}
{% else %}
result: SAFE
{% endif %}
trace: {{ trace }}
"""

CAMPAIGN_TEMPLATE = """\
moonshot-sim campaign summary
config: {{ s.config.canonical() }}
seeds: {{ s.first_seed }}..{{ s.last_seed }}
runs: {{ s.runs }}
violations: {{ s.violations | length }}
total commits: {{ s.total_commits }}
max chain length: {{ s.max_chain_length }}
steps to first commit: min {{ fmt(s.min_first_commit) }}, max {{ fmt(s.max_first_commit) }}
runs without a commit: {{ s.runs_without_commit }}
certificate warnings: {{ s.warnings }}
{% for seed, v, trace in s.violations %}
  seed {{ seed }}: {{ v.render() }}{% if trace %} (trace {{ trace }}){% endif %}

{% endfor %}
result: {{ "SAFE" if s.safe else "VIOLATION" }}
"""

EXPLORE_TEMPLATE = """\
moonshot-sim exploration report
config: {{ r.config.canonical() }}
depth: {{ r.depth }}
states visited: {{ r.states_visited }}
deepest path: {{ r.deepest }}
complete: {{ "yes" if r.complete else "no (state budget exhausted)" }}
{% if r.violations %}
result: VIOLATION
{% for v in r.violations %}
  {{ v.render() }}
{% endfor %}
counterexample:
{% for event in r.counterexample %}
  {{ loop.index0 }}: {{ event }}
{% endfor %}
{% else %}
result: SAFE
{% endif %}
"""

MUTANTS_TEMPLATE = """\
moonshot-sim mutant sweep
{% for m in results %}
{{ "%-20s" | format(m.mutation.value) }} {{ "KILLED " if m.killed else "SURVIVED" }}{% if m.killed %} by {{ m.method }}{% if m.adversary %} ({{ m.adversary.value }}, seed {{ m.seed }}){% endif %}: {{ m.violation.kind }}{% endif %}

{% endfor %}
killed: {{ results | selectattr("killed") | list | length }}/{{ results | length }}
"""


def _fmt(value: Optional[int]) -> str:
    return "n/a" if value is None else str(value)


def _render(template_str: str, **context) -> str:
    try:
        return _env.from_string(template_str).render(fmt=_fmt, **context).rstrip("\n") + "\n"
    except Exception as e:
        raise RuntimeError(f"Failed to render report template: {e}") from e


def render_run_report(report: RunReport) -> str:
    return _render(
        RUN_TEMPLATE,
        report=report,
        config=report.config,
        commits=sorted(report.commits.items()),
        trace=report.trace_path or "(not written)",
    )


def render_campaign_summary(summary: CampaignSummary) -> str:
    return _render(CAMPAIGN_TEMPLATE, s=summary)


def render_explore_report(report: ExploreReport) -> str:
    return _render(EXPLORE_TEMPLATE, r=report)


def render_mutant_table(results: List[MutantResult]) -> str:
    return _render(MUTANTS_TEMPLATE, results=results)


def write_report(text: str, path: Optional[str]) -> Optional[str]:
    """
    Writes rendered report text to ``path``.

    Returns:
        The path written, or None when ``path`` is None.

    Raises:
        OSError: If the directory cannot be created or the file written.
    """
    if path is None:
        return None
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return path
