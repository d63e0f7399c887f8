"""
Report bundle: CSV tables, a markdown summary, the per-step BLEU plot and a qualitative dump.

Files written under the report directory:

- ``<table>.csv`` for every table passed in (e.g. ``methods.csv``, ``taps.csv``, ``dims.csv``)
- ``scores.csv``: ``method, bleu1_mean, bleu1_std, bleu4_mean, bleu4_std, repetition_rate_mean,
  n_seeds`` (BLEU x 100)
- ``per_step_bleu.csv``: ``method, step, n, bleu1, bleu4`` (BLEU x 100, mean over seeds)
- ``per_step_bleu.svg``
- ``summary.md``
- ``qualitative.txt``
"""

from __future__ import annotations

import logging
import os

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ccd_anticipation import files  # noqa: E402
from ccd_anticipation.errors import InputError  # noqa: E402
from ccd_anticipation.table import Table  # noqa: E402

logger = logging.getLogger(__name__)

TABLE_TITLES = {
    'methods': 'Text-alone teachers and student methods',
    'taps': 'CCD tap positions',
    'dims': 'Teacher and student widths',
}


def score_table(reports):
    rows = []
    for method, method_reports in reports.items():
        b1 = [r.bleu1 * 100 for r in method_reports]
        b4 = [r.bleu4 * 100 for r in method_reports]
        rows.append({'method': method, 'bleu1_mean': float(np.mean(b1)),
                     'bleu1_std': float(np.std(b1)), 'bleu4_mean': float(np.mean(b4)),
                     'bleu4_std': float(np.std(b4)),
                     'repetition_rate_mean': float(np.mean([r.repetition_rate
                                                            for r in method_reports])),
                     'n_seeds': len(method_reports)})
    return Table(rows)


def per_step_table(reports):
    """Per-step BLEU of every method, averaged over seeds."""

    rows = []
    for method, method_reports in reports.items():
        max_step = max(r.max_step for r in method_reports)
        for i in range(max_step):
            scored = [r for r in method_reports if i < r.max_step]
            rows.append({'method': method, 'step': i + 1,
                         'n': scored[0].per_step_count[i],
                         'bleu1': float(np.mean([r.per_step_bleu1[i] for r in scored])) * 100,
                         'bleu4': float(np.mean([r.per_step_bleu4[i] for r in scored])) * 100})
    return Table(rows)


def plot_per_step(per_step, path):
    """Two panels (BLEU1, BLEU4) with one line per method over the target step index."""

    plt.rcParams['svg.hashsalt'] = 'ccd-anticipation'
    fig, axes = plt.subplots(1, 2, figsize=(12, 5))
    methods = list(dict.fromkeys(per_step.column_data('method')))

    for ax, metric in zip(axes, ('bleu1', 'bleu4')):
        for method in methods:
            rows = [r for r in per_step if r['method'] == method]
            ax.plot([r['step'] for r in rows], [r[metric] for r in rows], marker='o',
                    label=method)
        ax.set_xlabel('Anticipated step')
        ax.set_ylabel(metric.upper())
        ax.set_title(f'{metric.upper()} per step')
        ax.legend()

    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    return str(path)


def qualitative_dump(reports, path, max_samples=10):
    """Generated vs reference step texts for the first seed of every method."""

    with files.open_text(path, 'w') as f:
        for method, method_reports in reports.items():
            f.write(f'== {method} ==\n')
            samples = method_reports[0].samples
            shown = list(dict.fromkeys(s['id'] for s in samples))[:max_samples]
            for sample_id in shown:
                steps = [s for s in samples if s['id'] == sample_id]
                f.write(f'sample {sample_id} ingredients {steps[0]["ingredients"]}\n')
                for s in steps:
                    f.write(f'  step {s["step"]}\n')
                    f.write(f'    reference: {s["reference"]}\n')
                    f.write(f'    generated: {s["generated"]}\n')
            f.write('\n')
    return str(path)


def emit_report(reports, path, tables=None, provenance=None):
    """
    Write the report bundle.

    `Args:`
        reports: dict
            Method name -> list of per-seed `EvalReport` (at least one report)
        path: str
            Report directory; created if needed
        tables: dict
            Table name -> `Table`, each written to ``<name>.csv`` and into the summary
        provenance: dict
            Flattened config snapshot for the summary
    `Returns:`
        list of str
            Paths written
    """

    if not reports or not any(reports.values()):
        raise InputError('emit_report needs at least one report')

    files.ensure_directory(path)
    written = []
    tables = dict(tables or {})

    for name, table in tables.items():
        written.append(table.to_csv(os.path.join(path, f'{name}.csv')))

    scores = score_table(reports)
    written.append(scores.to_csv(os.path.join(path, 'scores.csv')))

    per_step = per_step_table(reports)
    written.append(per_step.to_csv(os.path.join(path, 'per_step_bleu.csv')))
    written.append(plot_per_step(per_step, os.path.join(path, 'per_step_bleu.svg')))
    written.append(qualitative_dump(reports, os.path.join(path, 'qualitative.txt')))

    summary = os.path.join(path, 'summary.md')
    with files.open_text(summary, 'w') as f:
        f.write('# Next-step anticipation results\n\n')
        f.write('BLEU values are x100, mean and std over seeds.\n\n')
        f.write('## Scores\n\n')
        f.write(scores.to_markdown(2))
        for name, table in tables.items():
            f.write(f'\n## {TABLE_TITLES.get(name, name)}\n\n')
            f.write(table.to_markdown(2))
        if provenance:
            f.write('\n## Configuration\n\n')
            for key in sorted(provenance):
                f.write(f'- `{key}`: {provenance[key]}\n')
    written.append(summary)

    logger.info(f'Wrote report bundle of {len(written)} files to {path}')
    return written
