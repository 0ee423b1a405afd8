"""File input/output for the command line front end.

All tables are UTF-8 CSV (or TSV, sniffed by extension) with a header
row. Counts are parsed strictly as non-negative integers; rows across the
three input files are joined on sample_id, so row order does not need to
match.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from .data import CountMatrix, CovariateMatrix, GroupAssignment
from .errors import NonIntegerCount, ParseError, UnalignedSampleIds
from .inference import ConcordanceReport, PosteriorSummary
from .normalization import SizeFactors

__all__ = [
    "read_counts",
    "read_covariates",
    "read_groups",
    "align_to_counts",
    "write_counts",
    "write_covariates",
    "write_groups",
    "write_truth",
    "read_truth",
    "write_ppi_gamma",
    "write_ppi_delta",
    "read_ppi_gamma",
    "read_ppi_delta",
    "write_posterior_summary",
    "write_convergence",
    "write_size_factors",
    "write_table",
]

_INT_RE = re.compile(r"^\d+$")


def _fmt(x) -> str:
    return format(float(x), ".10g")


def _delimiter(path) -> str:
    return "\t" if Path(path).suffix.lower() in (".tsv", ".tab") else ","


def _read_table(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh, delimiter=_delimiter(path)))
    except OSError as exc:
        raise ParseError(str(path), 0, 0, f"cannot read file: {exc}") from exc
    if not rows:
        raise ParseError(str(path), 1, 1, "empty file, header row required")
    header, body = rows[0], rows[1:]
    width = len(header)
    for i, row in enumerate(body, start=2):
        if len(row) != width:
            raise ParseError(str(path), i, 1, f"expected {width} fields, found {len(row)}")
    return header, body


def read_counts(path) -> CountMatrix:
    """Read a count table: sample_id column followed by one integer column
    per feature."""
    header, body = _read_table(path)
    if len(header) < 2:
        raise ParseError(str(path), 1, 1, "counts need a sample_id column plus features")
    feature_ids = tuple(header[1:])
    sample_ids = []
    values = np.zeros((len(body), len(feature_ids)), dtype=np.int64)
    for i, row in enumerate(body):
        sample_ids.append(row[0])
        for j, cell in enumerate(row[1:]):
            text = cell.strip()
            if not _INT_RE.match(text):
                try:
                    float(text)
                except ValueError:
                    raise ParseError(
                        str(path), i + 2, j + 2, f"unparseable count {cell!r}"
                    ) from None
                raise NonIntegerCount(
                    f"{path}:{i + 2}:{j + 2}: count {cell!r} is not a non-negative integer"
                )
            values[i, j] = int(text)
    return CountMatrix(values, tuple(sample_ids), feature_ids)


def read_covariates(path) -> tuple[CovariateMatrix, tuple[str, ...]]:
    """Read a covariate table: sample_id column followed by real columns.
    Returns the matrix and its row sample ids."""
    header, body = _read_table(path)
    if len(header) < 1:
        raise ParseError(str(path), 1, 1, "covariates need a sample_id column")
    covariate_ids = tuple(header[1:])
    sample_ids = []
    values = np.zeros((len(body), len(covariate_ids)))
    for i, row in enumerate(body):
        sample_ids.append(row[0])
        for j, cell in enumerate(row[1:]):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ParseError(
                    str(path), i + 2, j + 2, f"unparseable covariate value {cell!r}"
                ) from None
    return CovariateMatrix(values, covariate_ids), tuple(sample_ids)


def read_groups(path) -> tuple[GroupAssignment, tuple[str, ...]]:
    """Read group labels: sample_id and integer group columns. Returns the
    assignment and its row sample ids."""
    header, body = _read_table(path)
    if len(header) < 2:
        raise ParseError(str(path), 1, 1, "groups need sample_id and group columns")
    sample_ids = []
    labels = np.zeros(len(body), dtype=np.int64)
    for i, row in enumerate(body):
        sample_ids.append(row[0])
        text = row[1].strip()
        if not _INT_RE.match(text):
            raise ParseError(str(path), i + 2, 2, f"unparseable group label {row[1]!r}")
        labels[i] = int(text)
    k = int(labels.max()) if labels.size else 0
    return GroupAssignment(labels, n_groups=k), tuple(sample_ids)


def align_to_counts(
    counts: CountMatrix,
    covariates: CovariateMatrix,
    covariate_samples: tuple[str, ...],
    groups: GroupAssignment,
    group_samples: tuple[str, ...],
) -> tuple[CovariateMatrix, GroupAssignment]:
    """Reorder covariate and group rows to the count matrix's sample order,
    joining on sample_id."""
    for name, ids in (("covariates", covariate_samples), ("groups", group_samples)):
        index = {sid: i for i, sid in enumerate(ids)}
        if len(index) != len(ids):
            raise UnalignedSampleIds(f"duplicate sample ids in {name}")
        missing = [sid for sid in counts.sample_ids if sid not in index]
        if missing:
            raise UnalignedSampleIds(f"sample {missing[0]!r} missing from {name}")
        extra = [sid for sid in ids if sid not in set(counts.sample_ids)]
        if extra:
            raise UnalignedSampleIds(f"sample {extra[0]!r} in {name} but not in counts")
    cov_index = {sid: i for i, sid in enumerate(covariate_samples)}
    grp_index = {sid: i for i, sid in enumerate(group_samples)}
    cov_order = [cov_index[sid] for sid in counts.sample_ids]
    grp_order = [grp_index[sid] for sid in counts.sample_ids]
    covariates = CovariateMatrix(
        covariates.values[cov_order], covariates.covariate_ids, covariates.standardized
    )
    groups = GroupAssignment(
        groups.labels[grp_order], groups.n_groups, groups.reference_group
    )
    return covariates, groups


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=_delimiter(path), lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_counts(path, counts: CountMatrix) -> None:
    rows = (
        [sid, *map(str, counts.counts[i].tolist())]
        for i, sid in enumerate(counts.sample_ids)
    )
    write_table(path, ["sample_id", *counts.feature_ids], rows)


def write_covariates(path, covariates: CovariateMatrix, sample_ids) -> None:
    rows = (
        [sid, *map(_fmt, covariates.values[i])]
        for i, sid in enumerate(sample_ids)
    )
    write_table(path, ["sample_id", *covariates.covariate_ids], rows)


def write_groups(path, groups: GroupAssignment, sample_ids) -> None:
    rows = ([sid, str(int(g))] for sid, g in zip(sample_ids, groups.labels))
    write_table(path, ["sample_id", "group"], rows)


def write_truth(path, feature_ids, covariate_ids, truth) -> None:
    header = ["feature_id", "gamma_true", "mu2_true"] + [
        f"beta_true_{cid}" for cid in covariate_ids
    ]
    rows = (
        [
            fid,
            str(int(truth.gamma_true[j])),
            _fmt(truth.mu2_true[j]),
            *map(_fmt, truth.beta_true[:, j]),
        ]
        for j, fid in enumerate(feature_ids)
    )
    write_table(path, header, rows)


def read_truth(path) -> tuple[tuple[str, ...], tuple[str, ...], np.ndarray, np.ndarray, np.ndarray]:
    """Read a truth table back: (feature_ids, covariate_ids, gamma_true,
    mu2_true, beta_true)."""
    header, body = _read_table(path)
    if header[:3] != ["feature_id", "gamma_true", "mu2_true"]:
        raise ParseError(str(path), 1, 1, "not a truth table")
    covariate_ids = tuple(h.removeprefix("beta_true_") for h in header[3:])
    feature_ids = tuple(row[0] for row in body)
    gamma = np.array([int(row[1]) for row in body], dtype=np.int8)
    mu2 = np.array([float(row[2]) for row in body])
    beta = np.array([[float(v) for v in row[3:]] for row in body]).T
    beta = beta.reshape(len(covariate_ids), len(feature_ids))
    return feature_ids, covariate_ids, gamma, mu2, beta


def write_ppi_gamma(path, feature_ids, summary: PosteriorSummary) -> None:
    rows = (
        [fid, _fmt(summary.ppi_gamma[j]), str(int(summary.selected_gamma[j]))]
        for j, fid in enumerate(feature_ids)
    )
    write_table(path, ["feature_id", "ppi", "selected"], rows)


def write_ppi_delta(path, feature_ids, covariate_ids, summary: PosteriorSummary) -> None:
    rows = (
        [
            fid,
            cid,
            _fmt(summary.ppi_delta[r, j]),
            str(int(summary.selected_delta[r, j])),
            _fmt(summary.beta_mean[r, j]),
        ]
        for j, fid in enumerate(feature_ids)
        for r, cid in enumerate(covariate_ids)
    )
    write_table(path, ["feature_id", "covariate_id", "ppi", "selected", "beta_mean"], rows)


def read_ppi_gamma(path) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    header, body = _read_table(path)
    if header != ["feature_id", "ppi", "selected"]:
        raise ParseError(str(path), 1, 1, "not a ppi_gamma table")
    ids = tuple(row[0] for row in body)
    ppi = np.array([float(row[1]) for row in body])
    selected = np.array([int(row[2]) for row in body], dtype=bool)
    return ids, ppi, selected


def read_ppi_delta(path):
    """Read a ppi_delta table into (feature_ids, covariate_ids, ppi,
    selected, beta_mean) with (R, p) matrices."""
    header, body = _read_table(path)
    if header != ["feature_id", "covariate_id", "ppi", "selected", "beta_mean"]:
        raise ParseError(str(path), 1, 1, "not a ppi_delta table")
    feature_ids, covariate_ids = [], []
    for row in body:
        if row[0] not in feature_ids:
            feature_ids.append(row[0])
        if row[1] not in covariate_ids:
            covariate_ids.append(row[1])
    p, big_r = len(feature_ids), len(covariate_ids)
    ppi = np.zeros((big_r, p))
    selected = np.zeros((big_r, p), dtype=bool)
    beta = np.zeros((big_r, p))
    fidx = {f: j for j, f in enumerate(feature_ids)}
    cidx = {c: r for r, c in enumerate(covariate_ids)}
    for row in body:
        r, j = cidx[row[1]], fidx[row[0]]
        ppi[r, j] = float(row[2])
        selected[r, j] = bool(int(row[3]))
        beta[r, j] = float(row[4])
    return tuple(feature_ids), tuple(covariate_ids), ppi, selected, beta


def write_posterior_summary(path, feature_ids, summary: PosteriorSummary) -> None:
    k_groups = summary.mu_mean.shape[0]
    header = ["feature_id", "mu0_mean"]
    for k in range(1, k_groups + 1):
        header += [f"mu_k{k}_mean", f"mu_k{k}_q025", f"mu_k{k}_q975"]
    header.append("phi_mean")
    rows = []
    for j, fid in enumerate(feature_ids):
        row = [fid, _fmt(summary.mu0_mean[j])]
        for k in range(k_groups):
            row += [
                _fmt(summary.mu_mean[k, j]),
                _fmt(summary.mu_lower[k, j]),
                _fmt(summary.mu_upper[k, j]),
            ]
        row.append(_fmt(summary.phi_mean[j]))
        rows.append(row)
    write_table(path, header, rows)


def write_convergence(path, report: ConcordanceReport) -> None:
    rows = []
    c = report.corr_gamma.shape[0]
    for a in range(c):
        for b in range(a + 1, c):
            rows.append(
                [
                    str(a),
                    str(b),
                    _fmt(report.corr_gamma[a, b]),
                    _fmt(report.corr_delta[a, b]),
                    str(int(report.converged)),
                ]
            )
    write_table(path, ["chain_a", "chain_b", "corr_gamma", "corr_delta", "converged"], rows)


def write_size_factors(path, sample_ids, sf: SizeFactors) -> None:
    rows = ([sid, _fmt(sf.values[i]), sf.method] for i, sid in enumerate(sample_ids))
    write_table(path, ["sample_id", "size_factor", "method"], rows)
