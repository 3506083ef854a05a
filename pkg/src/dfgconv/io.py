"""Text and CSV formats shared by the workflows.

All numbers are written with ``format(x, '.12g')``, which never depends on
the process locale.
"""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from . import quantum as qc
from .detection import TdcHistogram
from .exceptions import ParseError
from .tomography import CountTable

COUNT_COLUMNS = ("setting_index", "qwp_a_deg", "hwp_a_deg", "qwp_c_deg", "hwp_c_deg",
                 "n_pp", "n_pf", "n_fp", "n_ff", "duration_s")
HISTOGRAM_COLUMNS = ("bin_start_ps", "bin_end_ps", "counts")
SWEEP_COLUMNS = ("P_mW", "efficiency", "noise_Hz", "snr", "optimum")


def fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if x == 0.0:
        return "0"
    return format(x, ".12g")


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def to_csv_text(header, rows):
    buf = io.StringIO()
    _write_rows(buf, header, rows)
    return buf.getvalue()


# -- density matrices -----------------------------------------------------------

def _fmt_complex(z):
    return f"{fmt(z.real)}{'+' if z.imag >= 0 or math.isnan(z.imag) else '-'}{fmt(abs(z.imag))}j"


def format_matrix(rho):
    rho = np.asarray(rho, dtype=complex)
    return "".join(" ".join(_fmt_complex(z) for z in row) + "\n" for row in rho)


def parse_matrix(text):
    rows = [line.split() for line in text.strip().splitlines() if line.strip()]
    if len(rows) != 4 or any(len(r) != 4 for r in rows):
        raise ParseError("density matrix text must have 4 rows of 4 entries")
    try:
        return np.array([[complex(tok) for tok in row] for row in rows])
    except ValueError as exc:
        raise ParseError(f"bad complex entry: {exc}") from exc


def write_matrix(path, rho):
    with open(path, "w", newline="\n") as fh:
        fh.write(format_matrix(rho))


def read_matrix(path, validate=True):
    with open(path) as fh:
        rho = parse_matrix(fh.read())
    return qc.check_density(rho, atol=1e-8) if validate else rho


# -- count tables ---------------------------------------------------------------

def count_table_rows(table):
    for i, ((sa, sc), n, t) in enumerate(zip(table.settings, table.counts, table.durations)):
        yield (i, np.degrees(sa.qwp), np.degrees(sa.hwp), np.degrees(sc.qwp), np.degrees(sc.hwp),
               *[int(v) if float(v).is_integer() else float(v) for v in n], t)


def write_count_table(path, table):
    with open(path, "w", newline="") as fh:
        _write_rows(fh, COUNT_COLUMNS, count_table_rows(table))


def read_count_table(path):
    """Parse a count-table CSV; schema and row errors raise ParseError."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("count table is empty (no header)") from None
        header = [h.strip() for h in header]
        for col in COUNT_COLUMNS:
            if col not in header:
                raise ParseError(f"missing column {col!r}")
        extra = [h for h in header if h not in COUNT_COLUMNS]
        if extra:
            raise ParseError(f"unexpected column {extra[0]!r}")
        idx = {c: header.index(c) for c in COUNT_COLUMNS}
        settings, counts, durations = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                ang = [math.radians(float(row[idx[c]])) for c in COUNT_COLUMNS[1:5]]
                n = [float(row[idx[c]]) for c in COUNT_COLUMNS[5:9]]
                t = float(row[idx["duration_s"]])
            except ValueError as exc:
                raise ParseError(f"row {lineno}: {exc}") from exc
            if any(v < 0 or not math.isfinite(v) for v in n):
                raise ParseError(f"row {lineno}: counts must be finite and nonnegative")
            settings.append((qc.WaveplateSetting(ang[0], ang[1]), qc.WaveplateSetting(ang[2], ang[3])))
            counts.append(n)
            durations.append(t)
    if not settings:
        raise ParseError("count table has no data rows")
    counts = np.array(counts)
    if np.all(counts == np.round(counts)):
        counts = counts.astype(np.int64)
    return CountTable(settings, counts, np.array(durations))


# -- histograms & records -------------------------------------------------------

def write_histogram(path, hist):
    rows = ((a, b, int(c)) for a, b, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts))
    with open(path, "w", newline="") as fh:
        _write_rows(fh, HISTOGRAM_COLUMNS, rows)


def read_histogram(path, acquisition_time=float("nan")):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != list(HISTOGRAM_COLUMNS):
            raise ParseError(f"histogram header must be {','.join(HISTOGRAM_COLUMNS)}")
        rows = list(reader)
    starts = np.array([float(r["bin_start_ps"]) for r in rows])
    ends = np.array([float(r["bin_end_ps"]) for r in rows])
    counts = np.array([int(r["counts"]) for r in rows])
    return TdcHistogram(np.append(starts, ends[-1]), counts, acquisition_time)


def write_json(path, record):
    with open(path, "w", newline="\n") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
