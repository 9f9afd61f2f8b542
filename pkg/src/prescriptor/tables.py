"""CSV/JSON output of experiment reports.

Floats are written with ``repr`` so a written table parses back to exactly
the same values.
"""

import csv
import json
import math

import numpy as np

INT_COLUMNS = {"N", "replication", "pollution_dims", "count", "n_validation"}
STR_COLUMNS = {"method"}


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _parse(col, text):
    if col in STR_COLUMNS:
        return text
    if col in INT_COLUMNS:
        return int(text)
    return float(text)


def read_rows(path):
    """Rows of a report CSV as dicts with typed values."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        return columns, [{c: _parse(c, v) for c, v in zip(columns, line)} for line in reader]


def write_matrix(path, header, data):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.asarray(data, dtype=float):
            w.writerow([repr(float(v)) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


PLOT_SCRIPT = '''"""Plot mean {value} by N per method from {csv_name} (needs matplotlib)."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
series = defaultdict(lambda: defaultdict(list))
with open(path) as fh:
    for row in csv.DictReader(fh):
        series[row["method"]][int(row["N"])].append(float(row["{value}"]))
for method, by_n in sorted(series.items()):
    ns = sorted(by_n)
    plt.plot(ns, [sum(by_n[n]) / len(by_n[n]) for n in ns], marker="o", label=method)
plt.xscale("log")
plt.xlabel("N")
plt.ylabel("{value}")
plt.legend()
plt.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def plot_script(csv_name, value="true_risk"):
    return PLOT_SCRIPT.format(csv_name=csv_name, value=value)
