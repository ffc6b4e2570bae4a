"""Count-matrix, trajectory, loss-trace and heatmap file formats."""
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_VERSION_LINE = f"# countflow format_version={FORMAT_VERSION}\n"


class DataFormatError(ValueError):
    """Malformed input file; the message names the offending line."""


def _header(d, labels):
    cols = [f"x_{i + 1}" for i in range(d)]
    if labels:
        cols.append("label")
    return ",".join(cols)


def write_counts(path, counts, labels=None):
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 2:
        raise ValueError("counts must be a 2-D array")
    lines = [_VERSION_LINE, _header(counts.shape[1], labels is not None) + "\n"]
    if labels is None:
        lines.extend(",".join(map(str, row)) + "\n" for row in counts.tolist())
    else:
        lines.extend(
            ",".join(map(str, row)) + f",{lab}\n" for row, lab in zip(counts.tolist(), labels)
        )
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_counts(path):
    """Read a count CSV. Returns ``(counts, labels)``; labels is None when
    the file has no ``label`` column."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path}: not UTF-8 ({exc})") from None
    header = None
    rows, labels = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            has_label = header[-1] == "label"
            xcols = header[:-1] if has_label else header
            expected = [f"x_{i + 1}" for i in range(len(xcols))]
            if not xcols or xcols != expected:
                raise DataFormatError(
                    f"{path}:{lineno}: header must be x_1,...,x_d[,label], got {line!r}"
                )
            continue
        if len(cells) != len(header):
            raise DataFormatError(
                f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}"
            )
        values = cells[:-1] if has_label else cells
        try:
            row = [int(v) for v in values]
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-integer cell in {line!r}") from None
        if any(v < 0 for v in row):
            raise DataFormatError(f"{path}:{lineno}: negative count in {line!r}")
        rows.append(row)
        if has_label:
            labels.append(cells[-1])
    if header is None:
        raise DataFormatError(f"{path}: missing header row")
    d = len(header) - (1 if has_label else 0)
    counts = np.asarray(rows, dtype=np.int64).reshape(len(rows), d)
    return counts, (labels if has_label else None)


def write_trajectories(path, traj, sample_ids=None):
    """Long-format CSV: sample_id, step, t, x_1..x_d."""
    states = np.asarray(traj.states)
    n_t, n, d = states.shape
    ids = np.arange(n) if sample_ids is None else np.asarray(sample_ids)
    cols = ["sample_id", "step", "t"] + [f"x_{i + 1}" for i in range(d)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_VERSION_LINE)
        fh.write(",".join(cols) + "\n")
        for s in range(n):
            for k in range(n_t):
                fh.write(
                    f"{ids[s]},{k},{float(traj.times[k])!r},"
                    + ",".join(map(str, states[k, s].tolist()))
                    + "\n"
                )


def write_loss(path, losses, pair_costs=None, start_step=0):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_VERSION_LINE)
        fh.write("step,loss" + (",pair_cost" if pair_costs is not None else "") + "\n")
        for k, loss in enumerate(losses):
            line = f"{start_step + k},{float(loss)!r}"
            if pair_costs is not None:
                line += f",{float(pair_costs[k])!r}"
            fh.write(line + "\n")


def write_heatmap(path, result):
    """Rows are count values, columns are progress values."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_VERSION_LINE)
        fh.write("z," + ",".join(f"s={s!r}" for s in result.progress.tolist()) + "\n")
        for z, row in zip(result.count_values.tolist(), result.probs):
            fh.write(f"{z}," + ",".join(repr(float(p)) for p in row) + "\n")


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
