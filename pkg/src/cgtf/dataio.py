"""Plain-text dataset files and CSV emission.

Tensor files: a required header line `# dims I1 I2 I3`, then one observed
entry per line as `i j k value` (0-based indices, comma and/or whitespace
separated).  Entries not listed are unobserved.  Other `#` lines are
comments.

Graph files: one observed pair per line as `i j weight`; listing a pair
marks both orientations observed with that weight, and every unordered
pair may appear at most once.  A `# observed-all` directive marks the
whole matrix observed, with unlisted pairs observed as weight 0.

Values are written with 17 significant digits, so a save/load round trip
reproduces float64 data bit for bit.
"""

import numpy as np

from .errors import DataFormatError
from .multilinear import ObservedTensor, Tensor3
from .solver import ObservedGraph

__all__ = [
    "load_tensor",
    "save_tensor",
    "load_graph",
    "save_graph",
    "write_csv",
]

_FMT = "%.17g"


def _data_lines(path):
    """Yield (1-based line number, stripped text) for non-comment lines."""
    with open(path, "r", encoding="utf8") as fh:
        for num, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            yield num, text


def _fields(text):
    return text.replace(",", " ").split()


def _parse_index(token, limit, path, num, what):
    try:
        idx = int(token)
    except ValueError:
        raise DataFormatError(
            f"{what} index {token!r} is not an integer", path, num
        ) from None
    if not 0 <= idx < limit:
        raise DataFormatError(
            f"{what} index {idx} outside 0..{limit - 1}", path, num
        )
    return idx


def _parse_value(token, path, num, nonnegative):
    try:
        val = float(token)
    except ValueError:
        raise DataFormatError(
            f"value {token!r} is not a number", path, num
        ) from None
    if not np.isfinite(val):
        raise DataFormatError(f"value {val} is not finite", path, num)
    if nonnegative and val < 0:
        raise DataFormatError(f"value {val} is negative", path, num)
    return val


def load_tensor(path) -> ObservedTensor:
    """Read a tensor entry file (see module docstring for the format)."""
    dims = None
    with open(path, "r", encoding="utf8") as fh:
        for num, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            if text.startswith("#"):
                parts = text[1:].split()
                if parts[:1] == ["dims"]:
                    if len(parts) != 4:
                        raise DataFormatError(
                            "dims header needs exactly 3 sizes", path, num
                        )
                    try:
                        dims = tuple(int(p) for p in parts[1:])
                    except ValueError:
                        raise DataFormatError(
                            "dims header sizes must be integers", path, num
                        ) from None
                    if any(d < 1 for d in dims):
                        raise DataFormatError(
                            "dims header sizes must be positive", path, num
                        )
                continue
            if dims is None:
                raise DataFormatError(
                    "entry before the `# dims I1 I2 I3` header", path, num
                )
            break
    if dims is None:
        raise DataFormatError("missing `# dims I1 I2 I3` header", path)

    values = np.zeros(dims)
    flags = np.zeros(dims, dtype=bool)
    for num, text in _data_lines(path):
        parts = _fields(text)
        if len(parts) != 4:
            raise DataFormatError(
                f"expected `i j k value`, got {len(parts)} fields", path, num
            )
        i = _parse_index(parts[0], dims[0], path, num, "mode-1")
        j = _parse_index(parts[1], dims[1], path, num, "mode-2")
        k = _parse_index(parts[2], dims[2], path, num, "mode-3")
        if flags[i, j, k]:
            raise DataFormatError(f"duplicate entry ({i}, {j}, {k})", path, num)
        values[i, j, k] = _parse_value(parts[3], path, num, nonnegative=True)
        flags[i, j, k] = True
    return ObservedTensor.create(values, flags)


def save_tensor(path, tensor: ObservedTensor) -> None:
    """Write the observed entries of a tensor in load_tensor's format."""
    dims = tensor.dims
    with open(path, "w", encoding="utf8") as fh:
        fh.write("# dims %d %d %d\n" % dims)
        flags = tensor.mask.flags
        values = tensor.data.values
        for i, j, k in zip(*np.nonzero(flags)):
            fh.write(f"{i} {j} {k} {_FMT % values[i, j, k]}\n")


def load_graph(path, n: int) -> ObservedGraph:
    """Read a graph edge-list file (see module docstring for the format)."""
    observe_all = False
    with open(path, "r", encoding="utf8") as fh:
        for raw in fh:
            text = raw.strip()
            if text.startswith("#") and text[1:].split() == ["observed-all"]:
                observe_all = True
    values = np.zeros((n, n))
    mask = np.zeros((n, n), dtype=bool)
    for num, text in _data_lines(path):
        parts = _fields(text)
        if len(parts) != 3:
            raise DataFormatError(
                f"expected `i j weight`, got {len(parts)} fields", path, num
            )
        i = _parse_index(parts[0], n, path, num, "node")
        j = _parse_index(parts[1], n, path, num, "node")
        if mask[i, j]:
            raise DataFormatError(
                f"pair ({i}, {j}) already listed", path, num
            )
        w = _parse_value(parts[2], path, num, nonnegative=True)
        values[i, j] = values[j, i] = w
        mask[i, j] = mask[j, i] = True
    if observe_all:
        mask[:] = True
    return ObservedGraph.create(values, mask)


def save_graph(path, graph: ObservedGraph) -> None:
    """Write a graph in load_graph's format.

    A fully observed graph gets the `# observed-all` directive and only its
    nonzero pairs; otherwise every observed pair is written (zeros too, to
    preserve the observation mask exactly).
    """
    with open(path, "w", encoding="utf8") as fh:
        full = bool(graph.mask.all())
        if full:
            fh.write("# observed-all\n")
        rows, cols = np.nonzero(np.triu(graph.mask))
        for i, j in zip(rows, cols):
            w = graph.values[i, j]
            if full and w == 0.0:
                continue
            fh.write(f"{i} {j} {_FMT % w}\n")


def write_csv(path, header, rows) -> None:
    """Write a CSV with a header row; floats at full precision."""

    def cell(x):
        if isinstance(x, (float, np.floating)):
            return _FMT % x
        return str(x)

    with open(path, "w", encoding="utf8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell(x) for x in row) + "\n")
