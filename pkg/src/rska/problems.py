"""Synthetic sparse linear systems, sphere noise, and problem files.

A problem on disk is two files: the matrix (Matrix Market array format or a
CSV whose first row is ``m,n``) and a JSON sidecar at ``<path>.json`` holding
metadata and the vectors.  Floats are written with ``repr`` so a round trip
is exact.
"""

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .core import DenseMatrix, as_matrix
from .exceptions import FormatError, InvalidSparsity, IoError

MM_BANNER = "%%MatrixMarket matrix array real general"


@dataclass(frozen=True)
class Problem:
    """A linear system ``A x = b`` with optional noisy data and ground truth.

    ``sparsity_s`` is the number of nonzeros in ``xhat``.
    """

    A: DenseMatrix
    b: np.ndarray
    xhat: np.ndarray = None
    b_noisy: np.ndarray = None
    noise_level: float = None
    sparsity_s: int = None
    seed: int = None

    @property
    def m(self):
        return self.A.m

    @property
    def n(self):
        return self.A.n

    def metadata(self):
        return {
            "m": self.m,
            "n": self.n,
            "s": self.sparsity_s,
            "seed": self.seed,
            "noise_level": self.noise_level,
        }


def default_eta(m, n):
    """``1 + floor(min(m, n) / 10)``, the batch size used when none is given."""
    return 1 + min(m, n) // 10


def generate_gaussian(m, n, s, seed=0):
    """Standard-normal ``A`` and an ``s``-sparse ``xhat`` with standard-normal nonzeros; ``b = A xhat``."""
    if not 1 <= s <= n:
        raise InvalidSparsity(f"need 1 <= s <= n, got s={s}, n={n}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    xhat = np.zeros(n)
    support = rng.choice(n, size=s, replace=False)
    values = rng.standard_normal(s)
    # A standard normal draw of exactly 0.0 would break the declared sparsity.
    values[values == 0.0] = 1.0
    xhat[support] = values
    A = DenseMatrix(A)
    return Problem(A=A, b=A.values @ xhat, xhat=xhat, sparsity_s=s, seed=seed)


def add_sphere_noise(problem, ell, seed=0):
    """Return a copy with ``b_noisy = b + e``, ``e`` uniform on the sphere of radius ``ell``."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    if ell == 0:
        return replace(problem, b_noisy=problem.b.copy(), noise_level=0.0)
    rng = np.random.default_rng([int(seed), 0x0015E])
    g = rng.standard_normal(problem.m)
    e = g * (ell / np.linalg.norm(g))
    return replace(problem, b_noisy=problem.b + e, noise_level=float(ell))


# ----------------------------------------------------------------------------
# file I/O


def write_matrix_market(A, path):
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    lines = [MM_BANNER, f"{m} {n}"]
    # Array format stores entries column by column.
    lines.extend(repr(float(v)) for v in A.T.ravel())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_csv_matrix(A, path):
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    lines = [f"{m},{n}"]
    lines.extend(",".join(repr(float(v)) for v in row) for row in A)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_float(tok, line, col):
    try:
        return float(tok)
    except ValueError:
        raise FormatError(f"cannot parse {tok!r} as a real number", line, col) from None


def _parse_dims(text, sep, line):
    parts = text.split(sep) if sep else text.split()
    if len(parts) != 2:
        raise FormatError(f"expected two dimensions, got {text!r}", line, 1)
    try:
        m, n = int(parts[0]), int(parts[1])
    except ValueError:
        raise FormatError(f"dimensions must be integers, got {text!r}", line, 1) from None
    if m < 1 or n < 1:
        raise FormatError("dimensions must be positive", line, 1)
    return m, n


def read_matrix_market(lines):
    if not lines[0].lower().startswith("%%matrixmarket"):
        raise FormatError("missing %%MatrixMarket banner", 1, 1)
    banner = lines[0].split()
    if len(banner) != 5 or [t.lower() for t in banner[1:]] != ["matrix", "array", "real", "general"]:
        raise FormatError(f"unsupported banner {lines[0].strip()!r}; need '{MM_BANNER}'", 1, 1)
    idx = 1
    while idx < len(lines) and (lines[idx].startswith("%") or not lines[idx].strip()):
        idx += 1
    if idx >= len(lines):
        raise FormatError("missing size line", idx + 1)
    m, n = _parse_dims(lines[idx].strip(), None, idx + 1)
    values = []
    for lineno in range(idx + 1, len(lines)):
        text = lines[lineno].strip()
        if not text or text.startswith("%"):
            continue
        toks = text.split()
        if len(toks) != 1:
            raise FormatError(f"expected one value per line, got {len(toks)}", lineno + 1, 1)
        values.append(_parse_float(toks[0], lineno + 1, 1))
    if len(values) != m * n:
        raise FormatError(
            f"expected {m * n} entries for a {m}x{n} matrix, found {len(values)}", len(lines)
        )
    return np.array(values).reshape(n, m).T.copy()


def read_csv_matrix(lines):
    m, n = _parse_dims(lines[0].strip(), ",", 1)
    rows = []
    for lineno in range(1, len(lines)):
        text = lines[lineno].strip()
        if not text:
            continue
        toks = text.split(",")
        if len(toks) != n:
            raise FormatError(f"expected {n} columns, got {len(toks)}", lineno + 1, len(toks))
        rows.append([_parse_float(t.strip(), lineno + 1, j + 1) for j, t in enumerate(toks)])
    if len(rows) != m:
        raise FormatError(f"expected {m} rows, found {len(rows)}", len(lines))
    return np.array(rows, dtype=np.float64).reshape(m, n)


def read_matrix(path):
    """Read a matrix file, choosing the parser from its first line."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise FormatError("empty file", 1)
    if lines[0].startswith("%%"):
        return read_matrix_market(lines)
    return read_csv_matrix(lines)


def _vec_or_none(v):
    return None if v is None else [float(x) for x in v]


def save_problem(problem, path, fmt="mtx"):
    """Write the matrix to ``path`` and metadata plus vectors to ``path + '.json'``."""
    if fmt not in ("mtx", "csv"):
        raise ValueError("fmt must be 'mtx' or 'csv'")
    try:
        if fmt == "mtx":
            write_matrix_market(problem.A.values, path)
        else:
            write_csv_matrix(problem.A.values, path)
        sidecar = problem.metadata()
        sidecar.update(
            format=fmt,
            b=_vec_or_none(problem.b),
            xhat=_vec_or_none(problem.xhat),
            b_noisy=_vec_or_none(problem.b_noisy),
        )
        with open(os.fspath(path) + ".json", "w") as fh:
            json.dump(sidecar, fh)
    except OSError as exc:
        raise IoError(f"cannot write problem to {path}: {exc}") from exc


def load_problem(path):
    A = read_matrix(path)
    side = os.fspath(path) + ".json"
    try:
        with open(side) as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read sidecar {side}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON sidecar: {exc.msg}", exc.lineno, exc.colno) from exc
    if (meta.get("m"), meta.get("n")) != A.shape:
        raise FormatError(f"sidecar dimensions {meta.get('m')}x{meta.get('n')} do not match matrix {A.shape}")

    def arr(key):
        v = meta.get(key)
        return None if v is None else np.array(v, dtype=np.float64)

    b = arr("b")
    if b is None:
        raise FormatError("sidecar has no right-hand side 'b'")
    return Problem(
        A=as_matrix(A),
        b=b,
        xhat=arr("xhat"),
        b_noisy=arr("b_noisy"),
        noise_level=meta.get("noise_level"),
        sparsity_s=meta.get("s"),
        seed=meta.get("seed"),
    )
