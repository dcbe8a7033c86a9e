"""Dataset synthesis and persistence.

Two matrix formats: a seekable raw-binary layout (24-byte header: magic
"UOIM", u32 version, u64 rows, u64 cols, all little-endian, then row-major
float64) for chunked range reads, and delimited text at 17 significant
digits.  Fits and ground truths serialize to JSON with base64-encoded
array payloads so coefficient vectors round-trip bit-exactly.
"""

from __future__ import annotations

import base64
import json
import struct
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .problem import RegressionProblem
from .pipeline import SupportFamily, UoiFit
from .timing import TimingBreakdown
from .var import VarFit, VarSpec

__all__ = [
    "MatrixFormatError",
    "FitFormatError",
    "FitVersionError",
    "GroundTruth",
    "generate_regression",
    "write_matrix",
    "read_matrix",
    "read_chunk",
    "write_fit",
    "read_fit",
    "write_truth",
    "read_truth",
]

_MAGIC = b"UOIM"
_BIN_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")  # magic, version, rows, cols
_FIT_VERSION = 1


class MatrixFormatError(ValueError):
    """Malformed matrix file: bad header, ragged rows, or size mismatch."""


class FitFormatError(ValueError):
    """Malformed or truncated fit/truth file."""


class FitVersionError(FitFormatError):
    """Fit/truth file written by an unknown format version."""


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """True coefficients behind a synthetic problem."""

    beta_true: np.ndarray
    noise_sigma: float
    support_true: np.ndarray = None

    def __post_init__(self):
        beta = np.asarray(self.beta_true, dtype=np.float64)
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        object.__setattr__(self, "beta_true", beta)
        object.__setattr__(self, "support_true", np.flatnonzero(beta != 0.0))


def generate_regression(
    n: int,
    p: int,
    k_nonzero: int,
    noise_sigma: float,
    beta_scale: float = 1.0,
    seed: int = 0,
) -> tuple[RegressionProblem, GroundTruth]:
    """Synthesize a sparse linear model with standard Gaussian design.

    k_nonzero coefficients sit at uniformly chosen indices with magnitudes
    uniform in [0.5, 1.5] * beta_scale and random signs.
    """
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    if not (1 <= k_nonzero <= p):
        raise ValueError("k_nonzero must be between 1 and p")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    support = np.sort(rng.choice(p, size=k_nonzero, replace=False))
    beta = np.zeros(p)
    mags = rng.uniform(0.5, 1.5, size=k_nonzero) * beta_scale
    signs = rng.integers(0, 2, size=k_nonzero) * 2 - 1
    beta[support] = signs * mags
    y = X @ beta + noise_sigma * rng.standard_normal(n)
    return (
        RegressionProblem(X, y, beta_true=beta),
        GroundTruth(beta_true=beta, noise_sigma=noise_sigma),
    )


def _normalize_format(fmt: str) -> str:
    aliases = {
        "binary": "binary",
        "raw-binary": "binary",
        "text": "text",
        "delimited-text": "text",
    }
    try:
        return aliases[fmt]
    except KeyError:
        raise ValueError(f"unknown matrix format {fmt!r}") from None


def write_matrix(matrix: np.ndarray, path, fmt: str = "binary"):
    """Write a 2-D float64 matrix in the raw-binary or text format."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    rows, cols = matrix.shape
    if _normalize_format(fmt) == "binary":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _BIN_VERSION, rows, cols))
            fh.write(np.ascontiguousarray(matrix, dtype="<f8").tobytes())
    else:
        with open(path, "w") as fh:
            for row in matrix:
                fh.write(" ".join(f"{v:.17g}" for v in row))
                fh.write("\n")


def _read_header(fh, path):
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise MatrixFormatError(f"{path}: file too short for a header")
    magic, version, rows, cols = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {magic!r}")
    if version != _BIN_VERSION:
        raise MatrixFormatError(
            f"{path}: unsupported binary format version {version}"
        )
    return rows, cols


def read_matrix(path, fmt: str = "binary") -> np.ndarray:
    """Read a matrix written by write_matrix; returns a 2-D float64 array."""
    if _normalize_format(fmt) == "binary":
        with open(path, "rb") as fh:
            rows, cols = _read_header(fh, path)
            payload = fh.read()
        expected = rows * cols * 8
        if len(payload) != expected:
            raise MatrixFormatError(
                f"{path}: payload is {len(payload)} bytes, header promises "
                f"{expected} ({rows}x{cols} float64)"
            )
        data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
        return data.reshape(rows, cols)

    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise MatrixFormatError(
                    f"{path}: line {lineno} has {len(parts)} values, "
                    f"expected {width}"
                )
            try:
                rows.append([float(v) for v in parts])
            except ValueError:
                raise MatrixFormatError(
                    f"{path}: line {lineno} contains a non-numeric value"
                ) from None
    if not rows:
        raise MatrixFormatError(f"{path}: no rows found")
    return np.array(rows, dtype=np.float64)


def read_chunk(path, row_start: int, row_count: int) -> np.ndarray:
    """Read a contiguous row range of a raw-binary matrix without reading
    the rest of the file (seek-based)."""
    if row_start < 0 or row_count < 0:
        raise ValueError("row_start and row_count must be nonnegative")
    with open(path, "rb") as fh:
        rows, cols = _read_header(fh, path)
        if row_start + row_count > rows:
            raise ValueError(
                f"rows [{row_start}, {row_start + row_count}) out of range "
                f"for a {rows}-row matrix"
            )
        fh.seek(_HEADER.size + row_start * cols * 8)
        payload = fh.read(row_count * cols * 8)
    if len(payload) != row_count * cols * 8:
        raise MatrixFormatError(f"{path}: file truncated inside payload")
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return data.reshape(row_count, cols)


# ---------------------------------------------------------------------------
# fit / ground-truth serialization


def _enc(arr: np.ndarray) -> dict:
    arr = np.asarray(arr)
    kind = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f8"
    payload = np.ascontiguousarray(arr, dtype=kind)
    return {
        "shape": list(arr.shape),
        "dtype": kind,
        "data": base64.b64encode(payload.tobytes()).decode("ascii"),
    }


def _dec(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype=obj["dtype"])
    if obj["dtype"] == "<i8":
        arr = arr.astype(np.int64)
    else:
        arr = arr.astype(np.float64)
    return arr.reshape(obj["shape"])


def _family_to_dict(family: SupportFamily) -> dict:
    return {
        "lambdas": _enc(family.lambdas),
        "supports": [_enc(s) for s in family.supports],
        "nonconverged": [list(t) for t in family.nonconverged],
    }


def _family_from_dict(d: dict) -> SupportFamily:
    return SupportFamily(
        supports=[_dec(s) for s in d["supports"]],
        lambdas=_dec(d["lambdas"]),
        nonconverged=[tuple(t) for t in d["nonconverged"]],
    )


def _fit_to_dict(fit: Union[UoiFit, VarFit]) -> dict:
    doc = {
        "format": "uoi-fit",
        "version": _FIT_VERSION,
        "kind": "var" if isinstance(fit, VarFit) else "lasso",
        "beta_star": _enc(fit.beta_star),
        "support_family": _family_to_dict(fit.support_family),
        "chosen_lambda_idx": _enc(fit.chosen_lambda_idx),
        "chosen_losses": _enc(fit.chosen_losses),
        "chosen_supports": [_enc(s) for s in fit.chosen_supports],
        "config": fit.config,
        "diagnostics": {
            k: [list(t) for t in v] for k, v in fit.diagnostics.items()
        },
        "timing": fit.timing.as_dict(),
    }
    if isinstance(fit, VarFit):
        doc["var"] = {
            "A_hat": _enc(fit.A_hat),
            "mu_hat": _enc(fit.mu_hat),
            "spectral_radius": float(fit.spectral_radius).hex(),
            "stable": bool(fit.stable),
        }
    else:
        doc["intercept"] = float(fit.intercept).hex()
    return doc


def write_fit(fit: Union[UoiFit, VarFit], path):
    """Serialize a fit to structured text (JSON, arrays base64-encoded)."""
    with open(path, "w") as fh:
        json.dump(_fit_to_dict(fit), fh, sort_keys=True, indent=1)
        fh.write("\n")


def _load_doc(path, expected_format):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise FitFormatError(f"{path}: truncated or malformed file: {e}") from None
    if not isinstance(doc, dict) or doc.get("format") != expected_format:
        raise FitFormatError(
            f"{path}: not a {expected_format} file"
        )
    if doc.get("version") != _FIT_VERSION:
        raise FitVersionError(
            f"{path}: unsupported format version {doc.get('version')!r}"
        )
    return doc


def read_fit(path) -> Union[UoiFit, VarFit]:
    """Read a fit written by write_fit; the coefficient payload is restored
    bit-exactly."""
    doc = _load_doc(path, "uoi-fit")
    family = _family_from_dict(doc["support_family"])
    common = dict(
        beta_star=_dec(doc["beta_star"]),
        support_family=family,
        chosen_lambda_idx=_dec(doc["chosen_lambda_idx"]),
        chosen_losses=_dec(doc["chosen_losses"]),
        chosen_supports=[_dec(s) for s in doc["chosen_supports"]],
        timing=TimingBreakdown.from_dict(doc["timing"]),
        config=doc["config"],
        diagnostics={
            k: [tuple(t) for t in v] for k, v in doc["diagnostics"].items()
        },
    )
    if doc["kind"] == "var":
        v = doc["var"]
        return VarFit(
            A_hat=_dec(v["A_hat"]),
            mu_hat=_dec(v["mu_hat"]),
            spectral_radius=float.fromhex(v["spectral_radius"]),
            stable=bool(v["stable"]),
            **common,
        )
    if doc["kind"] != "lasso":
        raise FitFormatError(f"{path}: unknown fit kind {doc['kind']!r}")
    return UoiFit(intercept=float.fromhex(doc["intercept"]), **common)


def write_truth(truth: Union[GroundTruth, VarSpec], path):
    """Serialize ground truth (regression coefficients or a VAR process)."""
    if isinstance(truth, GroundTruth):
        doc = {
            "format": "uoi-truth",
            "version": _FIT_VERSION,
            "kind": "regression",
            "beta_true": _enc(truth.beta_true),
            "noise_sigma": float(truth.noise_sigma).hex(),
        }
    elif isinstance(truth, VarSpec):
        doc = {
            "format": "uoi-truth",
            "version": _FIT_VERSION,
            "kind": "var",
            "A": _enc(truth.A),
            "mu": _enc(truth.mu),
            "sigma": _enc(truth.sigma),
        }
    else:
        raise TypeError(f"cannot serialize truth of type {type(truth)!r}")
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_truth(path) -> Union[GroundTruth, VarSpec]:
    doc = _load_doc(path, "uoi-truth")
    if doc["kind"] == "regression":
        return GroundTruth(
            beta_true=_dec(doc["beta_true"]),
            noise_sigma=float.fromhex(doc["noise_sigma"]),
        )
    if doc["kind"] == "var":
        return VarSpec(A=_dec(doc["A"]), mu=_dec(doc["mu"]), sigma=_dec(doc["sigma"]))
    raise FitFormatError(f"{path}: unknown truth kind {doc['kind']!r}")
