"""Tab-separated matrix files and the fit report JSON.

TSV layout: the first row holds column identifiers; when its first cell is
``#id`` every data row additionally starts with a row identifier.  Cells
are decimal floats; ``NA`` marks a missing response where permitted.  All
numbers are written with 17 significant digits so round-trips are bitwise
exact.
"""

import json
from dataclasses import dataclass

import numpy as np

from .em import FitResult
from .errors import NaInCovariates, NonFinite, ParseError
from .posterior import PriorParams, TissuePosterior


def fmt(value):
    """17-significant-digit decimal; round-trips any float64 exactly."""
    return format(float(value), ".17g")


@dataclass(frozen=True)
class MatrixFile:
    """Parsed TSV matrix: values, identifiers, and the NA positions."""

    values: np.ndarray       # (r, c), NaN where NA
    row_ids: list            # list of str, or None without a #id column
    col_ids: list            # list of str
    na_mask: np.ndarray      # (r, c) bool


def read_matrix_tsv(path, allow_na=False):
    """Parse a TSV matrix file.

    Parameters
    ----------
    path : str
    allow_na : bool
        Whether literal ``NA`` cells are legal (response files only).

    Returns
    -------
    MatrixFile

    Raises
    ------
    ParseError
        Ragged rows, unparseable or non-finite numbers, missing header or
        data; coordinates are 1-based file positions.
    NaInCovariates
        An NA cell when ``allow_na`` is false.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in fh]
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(f"{path}: empty file")
    rows = [ln.split("\t") for ln in lines]
    header = rows[0]
    has_ids = header[0] == "#id"
    col_ids = header[1:] if has_ids else header
    if not col_ids:
        raise ParseError(f"{path}: header has no column identifiers")
    body = rows[1:]
    if not body:
        raise ParseError(f"{path}: header but no data rows")
    width = len(header)
    row_ids = [] if has_ids else None
    values = np.empty((len(body), len(col_ids)))
    na_mask = np.zeros((len(body), len(col_ids)), dtype=bool)
    for i, row in enumerate(body):
        line_no = i + 2
        if len(row) != width:
            raise ParseError(
                f"{path}: expected {width} fields, found {len(row)}", row=line_no
            )
        if has_ids:
            row_ids.append(row[0])
            row = row[1:]
        for c, cell in enumerate(row):
            if cell == "NA":
                if not allow_na:
                    raise NaInCovariates(
                        f"{path}: NA not allowed here", row=line_no, col=c + 1
                    )
                values[i, c] = np.nan
                na_mask[i, c] = True
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: cannot parse {cell!r} as a number",
                    row=line_no,
                    col=c + 1,
                ) from None
            if not np.isfinite(v):
                raise ParseError(
                    f"{path}: non-finite value {cell!r}", row=line_no, col=c + 1
                )
            values[i, c] = v
    return MatrixFile(values=values, row_ids=row_ids, col_ids=list(col_ids), na_mask=na_mask)


def write_matrix_tsv(path, values, col_ids=None, row_ids=None, na_mask=None):
    """Write a matrix as TSV; a #id column appears only when row_ids given."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"matrix must be 2-d, got shape {values.shape}")
    r, c = values.shape
    if na_mask is None:
        na_mask = np.zeros((r, c), dtype=bool)
    if col_ids is None:
        col_ids = [f"col{j + 1}" for j in range(c)]
    with open(path, "w", encoding="utf-8") as fh:
        if row_ids is None:
            fh.write("\t".join(str(s) for s in col_ids) + "\n")
            for i in range(r):
                cells = ["NA" if na_mask[i, j] else fmt(values[i, j]) for j in range(c)]
                fh.write("\t".join(cells) + "\n")
        else:
            fh.write("\t".join(["#id"] + [str(s) for s in col_ids]) + "\n")
            for i in range(r):
                cells = ["NA" if na_mask[i, j] else fmt(values[i, j]) for j in range(c)]
                fh.write("\t".join([str(row_ids[i])] + cells) + "\n")


def _json_17g(obj, out):
    """Serialize with floats at 17 significant digits, keys in given order."""
    if isinstance(obj, dict):
        out.append("{")
        for i, (key, val) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(key))
            out.append(": ")
            _json_17g(val, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, val in enumerate(obj):
            if i:
                out.append(", ")
            _json_17g(val, out)
        out.append("]")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif obj is None:
        out.append("null")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_fit_json(path, result, tissue_names):
    """Persist a FitResult; see read_fit_json for the inverse."""
    if len(tissue_names) != len(result.posteriors):
        raise ValueError(
            f"{len(tissue_names)} names for {len(result.posteriors)} posteriors"
        )
    doc = {
        "params": {
            "tau1": result.params.tau1,
            "beta": list(result.params.beta),
            "eta": result.params.eta,
            "sigma2": result.params.sigma2,
        },
        "posteriors": [
            {
                "tissue": str(name),
                "h": tp.h,
                "post_mean": list(tp.post_mean),
                "log_bf": tp.log_bf,
                "log_odds": tp.log_odds,
            }
            for name, tp in zip(tissue_names, result.posteriors)
        ],
        "loglik_trace": list(result.loglik_trace),
        "iterations": result.iterations,
        "converged": result.converged,
    }
    out = []
    _json_17g(doc, out)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("".join(out) + "\n")


def read_fit_json(path):
    """Load a fit report.

    Returns
    -------
    (result, tissue_names) : FitResult, list of str

    The conditional means are reconstructed as post_mean / h; when h
    underflows to zero the conditional mean is unrecoverable and zeros
    are stored (post_mean is zero there too).
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        params = PriorParams(
            tau1=float(doc["params"]["tau1"]),
            beta=np.asarray(doc["params"]["beta"], dtype=np.float64),
            eta=float(doc["params"]["eta"]),
            sigma2=float(doc["params"]["sigma2"]),
        )
        names = []
        posteriors = []
        for entry in doc["posteriors"]:
            names.append(str(entry["tissue"]))
            h = float(entry["h"])
            post_mean = np.asarray(entry["post_mean"], dtype=np.float64)
            cond = post_mean / h if h > 0.0 else np.zeros_like(post_mean)
            posteriors.append(
                TissuePosterior(
                    h=h,
                    post_mean=post_mean,
                    cond_mean_active=cond,
                    log_bf=float(entry["log_bf"]),
                    log_odds=float(entry["log_odds"]),
                )
            )
        result = FitResult(
            params=params,
            posteriors=posteriors,
            loglik_trace=np.asarray(doc["loglik_trace"], dtype=np.float64),
            iterations=int(doc["iterations"]),
            converged=bool(doc["converged"]),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: malformed fit report ({exc})") from exc
    if not np.all(np.isfinite(result.params.beta)):
        raise NonFinite(f"{path}: non-finite parameters")
    return result, names
