"""Plain-text file formats read and written by the CLI.

Tensor file::

    tensor N K1 ... KN
    k1 ... kN re im        (1-based, nonzero entries, lexicographic order)

TPF coefficient file::

    tpf N K p
    re im re im ...        (K pairs per line, p*N lines, term-major)

System file: ``nucleus <position> <charge>`` lines and one ``electrons <N>``.
Run file: ``key=value`` lines. All files are UTF-8 and accept ``#`` comments.
"""
import itertools
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from config.models import Nucleus, RunFile, System1D
from services.tensor_core import CpDecomposition, DenseTensor
from utils.errors import ConfigError, FormatError
from utils.logger import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]


def _read_lines(path: PathLike) -> List[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}", path=str(path))


def _content_lines(lines: List[str]) -> Iterator[Tuple[int, str]]:
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line


def _number(token: str, kind, source: str, line: int):
    try:
        return kind(token)
    except ValueError:
        raise FormatError(f"{source}:{line}: cannot parse '{token}' as {kind.__name__}", line=line)


def write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"💾 Wrote {path}")
    return path


# -- tensors ---------------------------------------------------------------

def format_tensor(X: DenseTensor) -> str:
    out = [" ".join(["tensor", str(X.order), *map(str, X.dims)])]
    for index in itertools.product(*(range(d) for d in X.dims)):
        value = X.entries[index]
        if value != 0:
            coords = " ".join(str(i + 1) for i in index)
            out.append(f"{coords} {float(value.real)!r} {float(value.imag)!r}")
    return "\n".join(out) + "\n"


def parse_tensor(text: str, source: str = "<tensor>") -> DenseTensor:
    lines = list(_content_lines(text.splitlines()))
    if not lines:
        raise FormatError(f"{source}: empty tensor file")
    number, header = lines[0]
    tokens = header.split()
    if tokens[0] != "tensor" or len(tokens) < 3:
        raise FormatError(f"{source}:{number}: expected 'tensor N K1 .. KN'", line=number)
    N = _number(tokens[1], int, source, number)
    dims = tuple(_number(t, int, source, number) for t in tokens[2:])
    if N < 1 or len(dims) != N or any(d < 1 for d in dims):
        raise FormatError(f"{source}:{number}: header declares N={N} with dims {dims}", line=number)

    entries = np.zeros(dims, dtype=np.complex128)
    seen = set()
    for number, line in lines[1:]:
        tokens = line.split()
        if len(tokens) != N + 2:
            raise FormatError(f"{source}:{number}: expected {N} indices and 're im'", line=number)
        index = tuple(_number(t, int, source, number) for t in tokens[:N])
        if any(not 1 <= k <= d for k, d in zip(index, dims)):
            raise FormatError(f"{source}:{number}: index {index} outside dims {dims}", line=number)
        if index in seen:
            raise FormatError(f"{source}:{number}: duplicate entry {index}", line=number, index=index)
        seen.add(index)
        re, im = (_number(t, float, source, number) for t in tokens[N:])
        entries[tuple(k - 1 for k in index)] = complex(re, im)
    return DenseTensor(entries)


def read_tensor(path: PathLike) -> DenseTensor:
    return parse_tensor("\n".join(_read_lines(path)), str(path))


# -- TPF coefficients ------------------------------------------------------

def format_tpf(cp: CpDecomposition) -> str:
    K = cp.dims[0]
    out = [f"tpf {cp.order} {K} {cp.rank}"]
    for i in range(cp.rank):
        for factor in cp.factors:
            out.append(" ".join(f"{float(c.real)!r} {float(c.imag)!r}" for c in factor[:, i]))
    return "\n".join(out) + "\n"


def parse_tpf(text: str, source: str = "<tpf>") -> CpDecomposition:
    lines = list(_content_lines(text.splitlines()))
    if not lines:
        raise FormatError(f"{source}: empty TPF file")
    number, header = lines[0]
    tokens = header.split()
    if len(tokens) != 4 or tokens[0] != "tpf":
        raise FormatError(f"{source}:{number}: expected 'tpf N K p'", line=number)
    N, K, p = (_number(t, int, source, number) for t in tokens[1:])
    if N < 1 or K < 1 or p < 0:
        raise FormatError(f"{source}:{number}: invalid header N={N} K={K} p={p}", line=number)
    body = lines[1:]
    if len(body) != p * N:
        raise FormatError(f"{source}: expected {p * N} coefficient lines, found {len(body)}",
                          expected=p * N, found=len(body))

    factors = [np.zeros((K, p), dtype=np.complex128) for _ in range(N)]
    for row, (number, line) in enumerate(body):
        values = [_number(t, float, source, number) for t in line.split()]
        if len(values) != 2 * K:
            raise FormatError(f"{source}:{number}: expected {K} 're im' pairs", line=number)
        i, j = divmod(row, N)
        factors[j][:, i] = np.asarray(values[0::2]) + 1j * np.asarray(values[1::2])
    return CpDecomposition(tuple(factors))


def read_tpf(path: PathLike) -> CpDecomposition:
    return parse_tpf("\n".join(_read_lines(path)), str(path))


# -- systems and run files -------------------------------------------------

def parse_system(text: str, source: str = "<system>", name: Optional[str] = None) -> System1D:
    nuclei, electrons = [], None
    for number, line in _content_lines(text.splitlines()):
        tokens = line.split()
        if tokens[0] == "nucleus" and len(tokens) == 3:
            position = _number(tokens[1], float, source, number)
            charge = _number(tokens[2], float, source, number)
            try:
                nuclei.append(Nucleus(position=position, charge=charge))
            except ValidationError as e:
                raise FormatError(f"{source}:{number}: invalid nucleus: {e.errors()[0]['msg']}", line=number)
        elif tokens[0] == "electrons" and len(tokens) == 2:
            if electrons is not None:
                raise FormatError(f"{source}:{number}: electrons given twice", line=number)
            electrons = _number(tokens[1], int, source, number)
        else:
            raise FormatError(f"{source}:{number}: unrecognized line '{line}'", line=number)
    if electrons is None:
        raise FormatError(f"{source}: missing 'electrons N' line")
    try:
        return System1D(n_electrons=electrons, nuclei=tuple(nuclei), name=name)
    except ValidationError as e:
        raise FormatError(f"{source}: invalid system: {e.errors()[0]['msg']}")


def read_system(path: PathLike) -> System1D:
    path = Path(path)
    return parse_system("\n".join(_read_lines(path)), str(path), name=path.stem)


def parse_run_pairs(text: str, source: str = "<run>") -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    known = RunFile.known_keys()
    for number, line in _content_lines(text.splitlines()):
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected key=value", line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{number}: unknown key '{key}'", line=number, key=key)
        if key in pairs:
            raise ConfigError(f"{source}:{number}: duplicate key '{key}'", line=number, key=key)
        pairs[key] = value
    return pairs


def parse_run_file(text: str, source: str = "<run>") -> RunFile:
    pairs = parse_run_pairs(text, source)
    try:
        return RunFile.from_pairs(pairs)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"{source}: invalid value for '{field}': {first['msg']}", field=field)


def read_run_file(path: PathLike) -> RunFile:
    return parse_run_file("\n".join(_read_lines(path)), str(path))


# -- traces ----------------------------------------------------------------

def read_trace(path: PathLike) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, comment="#")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FormatError(f"cannot read trace {path}: {e}", path=str(path))
    missing = {"iter", "energy"} - set(frame.columns)
    if missing:
        raise FormatError(f"trace {path} lacks columns {sorted(missing)}", path=str(path))
    return frame
