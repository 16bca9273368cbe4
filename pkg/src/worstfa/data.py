"""Score tables, model artifacts and result curves: loading, validation, I/O."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

MODEL_FORMAT_VERSION = "worstfa-model/1"
FAMILIES = ("gaussian-ls", "pwl-ls", "plda")


class ScoreFormatError(ValueError):
    """A score file could not be parsed; the message names the offending line."""


class ArtifactError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """Multiset of detection scores for one ordered speaker pair."""

    scores: np.ndarray
    mean: float

    @classmethod
    def of(cls, scores) -> "ScoreSet":
        s = np.asarray(scores, dtype=np.float64).ravel()
        if s.size == 0:
            raise ValueError("a ScoreSet needs at least one score")
        if not np.all(np.isfinite(s)):
            raise ValueError("scores must be finite")
        s.setflags(write=False)
        return cls(s, float(s.mean()))

    def __len__(self):
        return self.scores.size

    def __eq__(self, other):
        return isinstance(other, ScoreSet) and np.array_equal(np.sort(self.scores), np.sort(other.scores))

    def __hash__(self):
        return hash(tuple(np.sort(self.scores)))


class PairScoreTable:
    """Nontarget scores grouped by ordered ``(enroll, test)`` speaker pair.

    Storage is columnar: ``values`` holds all scores with each pair's scores
    contiguous (sorted ascending) between ``offsets[p]`` and ``offsets[p+1]``.
    Speakers are indexed in sorted token order, so index order doubles as the
    tie-break order.
    """

    def __init__(self, enroll: Sequence[str], test: Sequence[str], scores, partition=None):
        enroll = np.asarray(enroll, dtype=object)
        test = np.asarray(test, dtype=object)
        scores = np.asarray(scores, dtype=np.float64)
        if not (len(enroll) == len(test) == len(scores)):
            raise ValueError("enroll, test and score columns differ in length")
        if len(scores) == 0:
            raise ValueError("empty score table")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        for tok in (*set(enroll), *set(test)):
            if not isinstance(tok, str) or not tok:
                raise ValueError(f"speaker ids must be non-empty strings, got {tok!r}")

        speakers = sorted(set(enroll) | set(test))
        index = {s: i for i, s in enumerate(speakers)}
        e = np.fromiter((index[s] for s in enroll), dtype=np.int64, count=len(enroll))
        t = np.fromiter((index[s] for s in test), dtype=np.int64, count=len(test))
        if np.any(e == t):
            raise ValueError("nontarget records need distinct enroll and test speakers")

        order = np.lexsort((scores, t, e))
        e, t, v = e[order], t[order], scores[order]
        start = np.flatnonzero(np.r_[True, (e[1:] != e[:-1]) | (t[1:] != t[:-1])])

        self.speakers: tuple[str, ...] = tuple(speakers)
        self.partition = partition
        self.values = v
        self.offsets = np.r_[start, len(v)]
        self.lengths = np.diff(self.offsets)
        self.pair_enroll = e[start]
        self.pair_test = t[start]
        self.means = np.add.reduceat(v, start) / self.lengths
        for arr in (self.values, self.offsets, self.lengths, self.pair_enroll, self.pair_test, self.means):
            arr.setflags(write=False)

    # ------------------------------------------------------------ constructors

    @classmethod
    def from_pairs(cls, pairs: Mapping[tuple[str, str], Iterable[float]], partition=None):
        enroll, test, scores = [], [], []
        for (a, b), ss in pairs.items():
            ss = list(ss)
            enroll += [a] * len(ss)
            test += [b] * len(ss)
            scores += ss
        return cls(enroll, test, scores, partition)

    def map_scores(self, fn) -> "PairScoreTable":
        """New table with ``fn`` applied elementwise to every score."""
        e = np.repeat(np.asarray(self.speakers, dtype=object)[self.pair_enroll], self.lengths)
        t = np.repeat(np.asarray(self.speakers, dtype=object)[self.pair_test], self.lengths)
        return PairScoreTable(e, t, fn(self.values), self.partition)

    # ------------------------------------------------------------ views

    @property
    def n_pairs(self):
        return len(self.means)

    @property
    def n_scores(self):
        return len(self.values)

    @property
    def n_speakers(self):
        return len(self.speakers)

    @cached_property
    def pair_ids(self) -> np.ndarray:
        """Dense ``(S, S)`` matrix of pair ids, ``-1`` where no pair exists."""
        m = np.full((self.n_speakers, self.n_speakers), -1, dtype=np.int64)
        m[self.pair_enroll, self.pair_test] = np.arange(self.n_pairs)
        return m

    @cached_property
    def mean_matrix(self) -> np.ndarray:
        m = np.full((self.n_speakers, self.n_speakers), np.nan)
        m[self.pair_enroll, self.pair_test] = self.means
        return m

    @cached_property
    def enroll_speakers(self) -> np.ndarray:
        return np.unique(self.pair_enroll)

    @cached_property
    def test_speakers(self) -> np.ndarray:
        return np.unique(self.pair_test)

    @cached_property
    def pairs(self) -> dict[tuple[str, str], ScoreSet]:
        return {(self.speakers[e], self.speakers[t]): self._score_set(p)
                for p, (e, t) in enumerate(zip(self.pair_enroll, self.pair_test))}

    def _score_set(self, p):
        s = self.values[self.offsets[p]:self.offsets[p + 1]]
        return ScoreSet(s, float(self.means[p]))

    def scores(self, enroll: str, test: str) -> ScoreSet:
        i, j = self.speakers.index(enroll), self.speakers.index(test)
        p = self.pair_ids[i, j]
        if p < 0:
            raise KeyError((enroll, test))
        return self._score_set(p)

    def fa_rates(self, pair_ids, taus) -> np.ndarray:
        """Pair-specific FA rates, shape ``(len(pair_ids), len(taus))``."""
        pair_ids = np.asarray(pair_ids, dtype=np.int64)
        taus = np.atleast_1d(np.asarray(taus, dtype=np.float64))
        lens = self.lengths[pair_ids]
        idx = np.repeat(self.offsets[pair_ids] - np.r_[0, np.cumsum(lens)[:-1]], lens) + np.arange(lens.sum())
        vals = self.values[idx]
        starts = np.r_[0, np.cumsum(lens)[:-1]]
        hits = (vals[None, :] > taus[:, None]).astype(np.int64)
        counts = np.add.reduceat(hits, starts, axis=1) if len(vals) else np.zeros((len(taus), 0))
        return (counts / lens).T

    def score_quantiles(self, q):
        return np.quantile(self.values, q)

    def __repr__(self):
        return (f"PairScoreTable(speakers={self.n_speakers}, pairs={self.n_pairs}, "
                f"scores={self.n_scores}, partition={self.partition!r})")


# ---------------------------------------------------------------- score files

def _parse_score(raw, lineno):
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ScoreFormatError(f"line {lineno}: cannot parse score {raw!r}") from None
    if not math.isfinite(value):
        raise ScoreFormatError(f"line {lineno}: non-finite score {raw!r}")
    return value


def _rows_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"enroll", "test", "score"} - set(reader.fieldnames or ())
        if missing:
            raise ScoreFormatError(f"line 1: header lacks columns {sorted(missing)}")
        for row in reader:
            yield reader.line_num, row


def _rows_jsonl(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ScoreFormatError(f"line {lineno}: {exc.msg}") from None
            if not isinstance(row, dict):
                raise ScoreFormatError(f"line {lineno}: expected a JSON object")
            yield lineno, row


def load_score_table(path, format=None, partition_filter=None) -> PairScoreTable:
    """Read ``enroll,test,score[,partition]`` records (csv or jsonl).

    With ``partition_filter`` only rows whose partition equals it are kept.
    Without it the file must hold a single partition.
    """
    path = Path(path)
    fmt = format or ("jsonl" if path.suffix in (".jsonl", ".json") else "csv")
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown score format {fmt!r}")
    rows = _rows_csv(path) if fmt == "csv" else _rows_jsonl(path)

    enroll, test, scores, parts = [], [], [], set()
    for lineno, row in rows:
        e, t = row.get("enroll"), row.get("test")
        if e is None or t is None or row.get("score") is None:
            raise ScoreFormatError(f"line {lineno}: missing enroll/test/score field")
        e, t = str(e).strip(), str(t).strip()
        if not e or not t:
            raise ScoreFormatError(f"line {lineno}: empty speaker id")
        if e == t:
            raise ScoreFormatError(f"line {lineno}: enroll and test speaker are both {e!r}")
        score = _parse_score(row["score"], lineno)
        part = row.get("partition")
        part = None if part in (None, "") else str(part)
        if partition_filter is not None and part != partition_filter:
            continue
        enroll.append(e)
        test.append(t)
        scores.append(score)
        parts.add(part)

    if not scores:
        raise ScoreFormatError(f"{path}: empty result after filtering")
    if len(parts) > 1:
        raise ScoreFormatError(f"{path}: several partitions {sorted(map(str, parts))}; pass partition_filter")
    return PairScoreTable(enroll, test, scores, partition=next(iter(parts)))


def save_score_table(table: PairScoreTable, path) -> None:
    spk = table.speakers
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["enroll", "test", "score"] + (["partition"] if table.partition else [])
        w.writerow(header)
        for p in range(table.n_pairs):
            e, t = spk[table.pair_enroll[p]], spk[table.pair_test[p]]
            for s in table.values[table.offsets[p]:table.offsets[p + 1]]:
                w.writerow([e, t, repr(float(s))] + ([table.partition] if table.partition else []))


# ---------------------------------------------------------------- model artifacts

def expected_param_count(family: str, structure: Mapping) -> int:
    warp = structure.get("warp")
    n_warp = len(warp["knot_inputs"]) if warp else 0
    if family == "plda":
        return int(structure["D"]) + n_warp
    if family == "gaussian-ls":
        return 5 + n_warp
    if family == "pwl-ls":
        return 5 + len(structure["quantile"]["knot_inputs"]) + n_warp
    raise ArtifactError(f"unknown model family {family!r}")


@dataclass
class ModelArtifact:
    family: str
    params: np.ndarray
    structure: dict
    provenance: dict = field(default_factory=dict)
    version: str = MODEL_FORMAT_VERSION

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        self.validate()

    def validate(self):
        if self.version != MODEL_FORMAT_VERSION:
            raise ArtifactError(f"unrecognized model format version {self.version!r}")
        if self.family not in FAMILIES:
            raise ArtifactError(f"unknown model family {self.family!r}")
        try:
            n = expected_param_count(self.family, self.structure)
        except (KeyError, TypeError) as exc:
            raise ArtifactError(f"incomplete structure metadata: {exc}") from None
        if self.params.ndim != 1 or self.params.size != n:
            raise ArtifactError(f"{self.family} structure implies {n} parameters, vector has {self.params.size}")
        if not np.all(np.isfinite(self.params)):
            raise ArtifactError("parameter vector has non-finite entries")

    def to_json(self) -> dict:
        return {"version": self.version, "family": self.family, "structure": self.structure,
                "params": [float(x) for x in self.params], "provenance": self.provenance}

    @classmethod
    def from_json(cls, d: Mapping) -> "ModelArtifact":
        missing = {"version", "family", "structure", "params"} - set(d)
        if missing:
            raise ArtifactError(f"model file lacks fields {sorted(missing)}")
        if d["version"] != MODEL_FORMAT_VERSION:
            raise ArtifactError(f"unrecognized model format version {d['version']!r}")
        return cls(d["family"], np.array(d["params"], dtype=np.float64), dict(d["structure"]),
                   dict(d.get("provenance", {})), d["version"])


def save_model(artifact: ModelArtifact, path) -> None:
    artifact.validate()
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(artifact.to_json(), indent=1) + "\n")


def load_model(path) -> ModelArtifact:
    return ModelArtifact.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- curves

@dataclass(frozen=True)
class FaRow:
    N: int
    tau: float
    p_fa: float
    ci_lo: float
    ci_hi: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not (0.0 <= self.ci_lo <= self.p_fa <= self.ci_hi <= 1.0):
            raise ValueError(f"need 0 <= ci_lo <= p_fa <= ci_hi <= 1, got {self}")


@dataclass
class FaCurve:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def append(self, N, tau, p_fa, ci_lo, ci_hi):
        self.rows.append(FaRow(int(N), float(tau), float(p_fa), float(ci_lo), float(ci_hi)))

    def taus(self):
        return sorted({r.tau for r in self.rows})

    def select(self, tau):
        return [r for r in self.rows if r.tau == tau]

    def as_array(self):
        return np.array([[r.N, r.tau, r.p_fa, r.ci_lo, r.ci_hi] for r in self.rows]).reshape(-1, 5)


CURVE_HEADER = ("N", "tau", "p_fa", "ci_lo", "ci_hi")


def write_curve(curve: FaCurve, path, format=None) -> None:
    path = Path(path)
    fmt = format or path.suffix.lstrip(".") or "csv"
    if fmt == "csv":
        lines = [",".join(CURVE_HEADER)]
        lines += [f"{r.N},{r.tau!r},{r.p_fa!r},{r.ci_lo!r},{r.ci_hi!r}" for r in curve]
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "json":
        path.write_text(json.dumps([dict(zip(CURVE_HEADER, (r.N, r.tau, r.p_fa, r.ci_lo, r.ci_hi)))
                                    for r in curve], indent=1) + "\n")
    elif fmt == "svg":
        path.write_text(curve_svg(curve))
    else:
        raise ValueError(f"unknown curve format {fmt!r}")


def read_curve_csv(path) -> FaCurve:
    curve = FaCurve()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            curve.append(int(row["N"]), float(row["tau"]), float(row["p_fa"]),
                         float(row["ci_lo"]), float(row["ci_hi"]))
    return curve


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def curve_svg(curve: FaCurve, width=640, height=420) -> str:
    """P_FA versus log10 N; one polyline per threshold over a shaded CI band."""
    ml, mr, mt, mb = 60, 110, 20, 45
    pw, ph = width - ml - mr, height - mt - mb
    rows = list(curve)
    logn = [math.log10(r.N) for r in rows] or [0.0]
    x0, x1 = min(logn), max(logn)
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.5, x1 + 0.5

    def px(n):
        return ml + (math.log10(n) - x0) / (x1 - x0) * pw

    def py(p):
        return mt + (1.0 - p) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="white" stroke="black"/>']
    for p in (0.0, 0.25, 0.5, 0.75, 1.0):
        out.append(f'<text x="{ml - 8}" y="{py(p) + 4:.2f}" font-size="11" text-anchor="end">{p:g}</text>')
    for e in range(math.ceil(x0), math.floor(x1) + 1):
        out.append(f'<text x="{px(10 ** e):.2f}" y="{mt + ph + 16}" font-size="11" '
                   f'text-anchor="middle">1e{e}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 8}" font-size="12" text-anchor="middle">N (impostors)</text>')
    out.append(f'<text x="14" y="{mt + ph / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {mt + ph / 2})">P_FA^N</text>')

    for i, tau in enumerate(curve.taus()):
        color = _PALETTE[i % len(_PALETTE)]
        sel = sorted(curve.select(tau), key=lambda r: r.N)
        upper = [f"{px(r.N):.2f},{py(r.ci_hi):.2f}" for r in sel]
        lower = [f"{px(r.N):.2f},{py(r.ci_lo):.2f}" for r in reversed(sel)]
        out.append(f'<polygon class="ci-band" points="{" ".join(upper + lower)}" '
                   f'fill="{color}" fill-opacity="0.2" stroke="none"/>')
        pts = " ".join(f"{px(r.N):.2f},{py(r.p_fa):.2f}" for r in sel)
        out.append(f'<polyline class="fa-curve" data-tau="{tau!r}" points="{pts}" '
                   f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{ml + pw + 8}" y="{mt + 16 + 16 * i}" font-size="11" fill="{color}">'
                   f'tau={tau:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
