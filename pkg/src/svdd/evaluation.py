"""EER computation, per-attack and per-dataset breakdowns, score-level
ensembling, and report emission (CSV, JSON, SVG radar chart).

Conventions: a trial is accepted as bonafide when its score is >= the
threshold, so FAR(t) is the fraction of spoof scores >= t and FRR(t) the
fraction of bonafide scores strictly below t.  The EER is found by
sweeping all distinct scores and linearly interpolating between the two
operating points that straddle the FAR/FRR crossing.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

POOLED_SUBSETS = {
    "A09-A13": ("A09", "A10", "A11", "A12", "A13"),
    "A09-A14": ("A09", "A10", "A11", "A12", "A13", "A14"),
}
RADAR_AXES = ("m4singer", "kising", "A09", "A10", "A11", "A12", "A13", "A14")


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreRecord:
    """One scored trial; higher score means more bonafide."""

    utt_id: str
    score: float
    label: str
    attack: str = "-"
    dataset: str = "other"

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise EvaluationError(f"{self.utt_id}: non-finite score")
        if self.label not in ("bonafide", "spoof"):
            raise EvaluationError(f"{self.utt_id}: bad label {self.label!r}")


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float
    n_bonafide: int
    n_spoof: int


def eer_from_scores(bonafide, spoof) -> EerResult:
    """EER of two score arrays via threshold sweep with interpolation."""
    b = np.sort(np.asarray(bonafide, dtype=np.float64))
    s = np.sort(np.asarray(spoof, dtype=np.float64))
    if len(b) == 0 or len(s) == 0:
        raise EvaluationError("need at least one score of each class")
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(s))):
        raise EvaluationError("scores must be finite")
    ts = np.unique(np.concatenate([b, s]))
    ts = np.concatenate([[ts[0] - 1.0], ts, [ts[-1] + 1.0]])
    far = 1.0 - np.searchsorted(s, ts, side="left") / len(s)
    frr = np.searchsorted(b, ts, side="left") / len(b)
    diff = far - frr
    i = int(np.argmax(diff <= 0.0))  # first operating point with FRR >= FAR
    lam = diff[i - 1] / (diff[i - 1] - diff[i])
    eer = float(far[i - 1] + lam * (far[i] - far[i - 1]))
    threshold = float(ts[i - 1] + lam * (ts[i] - ts[i - 1]))
    if eer > 0.5:
        warnings.warn(
            f"EER {eer:.3f} exceeds 0.5; score polarity is likely inverted "
            "(higher should mean more bonafide)", RuntimeWarning,
            stacklevel=2)
    return EerResult(eer, threshold, len(b), len(s))


def _split(records):
    bona = [r.score for r in records if r.label == "bonafide"]
    spoof = [r.score for r in records if r.label == "spoof"]
    return bona, spoof


def compute_eer(records) -> EerResult:
    bona, spoof = _split(records)
    if not bona or not spoof:
        raise EvaluationError(
            f"need both classes, got {len(bona)} bonafide / "
            f"{len(spoof)} spoof")
    return eer_from_scores(bona, spoof)


def pooled_eer(records, subset) -> EerResult:
    """EER over all bonafide plus the spoof records whose attack is in
    subset.  subset may be a name from POOLED_SUBSETS or an iterable of
    attack tags."""
    if isinstance(subset, str):
        try:
            subset = POOLED_SUBSETS[subset]
        except KeyError:
            raise EvaluationError(
                f"unknown pooled subset {subset!r}; "
                f"choose from {sorted(POOLED_SUBSETS)}") from None
    subset = frozenset(subset)
    kept = [r for r in records
            if r.label == "bonafide" or r.attack in subset]
    spoof_count = sum(1 for r in kept if r.label == "spoof")
    if spoof_count == 0:
        raise EvaluationError(
            f"no spoof records with attack in {sorted(subset)}")
    return compute_eer(kept)


def breakdown(records) -> dict:
    """Per-attack, per-dataset and pooled EER cells.

    Cells whose filter leaves a class empty are reported as None, never
    as zero.
    """
    records = list(records)
    bona = [r for r in records if r.label == "bonafide"]
    out = {"attacks": {}, "datasets": {}, "pooled": {}}
    attacks = sorted({r.attack for r in records if r.label == "spoof"})
    for attack in attacks:
        cell = bona + [r for r in records
                       if r.label == "spoof" and r.attack == attack]
        out["attacks"][attack] = compute_eer(cell) if bona else None
    for dataset in sorted({r.dataset for r in records}):
        cell = [r for r in records if r.dataset == dataset]
        b, s = _split(cell)
        out["datasets"][dataset] = compute_eer(cell) if b and s else None
    for name in POOLED_SUBSETS:
        try:
            out["pooled"][name] = pooled_eer(records, name)
        except EvaluationError:
            out["pooled"][name] = None
    return out


def read_score_file(path) -> dict:
    scores = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise EvaluationError(
                f"{path}:{lineno}: expected 'utt_id<TAB>score'")
        utt_id, raw = fields
        if utt_id in scores:
            raise EvaluationError(f"{path}:{lineno}: duplicate {utt_id}")
        try:
            scores[utt_id] = float(raw)
        except ValueError:
            raise EvaluationError(
                f"{path}:{lineno}: bad score {raw!r}") from None
    if not scores:
        raise EvaluationError(f"{path}: empty score file")
    return scores


def write_score_file(scores: dict, path):
    lines = [f"{utt_id}\t{scores[utt_id]:.6f}" for utt_id in sorted(scores)]
    Path(path).write_text("\n".join(lines) + "\n")


def ensemble(score_maps, weights=None) -> dict:
    """Weighted average of member score maps sharing one utt_id set."""
    score_maps = list(score_maps)
    if not score_maps:
        raise EvaluationError("ensemble needs at least one member")
    if weights is None:
        weights = [1.0] * len(score_maps)
    weights = [float(w) for w in weights]
    if len(weights) != len(score_maps):
        raise EvaluationError(
            f"{len(score_maps)} members but {len(weights)} weights")
    if any(w < 0 for w in weights):
        raise EvaluationError("weights must be >= 0")
    total = sum(weights)
    if total <= 0:
        raise EvaluationError("total ensemble weight must be positive")
    ids = set(score_maps[0])
    for i, member in enumerate(score_maps[1:], 1):
        if set(member) != ids:
            diff = sorted(ids.symmetric_difference(member))
            raise EvaluationError(
                f"member {i} utt_id set differs; e.g. {diff[:5]}")
    return {u: sum(w * m[u] for w, m in zip(weights, score_maps)) / total
            for u in ids}


def _fmt(x):
    return "" if x is None else f"{x.eer:.6f}"


def _rows(breakdowns):
    for name in breakdowns:
        table = breakdowns[name]
        cells = [table["datasets"].get(d) for d in ("m4singer", "kising")]
        cells += [table["attacks"].get(a) for a in
                  ("A09", "A10", "A11", "A12", "A13", "A14")]
        cells += [table["pooled"].get(p) for p in ("A09-A13", "A09-A14")]
        yield name, cells


def emit_report(breakdowns: dict, out_dir) -> dict:
    """Write report.csv, report.json and radar.svg; returns the paths.

    breakdowns maps a system name to the output of breakdown().
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["system", "m4singer", "kising", "A09", "A10", "A11", "A12",
              "A13", "A14", "pooled_A09-A13", "pooled_A09-A14"]
    csv_lines = [",".join(header)]
    for name, cells in _rows(breakdowns):
        csv_lines.append(",".join([name] + [_fmt(c) for c in cells]))
    csv_path = out_dir / "report.csv"
    csv_path.write_text("\n".join(csv_lines) + "\n")

    def as_json(cell):
        if cell is None:
            return None
        return {"eer": cell.eer, "threshold": cell.threshold,
                "n_bonafide": cell.n_bonafide, "n_spoof": cell.n_spoof}

    payload = {
        name: {section: {k: as_json(v) for k, v in table[section].items()}
               for section in ("datasets", "attacks", "pooled")}
        for name, table in breakdowns.items()
    }
    json_path = out_dir / "report.json"
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    svg_path = out_dir / "radar.svg"
    svg_path.write_text(render_radar(breakdowns))
    return {"csv": csv_path, "json": json_path, "svg": svg_path}


RADAR_SIZE = 420
RADAR_RADIUS = 150.0
RADAR_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                "#8c564b", "#17becf", "#7f7f7f")


def _radar_point(axis_index, radius):
    angle = 2.0 * np.pi * axis_index / len(RADAR_AXES) - np.pi / 2.0
    c = RADAR_SIZE / 2.0
    return c + radius * np.cos(angle), c + radius * np.sin(angle)


def render_radar(breakdowns: dict) -> str:
    """Deterministic SVG radar chart; vertex radius = EER * RADAR_RADIUS,
    absent cells drawn at radius 0."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{RADAR_SIZE}" '
        f'height="{RADAR_SIZE}" viewBox="0 0 {RADAR_SIZE} {RADAR_SIZE}">',
        f'<rect width="{RADAR_SIZE}" height="{RADAR_SIZE}" fill="white"/>',
    ]
    for i, axis in enumerate(RADAR_AXES):
        x, y = _radar_point(i, RADAR_RADIUS)
        lx, ly = _radar_point(i, RADAR_RADIUS + 18.0)
        parts.append(
            f'<line x1="{RADAR_SIZE / 2:.4f}" y1="{RADAR_SIZE / 2:.4f}" '
            f'x2="{x:.4f}" y2="{y:.4f}" stroke="#cccccc"/>')
        parts.append(
            f'<text x="{lx:.4f}" y="{ly:.4f}" font-size="11" '
            f'text-anchor="middle">{axis}</text>')
    for color_i, (name, cells) in enumerate(_rows(breakdowns)):
        radii = [0.0 if c is None else c.eer * RADAR_RADIUS
                 for c in cells[:len(RADAR_AXES)]]
        points = " ".join(
            "{:.4f},{:.4f}".format(*_radar_point(i, r))
            for i, r in enumerate(radii))
        color = RADAR_COLORS[color_i % len(RADAR_COLORS)]
        parts.append(
            f'<polygon points="{points}" fill="none" stroke="{color}" '
            f'stroke-width="1.5" data-system="{name}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
