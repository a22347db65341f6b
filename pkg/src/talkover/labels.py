"""Crowd-label aggregation: modal-vote consensus with an agreement
threshold, precedence resolution for multi-category clips, Fleiss'
kappa agreement, and golden-clip annotator accuracy.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DuplicateVoteError, LabelError, UndefinedKappaError
from .model import CLASSES

VOTE_LABELS = CLASSES + ("other",)

# Highest precedence first; interruption itself is decided upstream by
# the overtake rule, not by voting precedence.
PRECEDENCE = ("failed_interruption", "backchannel", "laughter", "other")

CONSENSUS_THRESHOLD = 0.7


@dataclass(frozen=True)
class VoteRecord:
    clip_id: str
    annotator_id: str
    label: str

    def __post_init__(self):
        if self.label not in VOTE_LABELS:
            raise LabelError("unknown vote label %r" % self.label)


@dataclass(frozen=True)
class ConsensusResult:
    """label is None when the clip failed to reach consensus; the
    agreement fraction of the (largest) modal label is kept either way
    for audit."""

    clip_id: str
    label: str | None
    agreement_fraction: float
    vote_count: int

    @property
    def accepted(self) -> bool:
        return self.label is not None


def aggregate(votes, threshold: float = CONSENSUS_THRESHOLD) -> ConsensusResult:
    """Modal vote wins iff its fraction of the actual vote count reaches
    the threshold. A tied mode is rejected outright; with the default
    0.7 threshold ties can never reach it anyway, and rejecting keeps
    the result independent of vote order at any threshold.
    """
    votes = list(votes)
    if not votes:
        raise LabelError("no votes to aggregate")
    clip_ids = {v.clip_id for v in votes}
    if len(clip_ids) != 1:
        raise LabelError("aggregate takes votes for a single clip, got %s" % sorted(clip_ids))
    annotators = [v.annotator_id for v in votes]
    dupes = [a for a, c in Counter(annotators).items() if c > 1]
    if dupes:
        raise DuplicateVoteError(
            "annotator(s) %s voted more than once on %s" % (sorted(dupes), votes[0].clip_id))

    counts = Counter(v.label for v in votes)
    modal_count = max(counts.values())
    fraction = modal_count / len(votes)
    modes = sorted(label for label, c in counts.items() if c == modal_count)
    label = None
    if fraction >= threshold and len(modes) == 1:
        label = modes[0]
    return ConsensusResult(votes[0].clip_id, label, fraction, len(votes))


def aggregate_all(votes, threshold: float = CONSENSUS_THRESHOLD):
    """Group a flat vote list by clip and aggregate each; results sorted
    by clip_id."""
    by_clip = {}
    for v in votes:
        by_clip.setdefault(v.clip_id, []).append(v)
    return [aggregate(by_clip[cid], threshold) for cid in sorted(by_clip)]


def precedence_resolve(categories) -> str:
    """Collapse the categories present in one clip to the single
    highest-precedence label."""
    cats = set(categories)
    if not cats:
        raise LabelError("no categories to resolve")
    unknown = cats - set(PRECEDENCE)
    if unknown:
        raise LabelError(
            "categories %s are outside the precedence order" % sorted(unknown))
    for label in PRECEDENCE:
        if label in cats:
            return label
    raise AssertionError("unreachable")


def fleiss_kappa(table) -> float:
    """Standard Fleiss' kappa from a clips-by-categories count table.

    Every clip must carry the same number of ratings (at least 2), and
    at least 2 clips are required. When every rating in the table lands
    in one category the chance agreement is exactly 1 and kappa is
    undefined; that raises UndefinedKappaError rather than returning a
    sentinel.
    """
    table = np.asarray(table, dtype=np.int64)
    if table.ndim != 2 or table.shape[0] < 2:
        raise LabelError("need a 2-D table with at least 2 clips")
    if np.any(table < 0):
        raise LabelError("negative rating counts")
    row_sums = table.sum(axis=1)
    n = int(row_sums[0])
    if n < 2:
        raise LabelError("kappa needs at least 2 ratings per clip")
    if np.any(row_sums != n):
        raise LabelError("unequal ratings per clip: %s" % sorted(set(row_sums.tolist())))

    col_totals = table.sum(axis=0)
    if np.count_nonzero(col_totals) == 1:
        raise UndefinedKappaError(
            "all %d ratings fall in one category; chance agreement is 1" % col_totals.sum())

    N = table.shape[0]
    p_i = (np.sum(table.astype(np.float64) ** 2, axis=1) - n) / (n * (n - 1))
    p_bar = float(np.mean(p_i))
    p_j = col_totals / float(N * n)
    p_e = float(np.sum(p_j ** 2))
    return (p_bar - p_e) / (1.0 - p_e)


def votes_to_table(votes, categories=VOTE_LABELS):
    """Count table for kappa from a flat vote list; clips ordered by id,
    columns in the given category order. Duplicate votes are rejected."""
    by_clip = {}
    for v in votes:
        by_clip.setdefault(v.clip_id, []).append(v)
    clip_ids = sorted(by_clip)
    col = {c: i for i, c in enumerate(categories)}
    table = np.zeros((len(clip_ids), len(categories)), dtype=np.int64)
    for i, cid in enumerate(clip_ids):
        seen = set()
        for v in by_clip[cid]:
            if v.annotator_id in seen:
                raise DuplicateVoteError("annotator %s voted twice on %s" % (v.annotator_id, cid))
            seen.add(v.annotator_id)
            table[i, col[v.label]] += 1
    return table, clip_ids


def annotator_accuracy(votes, golden_labels: dict) -> dict:
    """Per-annotator accuracy against known labels of golden clips.

    Only votes on clips present in golden_labels count; annotators who
    never saw a golden clip are omitted.
    """
    stats = {}
    for v in votes:
        truth = golden_labels.get(v.clip_id)
        if truth is None:
            continue
        entry = stats.setdefault(v.annotator_id, {"correct": 0, "total": 0})
        entry["total"] += 1
        entry["correct"] += int(v.label == truth)
    return {
        a: {"correct": e["correct"], "total": e["total"],
            "accuracy": e["correct"] / e["total"]}
        for a, e in sorted(stats.items())
    }


def read_votes_csv(path):
    """Votes CSV is clip_id,annotator_id,label with a header row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["clip_id", "annotator_id", "label"]:
            raise LabelError("%s: expected header clip_id,annotator_id,label" % path)
        votes = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise LabelError("%s:%d: expected 3 columns" % (path, lineno))
            votes.append(VoteRecord(*row))
    return votes


def write_votes_csv(path, votes) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "annotator_id", "label"])
        for v in votes:
            writer.writerow([v.clip_id, v.annotator_id, v.label])
