"""Clip manifests: JSON-lines records tying clip ids to audio files,
provenance, and (once labeled) consensus labels.

One JSON object per line, keys sorted, records ordered by clip_id, so
identical inputs always serialize to identical bytes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from .audio import AudioChannel, read_wav_data
from .errors import AudioError, ChannelLayoutError, SampleRateError, TalkoverError
from .overlap import CandidateClip


class ManifestError(TalkoverError):
    """Malformed or inconsistent manifest content."""


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    meeting_id: str
    interrupter_id: str
    onset_s: float
    wav_path: str
    label: str | None = None
    agreement: float | None = None

    def to_dict(self) -> dict:
        d = {"clip_id": self.clip_id, "meeting_id": self.meeting_id,
             "interrupter_id": self.interrupter_id, "onset_s": self.onset_s,
             "wav_path": self.wav_path}
        if self.label is not None:
            d["label"] = self.label
        if self.agreement is not None:
            d["agreement"] = self.agreement
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClipRecord":
        try:
            return cls(clip_id=d["clip_id"], meeting_id=d["meeting_id"],
                       interrupter_id=d["interrupter_id"], onset_s=float(d["onset_s"]),
                       wav_path=d["wav_path"], label=d.get("label"),
                       agreement=d.get("agreement"))
        except KeyError as exc:
            raise ManifestError("clip record missing field %s" % exc) from None


def write_manifest(path, records) -> None:
    records = sorted(records, key=lambda r: r.clip_id)
    ids = [r.clip_id for r in records]
    if len(set(ids)) != len(ids):
        raise ManifestError("duplicate clip ids in manifest")
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_manifest(path):
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(ClipRecord.from_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ManifestError("%s:%d: %s" % (path, lineno, exc)) from None
    return records


def write_split(path, split: dict) -> None:
    """split maps split names (train/val/test) to clip id lists."""
    canon = {name: sorted(ids) for name, ids in split.items()}
    with open(path, "w") as fh:
        json.dump(canon, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_split(path) -> dict:
    with open(path) as fh:
        split = json.load(fh)
    if not isinstance(split, dict) or not all(
            isinstance(v, list) for v in split.values()):
        raise ManifestError("%s: split file must map names to clip id lists" % path)
    return split


def load_clip(record: ClipRecord, wav_path=None) -> CandidateClip:
    """Read a clip's stereo WAV back into a CandidateClip. Channel 0 is
    the mixdown of the other speakers, channel 1 the interrupter."""
    path = wav_path if wav_path is not None else record.wav_path
    rate, frames = read_wav_data(path)
    if frames.shape[1] != 2:
        raise ChannelLayoutError("%s: clip WAVs are stereo, got %d channels"
                                 % (path, frames.shape[1]))
    if rate != 16000:
        raise SampleRateError("%s: expected 16 kHz, got %d" % (path, rate))
    left = AudioChannel(frames[:, 0], rate, "mix")
    right = AudioChannel(frames[:, 1], rate, record.interrupter_id)
    try:
        return CandidateClip(record.clip_id, record.meeting_id,
                             record.interrupter_id, record.onset_s, left, right)
    except AudioError as exc:
        raise AudioError("%s: %s" % (path, exc)) from None
