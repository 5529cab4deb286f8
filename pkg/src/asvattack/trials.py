"""Verification trials and the VoxCeleb-style trial-list text format.

A trial list has one trial per line, ``<label> <enroll path> <test path>``,
with label 1 for genuine (same speaker) and 0 for impostor. The speaker id is
the first path component, as in ``id10270/x6uYqmx31kE/00001.wav``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

GENUINE = "genuine"
IMPOSTOR = "impostor"


@dataclass(frozen=True)
class TrialPair:
    label: str
    enroll: str
    test: str
    enroll_speaker: str | None = None
    test_speaker: str | None = None

    def __post_init__(self):
        if self.label not in (GENUINE, IMPOSTOR):
            raise ValueError(f"label must be {GENUINE!r} or {IMPOSTOR!r}, got {self.label!r}")
        if self.enroll_speaker is not None and self.test_speaker is not None:
            same = self.enroll_speaker == self.test_speaker
            if same != (self.label == GENUINE):
                raise ValueError(
                    f"label {self.label!r} inconsistent with speakers {self.enroll_speaker}/{self.test_speaker}")

    @property
    def key(self) -> str:
        return f"{self.enroll}|{self.test}"

    def to_line(self) -> str:
        return f"{1 if self.label == GENUINE else 0} {self.enroll} {self.test}"


def speaker_of(path: str) -> str | None:
    parts = path.replace("\\", "/").split("/")
    return parts[0] if len(parts) > 1 else None


def parse_trial_line(line: str) -> TrialPair:
    fields = line.split()
    if len(fields) != 3 or fields[0] not in ("0", "1"):
        raise ValueError(f"malformed trial line: {line!r}")
    label = GENUINE if fields[0] == "1" else IMPOSTOR
    return TrialPair(label, fields[1], fields[2], speaker_of(fields[1]), speaker_of(fields[2]))


def read_trial_list(path: str | Path) -> list[TrialPair]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            out.append(parse_trial_line(line))
        except ValueError as exc:
            raise ValueError(f"{path}:{n}: {exc}") from None
    return out


def write_trial_list(path: str | Path, trials: Iterable[TrialPair]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(t.to_line() + "\n" for t in trials))
    return path
