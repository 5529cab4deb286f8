"""End-to-end campaign driver.

Stages, each resumable on its own:

* ``prepare``  synthesize missing toy audio, load models, subsample trials,
  compute per-victim EER thresholds on the clean subset
* ``attack``   digital adversarial audio for every (method, slot) over the
  impostor trials of the subset, scored against every victim
* ``replay``   every digital sample through every (speaker, mic) pair
* ``detect``   one-class countermeasure rows (see ``detection.py``)
* ``report``   success matrices, text tables, manifest

Work is cut into fixed units of ``chunk_size`` trials so batch composition,
and hence every float, is independent of interruption and worker count.
Workers compute, the calling thread is the only writer.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
import torch

from ..asv.metrics import decision_threshold
from ..asv.model import EmbedderModel, embed_batch, load_model
from ..attack.pgd import AttackConfig
from ..audio import Waveform, read_wav, write_wav
from ..channel import RoomSetup, get_preset, load_presets
from ..channel.presets import DevicePreset
from ..config import CampaignConfig
from ..errors import ASVAttackError, ResourceMissingError
from ..synth import CorpusConfig, make_corpus
from ..trials import IMPOSTOR, TrialPair, read_trial_list
from .manifest import Manifest, build_manifest, derive_seed, digital_path, ota_path, surrogates_for
from .records import DIGITAL, PGD, AttackRecord, record_key, row_label
from .subsample import subsample_trials
from .transfer import craft, replay

log = logging.getLogger(__name__)

RECORDS = "records.jsonl"
THRESHOLDS = "thresholds.json"
MANIFEST = "manifest.json"
FAILURES = "failures.json"
SUBSET = "trials_subset.txt"


class CampaignInterrupted(RuntimeError):
    """Raised by the ``stop_after`` hook; everything written so far is valid."""


@dataclass
class Failure:
    stage: str
    item: str
    error: str
    resource: bool = False      # a missing file rather than a runtime fault

    def to_dict(self) -> dict:
        return {"stage": self.stage, "item": self.item, "error": self.error, "resource": self.resource}


@dataclass
class AudioStore:
    """Utterance id -> Waveform from a directory, with a small in-memory cache."""

    root: Path
    cache: dict = field(default_factory=dict)

    def __call__(self, utt: str) -> Waveform:
        if utt not in self.cache:
            self.cache[utt] = read_wav(self.root / utt, id=utt)
        return self.cache[utt]


class RecordStore:
    """Append-only JSONL of AttackRecords keyed by resume key."""

    def __init__(self, path: Path):
        self.path = path
        self.records: dict[str, AttackRecord] = {}
        if path.exists():
            for line in path.read_text().splitlines():
                if not line.strip():
                    continue
                try:
                    r = AttackRecord.from_json(line)
                except (ValueError, TypeError):
                    # a torn last line from a killed run; the unit is redone
                    log.warning("skipping unreadable record line in %s", path)
                    continue
                self.records[r.key] = r

    def __contains__(self, key: str) -> bool:
        return key in self.records

    def add(self, recs: Iterable[AttackRecord]) -> int:
        new = [r for r in recs if r.key not in self.records]
        if not new:
            return 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a") as fh:
            for r in new:
                fh.write(r.to_json() + "\n")
                self.records[r.key] = r
        return len(new)

    def compact(self) -> None:
        """Rewrite in canonical order so finished runs are byte-identical."""
        recs = sorted(self.records.values(),
                      key=lambda r: (r.method, r.surrogates, r.victim, r.device, r.trial))
        self.path.write_text("".join(r.to_json() + "\n" for r in recs))

    def values(self) -> list[AttackRecord]:
        return list(self.records.values())


@dataclass
class AttackUnit:
    method: str
    slot: str                   # model the sample is made for
    surrogates: tuple[str, ...]
    index: list[int]            # positions in the attacked trial list
    device: tuple[DevicePreset, DevicePreset] | None = None

    @property
    def label(self) -> str:
        dev = "digital" if self.device is None else f"{self.device[0].id}+{self.device[1].id}"
        return f"{self.method}/{self.slot}/{dev}/{self.index[0]}-{self.index[-1]}"


class Campaign:
    """Loaded state shared by the stages; build with :meth:`open`."""

    def __init__(self, cfg: CampaignConfig):
        self.cfg = cfg
        self.out = cfg.output_dir
        self.failures: list[Failure] = []
        self.models: dict[str, EmbedderModel] = {}
        self.trials: list[TrialPair] = []
        self.attacked: list[TrialPair] = []
        self.thresholds: dict[str, float] = {}
        self.audio = AudioStore(cfg.audio_dir)
        self.records = RecordStore(self.out / RECORDS)
        self.attack_cfg = AttackConfig(alpha=cfg.attack.alpha, steps=cfg.attack.steps,
                                       epsilon=cfg.attack.epsilon, loss=cfg.attack.loss,
                                       max_ensemble_rounds=cfg.attack.max_ensemble_rounds)
        self.speakers, self.mics = self._presets()
        self.room = self._room()
        self._enroll_emb: dict[str, dict[str, np.ndarray]] = {}
        self.counters = {"units": 0, "units_skipped": 0, "records_written": 0}

    # -- setup ---------------------------------------------------------------

    def fail(self, stage: str, item: str, exc: BaseException | str) -> None:
        msg = exc if isinstance(exc, str) else f"{type(exc).__name__}: {exc}"
        log.error("[%s] %s: %s", stage, item, msg)
        self.failures.append(Failure(stage, item, msg, isinstance(exc, FileNotFoundError)))

    def _presets(self):
        cfg = self.cfg.channel
        extra = load_presets(self.cfg.resolve(cfg.presets_file)) if cfg.presets_file else {"speakers": [], "mics": []}
        by_id = {p.id: p for p in extra["speakers"] + extra["mics"]}

        def look(pid):
            return by_id[pid] if pid in by_id else get_preset(pid)

        return [look(s) for s in cfg.speakers], [look(m) for m in cfg.mics]

    def _room(self) -> RoomSetup:
        r = self.cfg.channel.room
        if r.ir_wav:
            return RoomSetup.from_wav(self.cfg.resolve(r.ir_wav), r.distance_m, r.angle_deg)
        return RoomSetup.simulated(r.distance_m, r.angle_deg, tuple(r.dims), r.absorption,
                                   seed=derive_seed(self.cfg.master_seed, "room"))

    @property
    def model_ids(self) -> list[str]:
        return list(self.models)

    @property
    def devices(self) -> list[tuple[DevicePreset, DevicePreset]]:
        return [(s, m) for s in self.speakers for m in self.mics]

    @property
    def device_keys(self) -> list[str]:
        return [f"{s.id}+{m.id}" for s, m in self.devices]

    def prepare(self) -> "Campaign":
        cfg = self.cfg
        self.out.mkdir(parents=True, exist_ok=True)
        self._synthesize_audio()
        dtype = torch.float32 if cfg.precision == "float32" else torch.float64
        for spec in cfg.models:
            try:
                m = load_model(cfg.resolve(spec.path))
            except (ASVAttackError, OSError) as exc:
                self.fail("prepare", f"model {spec.id}", exc)
                continue
            # the config id names the model everywhere downstream
            self.models[spec.id] = EmbedderModel(m.net, spec.id, m.sample_rate, m.metadata,
                                                 m.min_length, m.differentiable, dtype)
        trial_path = cfg.resolve(cfg.data.trial_list)
        if not trial_path.exists():
            raise ResourceMissingError(f"trial list not found: {trial_path}")
        subset = subsample_trials(read_trial_list(trial_path), cfg.data.fraction,
                                  derive_seed(cfg.master_seed, "subsample"))
        self.trials = [t for t in subset if self._resolvable(t)]
        self.attacked = [t for t in self.trials if t.label == IMPOSTOR]
        (self.out / SUBSET).write_text("".join(t.to_line() + "\n" for t in self.trials))
        for mid, m in self.models.items():
            self.thresholds[mid] = decision_threshold(m, self.trials, self.audio)
        (self.out / THRESHOLDS).write_text(json.dumps(self.thresholds, sort_keys=True, indent=1) + "\n")
        return self

    def _synthesize_audio(self) -> None:
        syn = self.cfg.data.synthetic
        if syn is None:
            return
        corpus_cfg = CorpusConfig(n_speakers=syn.n_speakers, utterances_per_speaker=syn.utterances_per_speaker,
                                  duration=syn.duration, seed=syn.seed, prefix=syn.prefix)
        expected = [self.audio.root / f"{spk}/{u:05d}.wav"
                    for spk in (f"{syn.prefix}{i + syn.offset:03d}" for i in range(syn.n_speakers))
                    for u in range(syn.utterances_per_speaker)]
        if all(p.exists() for p in expected):
            return
        log.info("synthesizing toy corpus into %s", self.audio.root)
        for w, _ in make_corpus(corpus_cfg, offset=syn.offset):
            p = self.audio.root / w.id
            if not p.exists():
                write_wav(p, w)

    def _resolvable(self, t: TrialPair) -> bool:
        try:
            self.audio(t.enroll)
            self.audio(t.test)
            return True
        except ASVAttackError as exc:
            self.fail("prepare", f"trial {t.key}", exc)
            return False

    def enroll_embedding(self, victim: str, utt: str) -> np.ndarray:
        cache = self._enroll_emb.setdefault(victim, {})
        if utt not in cache:
            cache[utt] = embed_batch(self.models[victim], [self.audio(utt)])[0]
        return cache[utt]

    def trial_seed(self, t: TrialPair) -> int:
        return derive_seed(self.cfg.master_seed, t.key)

    def manifest(self, with_entries: bool = True) -> Manifest:
        return build_manifest(self.attacked, self.model_ids, self.cfg.attack.methods,
                              [s.id for s in self.speakers], [m.id for m in self.mics],
                              self.cfg.master_seed, self.model_ids, with_entries)

    # -- unit planning ---------------------------------------------------------

    def chunks(self) -> list[list[int]]:
        n, k = len(self.attacked), self.cfg.attack.chunk_size
        return [list(range(i, min(i + k, n))) for i in range(0, n, k)]

    def attack_units(self, methods: Sequence[str] | None = None,
                     surrogate_sets: Sequence[Sequence[str]] | None = None) -> list[AttackUnit]:
        ids = self.model_ids
        units = []
        for method in methods or self.cfg.attack.methods:
            if surrogate_sets is None:
                slots = [(mid, tuple(surrogates_for(method, mid, ids))) for mid in ids]
            else:
                slots = [(_slot_for(method, s, ids), tuple(s)) for s in surrogate_sets]
            for slot, surr in slots:
                if not surr:
                    continue
                for idx in self.chunks():
                    units.append(AttackUnit(method, slot, surr, idx))
        return units

    def replay_units(self, speakers: Sequence[str] | None = None,
                     mics: Sequence[str] | None = None, attacked_only: bool = False) -> list[AttackUnit]:
        """Attack units crossed with the device grid.

        With ``attacked_only`` the slots that have no complete digital records
        yet are left out, so a partial ``attack`` can be replayed on its own.
        """
        devs = [(s, m) for s, m in self.devices
                if (speakers is None or s.id in speakers) and (mics is None or m.id in mics)]
        units = []
        for u in self.attack_units():
            if attacked_only and not all(k in self.records for k in self.unit_keys(u, self.model_ids)):
                continue
            for dev in devs:
                units.append(AttackUnit(u.method, u.slot, u.surrogates, u.index, dev))
        return units

    def unit_keys(self, u: AttackUnit, victims: Sequence[str]) -> list[str]:
        keys = []
        for i in u.index:
            t = self.attacked[i]
            dev, seed = self._device_seed(u, t)
            for v in victims:
                keys.append(record_key(t.key, u.method, u.surrogates, v, dev, seed))
        return keys

    def _device_seed(self, u: AttackUnit, t: TrialPair) -> tuple[str, int]:
        tseed = self.trial_seed(t)
        if u.device is None:
            return DIGITAL, tseed
        dev = f"{u.device[0].id}+{u.device[1].id}"
        return dev, derive_seed(tseed, dev)

    # -- unit execution --------------------------------------------------------

    def run_attack_unit(self, u: AttackUnit, victims: Sequence[str]) -> list[AttackRecord]:
        trials = [self.attacked[i] for i in u.index]
        xs = [self.audio(t.test) for t in trials]
        enrolls = [self.audio(t.enroll) for t in trials]
        adv = craft(u.method, [self.models[m] for m in u.surrogates], xs, enrolls,
                    self.attack_cfg, self.thresholds)
        paths = [digital_path(u.method, u.slot, i) for i in u.index]
        for p, w in zip(paths, adv):
            write_wav(self.out / p, w)
        return self._score(u, trials, adv, paths, victims)

    def run_replay_unit(self, u: AttackUnit, victims: Sequence[str]) -> list[AttackRecord]:
        trials = [self.attacked[i] for i in u.index]
        spk, mic = u.device
        dev = f"{spk.id}+{mic.id}"
        waves, paths = [], []
        for i, t in zip(u.index, trials):
            src = self.out / digital_path(u.method, u.slot, i)
            if not src.exists():
                raise ResourceMissingError(f"digital sample missing for replay: {src}")
            waves.append(self.ota_wave(read_wav(src), derive_seed(self.trial_seed(t), dev), spk, mic))
            paths.append(ota_path(u.method, u.slot, dev, i))
        if self.cfg.persist_audio == "all":
            for p, w in zip(paths, waves):
                write_wav(self.out / p, w)
        return self._score(u, trials, waves, paths, victims)

    def ota_wave(self, x: Waveform, seed: int, spk: DevicePreset, mic: DevicePreset) -> Waveform:
        return replay(x, spk, self.room, mic, seed)

    def _score(self, u: AttackUnit, trials, waves, paths, victims) -> list[AttackRecord]:
        row = row_label(u.method, u.surrogates, self.model_ids)
        recs = []
        for v in victims:
            emb = embed_batch(self.models[v], waves)
            thr = self.thresholds[v]
            for t, e, p in zip(trials, emb, paths):
                target = self.enroll_embedding(v, t.enroll)
                post = float(np.clip(e @ target, -1.0, 1.0))
                pre = self._clean_score(v, t)
                dev, seed = self._device_seed(u, t)
                recs.append(AttackRecord(t.key, u.method, u.surrogates, v, dev, pre, post, thr,
                                         post >= thr, seed, p, row))
        return recs

    def _clean_score(self, v: str, t: TrialPair) -> float:
        a = self.enroll_embedding(v, t.enroll)
        b = self.enroll_embedding(v, t.test)
        return float(np.clip(a @ b, -1.0, 1.0))

    # -- driving -------------------------------------------------------------

    def execute(self, units: Sequence[AttackUnit], fn: Callable, victims: Sequence[str],
                stage: str, stop_after: int | None = None) -> None:
        todo = []
        for u in units:
            keys = self.unit_keys(u, victims)
            if all(k in self.records for k in keys):
                self.counters["units_skipped"] += 1
            else:
                todo.append(u)

        def work(u):
            try:
                return u, fn(u, victims), None
            except (ASVAttackError, OSError) as exc:
                return u, None, exc

        for u, recs, exc in _ordered_map(work, todo, self.cfg.workers):
            if stop_after is not None and self.counters["units"] >= stop_after:
                raise CampaignInterrupted(f"stopped after {stop_after} units")
            self.counters["units"] += 1
            if exc is not None:
                self.fail(stage, u.label, exc)
                continue
            self.counters["records_written"] += self.records.add(recs)

    def write_failures(self) -> Path:
        path = self.out / FAILURES
        path.write_text(json.dumps([f.to_dict() for f in self.failures], indent=1) + "\n")
        return path


def _slot_for(method: str, surrogates: Sequence[str], all_models: Sequence[str]) -> str:
    if method == PGD:
        if len(surrogates) != 1:
            raise ValueError("PGD takes exactly one surrogate")
        return surrogates[0]
    left = [m for m in all_models if m not in surrogates]
    if len(left) != 1:
        raise ValueError("ensemble surrogates must be all models but one (leave-one-out)")
    return left[0]


def _ordered_map(fn, items, workers: int) -> Iterator:
    """``map`` in input order; a bounded thread pool when ``workers > 1``."""
    if workers <= 1:
        for it in items:
            yield fn(it)
        return
    with ThreadPoolExecutor(workers) as pool:
        # a window of 2 * workers in flight keeps memory bounded
        window = 2 * workers
        futures = [pool.submit(fn, it) for it in items[:window]]
        nxt = window
        while futures:
            f = futures.pop(0)
            if nxt < len(items):
                futures.append(pool.submit(fn, items[nxt]))
                nxt += 1
            yield f.result()


def open_campaign(cfg: CampaignConfig) -> Campaign:
    return Campaign(cfg).prepare()


def run_campaign(cfg: CampaignConfig, stop_after: int | None = None, detect: bool = True) -> dict:
    """Every stage in order; returns a summary dict (also written to disk).

    ``stop_after`` interrupts after that many executed units, for testing
    resume behaviour.
    """
    from .detection import run_detection
    from .report import write_reports

    camp = open_campaign(cfg)
    try:
        camp.execute(camp.attack_units(), camp.run_attack_unit, camp.model_ids, "attack", stop_after)
        camp.execute(camp.replay_units(), camp.run_replay_unit, camp.model_ids, "replay", stop_after)
    finally:
        camp.write_failures()
    camp.records.compact()
    camp.manifest().write(camp.out / MANIFEST)
    detection = None
    if detect:
        try:
            detection = run_detection(camp)
        except ASVAttackError as exc:
            camp.fail("detect", "detection", exc)
    write_reports(camp, detection)
    camp.write_failures()
    summary = {"attacks": camp.counters["units"], "units_skipped": camp.counters["units_skipped"],
               "records_written": camp.counters["records_written"], "records": len(camp.records.records),
               "failures": len(camp.failures), "output": str(camp.out)}
    (camp.out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return summary
