"""Command-line entry point: ``asvattack <command> CONFIG [options]``.

Exit codes: 0 ok, 2 invalid configuration or arguments, 3 missing resource
(model, audio, upstream artifact), 4 runtime failure. On failure a one-line
JSON error summary goes to stderr; on success a JSON summary goes to stdout.

The only environment variable consulted is ``ASVATTACK_OUTPUT_ROOT``, which
overrides ``output_root`` of the config.
"""
from __future__ import annotations

import argparse
import fcntl
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from .campaign.detection import run_detection
from .campaign.manifest import build_manifest
from .campaign.records import ENSEMBLE, PGD
from .campaign.report import write_report_files
from .campaign.runner import MANIFEST, RECORDS, CampaignInterrupted, open_campaign, run_campaign
from .config import CampaignConfig, load_config
from .detector.model import BONAFIDE_DIGITAL, BONAFIDE_OTA
from .errors import ASVAttackError, ConfigError, ResourceMissingError

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_RUNTIME = 0, 2, 3, 4

METHOD_NAMES = {"pgd": PGD, "ensemble": ENSEMBLE}
CONDITIONS = {"digital-bonafide": BONAFIDE_DIGITAL, "ota-bonafide": BONAFIDE_OTA}
LOCK_NAME = ".asvattack.lock"

log = logging.getLogger("asvattack")


class _Fail(Exception):
    def __init__(self, code: int, exc: BaseException):
        super().__init__(str(exc))
        self.code, self.exc = code, exc


@contextmanager
def output_lock(out: Path):
    """Advisory lock: one command per output root at a time."""
    out.mkdir(parents=True, exist_ok=True)
    fh = open(out / LOCK_NAME, "w")
    try:
        fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
    except BlockingIOError:
        fh.close()
        raise _Fail(EXIT_RUNTIME, RuntimeError(f"{out} is locked by another asvattack process"))
    try:
        yield
    finally:
        fcntl.flock(fh, fcntl.LOCK_UN)
        fh.close()


def _csv(s: str | None) -> list[str] | None:
    return None if s is None else [x for x in s.split(",") if x]


def _prefixed(names, prefix):
    return None if names is None else [n if n.startswith(prefix) else prefix + n for n in names]


def _finish(camp, **extra) -> dict:
    camp.records.compact()
    camp.write_failures()
    summary = {"attacks": camp.counters["units"], "units_skipped": camp.counters["units_skipped"],
               "records_written": camp.counters["records_written"], "failures": len(camp.failures), **extra}
    if camp.failures:
        code = EXIT_RESOURCE if any(f.resource for f in camp.failures) else EXIT_RUNTIME
        raise _Fail(code, ASVAttackError(f"{len(camp.failures)} item(s) failed; see failures.json"))
    return summary


def _require_models(camp, ids):
    missing = [m for m in ids if m not in camp.models]
    if missing:
        raise ResourceMissingError(f"models not loaded: {missing}")


def cmd_attack(cfg: CampaignConfig, args) -> dict:
    method = METHOD_NAMES[args.method]
    known = cfg.model_ids
    surr, victims = _csv(args.surrogates), _csv(args.victims)
    for m in (surr or []) + (victims or []):
        if m not in known:
            raise ConfigError(f"unknown model id {m!r}; config defines {known}")
    if surr is not None:
        if method == PGD and len(surr) != 1:
            raise ConfigError("--method pgd takes exactly one surrogate")
        if method == ENSEMBLE and len(set(known) - set(surr)) != 1:
            raise ConfigError("--method ensemble takes all models but one as surrogates")
    camp = open_campaign(cfg)
    victims = victims or camp.model_ids
    sets = None if surr is None else [surr]
    _require_models(camp, victims + (surr or []))
    units = camp.attack_units([method], sets)
    camp.execute(units, camp.run_attack_unit, victims, "attack")
    return _finish(camp, method=method)


def cmd_replay(cfg: CampaignConfig, args) -> dict:
    camp = open_campaign(cfg)
    if not (camp.out / RECORDS).exists():
        raise ResourceMissingError(f"no attack records under {camp.out}; run 'attack' first")
    speakers = _prefixed(args.speaker, "speaker_")
    mics = _prefixed(args.mic, "mic_")
    for s in speakers or []:
        if s not in [p.id for p in camp.speakers]:
            raise ConfigError(f"speaker {s!r} is not in the config's replay grid")
    for m in mics or []:
        if m not in [p.id for p in camp.mics]:
            raise ConfigError(f"mic {m!r} is not in the config's replay grid")
    units = camp.replay_units(speakers, mics, attacked_only=True)
    camp.execute(units, camp.run_replay_unit, camp.model_ids, "replay")
    return _finish(camp, devices=len({u.device for u in units}))


def cmd_detect(cfg: CampaignConfig, args) -> dict:
    camp = open_campaign(cfg)
    if not (camp.out / "audio" / "digital").exists():
        raise ResourceMissingError(f"no adversarial audio under {camp.out}; run 'attack' first")
    conds = [CONDITIONS[args.train_condition]] if args.train_condition else list(CONDITIONS.values())
    doc = run_detection(camp, conds)
    write_report_files(camp.out, camp.model_ids, camp.device_keys)
    return {"rows": {k: round(v["overall"], 2) for k, v in doc["rows"].items()}}


def cmd_report(cfg: CampaignConfig, args) -> dict:
    out = cfg.output_dir
    if not (out / RECORDS).exists():
        raise ResourceMissingError(f"no records to report under {out}")
    devices = [f"{s}+{m}" for s in cfg.channel.speakers for m in cfg.channel.mics]
    paths = write_report_files(out, cfg.model_ids, devices)
    return {k: str(p) for k, p in paths.items()}


def cmd_run(cfg: CampaignConfig, args) -> dict:
    try:
        summary = run_campaign(cfg, stop_after=args.stop_after, detect=not args.no_detect)
    except CampaignInterrupted as exc:
        return {"interrupted": str(exc)}
    if summary["failures"]:
        failures = json.loads((cfg.output_dir / "failures.json").read_text())
        code = EXIT_RESOURCE if any(f["resource"] for f in failures) else EXIT_RUNTIME
        raise _Fail(code, ASVAttackError(f"{summary['failures']} item(s) failed; see failures.json"))
    return summary


def cmd_manifest(cfg: CampaignConfig, args) -> dict:
    """Accounting only, or the full manifest when the subset is available."""
    models = cfg.model_ids
    if args.base_count is not None:
        m = build_manifest(args.base_count, models, cfg.attack.methods, cfg.channel.speakers,
                           cfg.channel.mics, cfg.master_seed, with_entries=False)
        return {"base_count": m.base_count, "expected_total": m.expected_total}
    camp = open_campaign(cfg)
    m = camp.manifest()
    m.write(camp.out / MANIFEST)
    return {"base_count": m.base_count, "expected_total": m.expected_total, "entries": len(m.entries)}


def cmd_toy_init(args) -> dict:
    from .toy import init_workspace
    return {"config": str(init_workspace(args.dest))}


def cmd_toy_build(args) -> dict:
    from .toy import build_toy_data
    dest = build_toy_data(args.dest, train=not args.no_train, log=log.info)
    return {"data": str(dest)}


COMMANDS = {
    "attack": cmd_attack, "replay": cmd_replay, "detect": cmd_detect, "report": cmd_report,
    "run": cmd_run, "manifest": cmd_manifest,
}
NO_CONFIG = {"toy-init": cmd_toy_init, "toy-build": cmd_toy_build}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="asvattack",
        description="Adversarial and over-the-air attack campaigns against speaker verification models.",
        epilog="exit codes: 0 ok, 2 config, 3 missing resource, 4 runtime. "
               "ASVATTACK_OUTPUT_ROOT overrides output_root.")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                   help="logging verbosity on stderr (default: WARNING)")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def with_config(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("config", help="campaign YAML file")
        return sp

    sp = with_config("attack", "craft digital adversarial samples and score them against the victims")
    sp.add_argument("--method", choices=sorted(METHOD_NAMES), required=True,
                    help="single-surrogate PGD or leave-one-out ensemble PGD")
    sp.add_argument("--surrogates", metavar="IDS",
                    help="comma-separated surrogate model ids (pgd: exactly one; ensemble: all but one); "
                         "default: every slot")
    sp.add_argument("--victims", metavar="IDS", help="comma-separated victim model ids (default: all)")

    sp = with_config("replay", "pass digital samples through the simulated speaker/room/mic grid")
    sp.add_argument("--speaker", nargs="+", metavar="TIER",
                    help="loudspeaker tiers or preset ids, e.g. high medium low (default: config grid)")
    sp.add_argument("--mic", nargs="+", metavar="TIER",
                    help="microphone tiers or preset ids, e.g. ios android_high android_low (default: config grid)")

    sp = with_config("detect", "train the one-class countermeasure and evaluate the detection rows")
    sp.add_argument("--train-condition", choices=sorted(CONDITIONS),
                    help="bonafide training data: clean digital or replayed (default: both)")

    with_config("report", "render success matrices and EER tables from stored records")

    sp = with_config("run", "every stage in order (attack, replay, detect, report, manifest)")
    sp.add_argument("--stop-after", type=int, metavar="N", help="stop after N work units (resume test hook)")
    sp.add_argument("--no-detect", action="store_true", help="skip the detection stage")

    sp = with_config("manifest", "write the dataset manifest, or print the accounting for a base count")
    sp.add_argument("--base-count", type=int, metavar="N", help="only compute the expected total for N base samples")

    sp = sub.add_parser("toy-init", help="copy the shipped toy config, trial list and models into DEST",
                        description="copy the shipped toy config, trial list and models into DEST")
    sp.add_argument("dest", help="target directory")

    sp = sub.add_parser("toy-build", help="regenerate the shipped toy trial list and embedders",
                        description="regenerate the shipped toy trial list and embedders")
    sp.add_argument("--dest", help="output directory (default: the package data directory)")
    sp.add_argument("--no-train", action="store_true", help="only rewrite the trial list")
    return p


def _emit_error(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in NO_CONFIG:
            result = NO_CONFIG[args.command](args)
        else:
            cfg = load_config(args.config)
            with output_lock(cfg.output_dir):
                result = COMMANDS[args.command](cfg, args)
    except _Fail as f:
        return _emit_error(f.code, f.exc)
    except ConfigError as exc:
        return _emit_error(EXIT_CONFIG, exc)
    except FileNotFoundError as exc:
        return _emit_error(EXIT_RESOURCE, exc)
    except (ASVAttackError, ValueError, RuntimeError, OSError) as exc:
        log.debug("runtime failure", exc_info=True)
        return _emit_error(EXIT_RUNTIME, exc)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
