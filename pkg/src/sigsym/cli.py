"""Command-line entry point.

Subcommands cover the whole artifact life cycle: dataset export, training,
evaluation, transcription, synthesis, MIDI rendering, and serving. Every
run logs its seed and a hash of the effective configuration so results can
be reproduced from the log line alone. Exit codes: 0 success, 2 missing or
unreadable files, 3 bad configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys

import numpy as np

from .errors import (ArityError, ConfigurationError, ContractError,
                     FormatError, IntegrityError, LengthError, ParseError,
                     RangeError, SigsymError, UnsupportedVersionError,
                     VocabularyError)
from .symbols import DYNAMICS, PITCH_NAMES, LabelTriplet

log = logging.getLogger("sigsym.cli")

EXIT_OK = 0
EXIT_IO = 2
EXIT_CONFIG = 3

_IO_ERRORS = (FileNotFoundError, IsADirectoryError, PermissionError,
              ParseError, FormatError, IntegrityError, UnsupportedVersionError)
_CONFIG_ERRORS = (ConfigurationError, ContractError, VocabularyError,
                  ArityError, RangeError, LengthError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigsym",
        description="Bidirectional translation between audio and note labels.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", help="JSON config file (dataset/train sections)")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="model checkpoint (.ltx)")

    p = sub.add_parser("dataset", help="render the synthetic corpus to disk")
    common(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--preset", choices=("solo", "duo", "trio"),
                   help="hidden sizes from the published table")
    p.add_argument("--desk", action="store_true", help="halve hidden sizes for quick runs")
    p.add_argument("--epochs", type=int, default=None, help="override epoch count")
    p.add_argument("--out", required=True, help="run directory for checkpoints and history")

    p = sub.add_parser("eval", help="evaluate a checkpoint against its dataset")
    common(p, checkpoint=True)
    p.add_argument("--out", help="directory for report files (defaults next to checkpoint)")

    p = sub.add_parser("transcribe", help="audio file to labels")
    common(p, checkpoint=True)
    p.add_argument("audio", help="input WAV file")
    p.add_argument("--out", help="write the transcription JSON here instead of stdout")

    p = sub.add_parser("synth", help="labels to audio")
    common(p, checkpoint=True)
    p.add_argument("--labels", required=True,
                   help="label set like 'C,4,mf' or 'C,4,mf;E,3,pp' for mixtures")
    p.add_argument("--duration", type=float, default=1.0, help="seconds")
    p.add_argument("--out", required=True, help="output WAV path")

    p = sub.add_parser("render-midi", help="MIDI file to audio through the model")
    common(p, checkpoint=True)
    p.add_argument("midi", help="input Standard MIDI File")
    p.add_argument("--midi-map", default=None,
                   help="channel map like '0=alto_sax,1=violin'")
    p.add_argument("--out", required=True, help="output WAV path")

    p = sub.add_parser("serve", help="HTTP service for a checkpoint")
    common(p, checkpoint=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--no-projection", action="store_true",
                   help="skip rebuilding the dataset for the latent map")
    return parser


# -- configuration ------------------------------------------------------------


def load_config(path):
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigurationError("config root must be an object")
    return cfg


def effective_seed(args, cfg):
    if args.seed is not None:
        return args.seed
    return int(cfg.get("train", {}).get("seed", 0))


def _log_run(seed, payload):
    digest = hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:12]
    log.info("seed %d, config hash %s", seed, digest)


def _dataset_settings(cfg, seed):
    from .datasets import DatasetConfig
    section = dict(cfg.get("dataset", {}))
    instruments = section.pop("instruments", ["alto_sax"])
    profile = section.pop("profile", "desk")
    if "octave_range" in section and section["octave_range"] is not None:
        section["octave_range"] = tuple(section["octave_range"])
    elif profile == "desk":
        section.setdefault("octave_range", (2, 6))
    if "gain_range" in section:
        section["gain_range"] = tuple(section["gain_range"])
    section.setdefault("seed", seed)
    try:
        ds_config = DatasetConfig(**section)
    except TypeError as exc:
        raise ConfigurationError(f"bad dataset config: {exc}")
    return instruments, profile, ds_config


def build_dataset(cfg, seed):
    from .datasets import duo_dataset, solo_dataset
    from .filterbank import design_filterbank, desk_spec, full_spec

    instruments, profile, ds_config = _dataset_settings(cfg, seed)
    if profile not in ("desk", "full"):
        raise ConfigurationError(f"unknown filterbank profile {profile!r}")
    fb = design_filterbank(desk_spec() if profile == "desk" else full_spec())
    if len(instruments) == 1:
        return solo_dataset(instruments[0], fb=fb, config=ds_config)
    if len(instruments) == 2:
        return duo_dataset(instruments[0], instruments[1], fb=fb, config=ds_config)
    raise ConfigurationError("configure one or two instruments")


def parse_labels(text) -> list:
    """'C,4,mf;E,3,pp' -> one LabelTriplet per source."""
    triplets = []
    for chunk in text.split(";"):
        parts = [p.strip() for p in chunk.split(",")]
        if len(parts) != 3:
            raise ConfigurationError(f"label {chunk!r} is not 'pitch,octave,dynamics'")
        pitch, octave, dyn = parts
        if pitch.upper() in PITCH_NAMES:
            pc = PITCH_NAMES.index(pitch.upper())
        else:
            pc = int(pitch)
        dyn_idx = DYNAMICS.index(dyn) if dyn in DYNAMICS else int(dyn)
        triplets.append(LabelTriplet(pc, int(octave), dyn_idx))
    return triplets


def parse_midi_map(text):
    if not text:
        return None
    mapping = {}
    for pair in text.split(","):
        channel, _, name = pair.partition("=")
        if not name:
            raise ConfigurationError(f"midi map entry {pair!r} is not 'channel=instrument'")
        mapping[int(channel)] = name.strip()
    return mapping


# -- subcommand bodies ----------------------------------------------------------


def cmd_dataset(args):
    from .datasets import export_dataset
    cfg = load_config(args.config)
    seed = effective_seed(args, cfg)
    _log_run(seed, {"cfg": cfg, "command": "dataset"})
    dataset = build_dataset(cfg, seed)
    manifest = export_dataset(dataset, args.out)
    print(json.dumps({"out": args.out, "description": manifest["description"]}, indent=2))
    return EXIT_OK


def _train_config(args, cfg, seed):
    from .training import TrainConfig
    section = dict(cfg.get("train", {}))
    section["seed"] = seed
    if args.preset:
        base = TrainConfig.preset(args.preset, desk=args.desk)
        section.setdefault("signal_hidden", base.signal_hidden)
        section.setdefault("symbol_hidden", base.symbol_hidden)
    if args.epochs is not None:
        section["epochs"] = args.epochs
    try:
        return TrainConfig(**section)
    except TypeError as exc:
        raise ConfigurationError(f"bad train config: {exc}")


def cmd_train(args):
    from .training import checkpoint_save, train

    cfg = load_config(args.config)
    seed = effective_seed(args, cfg)
    train_cfg = _train_config(args, cfg, seed)
    _log_run(seed, {"cfg": cfg, "train": train_cfg.config_hash()})
    dataset = build_dataset(cfg, seed)
    model, history = train(dataset, train_cfg, out_dir=args.out)
    instruments, profile, ds_config = _dataset_settings(cfg, seed)
    extra = {"dataset": {"instruments": instruments, "profile": profile,
                         "octave_range": ds_config.octave_range,
                         "note_duration": ds_config.note_duration,
                         "frames_per_note": ds_config.frames_per_note,
                         "seed": ds_config.seed}}
    checkpoint_save(model, f"{args.out}/final.ltx", train_config=train_cfg, extra=extra)
    final = {"final_train_loss": history.train[-1]["total"],
             "final_val_loss": history.val[-1]["total"],
             "epochs": history.n_epochs,
             "checkpoint": f"{args.out}/final.ltx"}
    print(json.dumps(final, indent=2))
    return EXIT_OK


def _rebuild_dataset_for(header, cfg, seed):
    stored = (header.get("extra") or {}).get("dataset")
    if stored:
        merged = {"dataset": {
            "instruments": stored["instruments"],
            "profile": stored.get("profile", "desk"),
            "octave_range": stored.get("octave_range"),
            "note_duration": stored.get("note_duration", 1.0),
            "frames_per_note": stored.get("frames_per_note", 8),
            "seed": stored.get("seed", seed),
        }}
        merged["dataset"].update(cfg.get("dataset", {}))
        return build_dataset(merged, stored.get("seed", seed))
    return build_dataset(cfg, seed)


def cmd_eval(args):
    import os

    from .evaluation import EvalReport, evaluate_model, train_baseline
    from .training import checkpoint_load

    cfg = load_config(args.config)
    seed = effective_seed(args, cfg)
    _log_run(seed, {"cfg": cfg, "checkpoint": args.checkpoint})
    model, header = checkpoint_load(args.checkpoint)
    dataset = _rebuild_dataset_for(header, cfg, seed)
    baseline = train_baseline(dataset, model.latent_dim, model.symbol_vae.hidden,
                              seed=seed)
    name = "+".join(dataset.vocab.instruments)
    report = evaluate_model(model, dataset, baseline=baseline, name=name)
    out_dir = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    os.makedirs(out_dir, exist_ok=True)
    report.write_jsonl(os.path.join(out_dir, "report.jsonl"))
    table = report.format_table()
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    return EXIT_OK


def cmd_transcribe(args):
    from .audio_io import load_audio
    from .inference import transcribe
    from .training import checkpoint_load

    cfg = load_config(args.config)
    seed = effective_seed(args, cfg)
    _log_run(seed, {"checkpoint": args.checkpoint, "audio": args.audio})
    model, _ = checkpoint_load(args.checkpoint)
    audio = load_audio(args.audio, target_rate=model.fb_spec.sample_rate)
    result = transcribe(audio, model)
    payload = json.dumps(result.to_dict(), indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)
    return EXIT_OK


def cmd_synth(args):
    from .audio_io import save_audio
    from .inference import synthesize
    from .training import checkpoint_load

    cfg = load_config(args.config)
    seed = effective_seed(args, cfg)
    _log_run(seed, {"checkpoint": args.checkpoint, "labels": args.labels})
    model, _ = checkpoint_load(args.checkpoint)
    triplets = parse_labels(args.labels)
    audio = synthesize(triplets, args.duration, model)
    save_audio(args.out, audio)
    print(json.dumps({"out": args.out, "samples": len(audio.samples),
                      "sample_rate": audio.sample_rate}))
    return EXIT_OK


def cmd_render_midi(args):
    from .audio_io import save_audio
    from .inference import render_midi
    from .training import checkpoint_load

    cfg = load_config(args.config)
    seed = effective_seed(args, cfg)
    _log_run(seed, {"checkpoint": args.checkpoint, "midi": args.midi})
    model, _ = checkpoint_load(args.checkpoint)
    with open(args.midi, "rb") as fh:
        data = fh.read()
    audio = render_midi(data, model, channel_map=parse_midi_map(args.midi_map))
    save_audio(args.out, audio)
    print(json.dumps({"out": args.out, "samples": len(audio.samples),
                      "duration": audio.duration}))
    return EXIT_OK


def cmd_serve(args):
    from .inference import latent_projection
    from .service import ModelService
    from .training import checkpoint_load

    cfg = load_config(args.config)
    seed = effective_seed(args, cfg)
    _log_run(seed, {"checkpoint": args.checkpoint, "host": args.host, "port": args.port})
    model, header = checkpoint_load(args.checkpoint)
    projection = None
    if not args.no_projection:
        try:
            dataset = _rebuild_dataset_for(header, cfg, seed)
            projection = latent_projection(dataset, model)
        except SigsymError as exc:
            log.warning("no latent projection available: %s", exc)
    service = ModelService(model, host=args.host, port=args.port, projection=projection)
    print(json.dumps({"url": service.url, "has_projection": projection is not None}))
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        service.shutdown()
    return EXIT_OK


_COMMANDS = {
    "dataset": cmd_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "transcribe": cmd_transcribe,
    "synth": cmd_synth,
    "render-midi": cmd_render_midi,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _IO_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_IO
    except _CONFIG_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except SigsymError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
