"""Batch command-line surface for scripted experiments.

Every command writes a manifest JSON capturing the resolved arguments,
SHA-256 digests of its inputs, and the produced outputs, so any run can
be audited and replayed (`scekit rerun <manifest>`).

Exit codes: 0 success, 1 validation/configuration, 2 I/O.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audio import AudioBuffer, StftConfig, read_wav, write_wav
from .enhance import SceParams
from .errors import AudioIoError, SceError, ValidationError
from .gafit import (
    GaConfig,
    ObjectiveFitness,
    ParameterGrid,
    lsd_fitness,
    run_ga,
)
from .mixing import (
    THIRD_OCTAVE_CENTERS_HZ,
    MixSpec,
    ltas_match_error_db,
    make_ssn,
    mix_at_smr,
)
from .pipeline import (
    enhance_ungated,
    enhance_with_esnr,
    enhance_with_isnr,
    resynthesize,
)
from .protocols import (
    SimListener,
    StaircaseConfig,
    run_simulated_staircase,
    srt_estimate,
)
from .snr import (
    EsnrConfig,
    GateConfig,
    compare_tracks,
    esnr_track,
    isnr_track,
    speech_active_frames,
)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the validation exit code."""

    def error(self, message):
        raise ValidationError(message)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path: Path, command: str, argv: list[str], inputs, outputs, extra=None):
    doc = {
        "command": command,
        "version": __version__,
        "argv": list(argv),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        doc["extra"] = extra
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(doc, indent=2))
    return out_path


def _manifest_path(args, out: Path) -> Path:
    return Path(args.manifest) if args.manifest else out.with_suffix(out.suffix + ".manifest.json")


def _load_params(path) -> SceParams:
    try:
        return SceParams.from_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise AudioIoError(f"cannot read parameter file {path}: {exc}") from exc
    except KeyError as exc:
        raise ValidationError(f"parameter file {path} is missing field {exc}") from exc


def cmd_enhance(args, argv) -> int:
    params = _load_params(args.params)
    gate = GateConfig(args.gate_threshold)
    out = Path(args.output)
    inputs = [args.params]

    if args.mixture and (args.clean or args.masker):
        raise ValidationError("give either --mixture or --clean/--masker, not both")
    if args.mixture:
        inputs.append(args.mixture)
        mixture = read_wav(args.mixture)
        if args.ungated:
            result, mode = enhance_ungated(mixture, params), "sce"
        else:
            result, mode = enhance_with_esnr(mixture, params, gate), "sce-esnr"
    elif args.clean and args.masker:
        inputs += [args.clean, args.masker]
        clean = read_wav(args.clean)
        masker = read_wav(args.masker, expect_rate=clean.sample_rate_hz)
        if args.smr is not None:
            mixed = mix_at_smr(clean, masker, MixSpec(args.smr, args.lead_ms))
            clean, masker = mixed.target, mixed.masker
        if args.ungated:
            mixture = AudioBuffer(clean.samples + masker.samples, clean.sample_rate_hz)
            result, mode = enhance_ungated(mixture, params), "sce"
        else:
            result, mode = enhance_with_isnr(clean, masker, params, gate), "sce-isnr"
    else:
        raise ValidationError("need --mixture, or both --clean and --masker")

    write_wav(out, result.audio)
    outputs = [out]
    if result.snr is not None:
        snr_csv = out.with_suffix(".snr.csv")
        result.snr.to_csv(snr_csv, result.audio.sample_rate_hz)
        outputs.append(snr_csv)
    metrics = dict(result.stats, mode=mode, gate_threshold_db=args.gate_threshold)
    metrics_path = out.with_suffix(".metrics.json")
    metrics_path.write_text(json.dumps(metrics, indent=2))
    outputs.append(metrics_path)
    write_manifest(_manifest_path(args, out), "enhance", argv, inputs, outputs, extra=metrics)
    print(f"wrote {out} ({mode}, gated fraction {metrics['gated_fraction']:.3f})")
    return 0


def cmd_mix(args, argv) -> int:
    target = read_wav(args.target)
    masker = read_wav(args.masker, expect_rate=target.sample_rate_hz)
    result = mix_at_smr(target, masker, MixSpec(args.smr, args.lead_ms))
    out = Path(args.output)
    write_wav(out, result.mixture)
    outputs = [out]
    if args.write_stems:
        t_path = out.with_suffix(".target.wav")
        m_path = out.with_suffix(".masker.wav")
        write_wav(t_path, result.target)
        write_wav(m_path, result.masker)
        outputs += [t_path, m_path]
    extra = {
        "smr_db": args.smr,
        "lead_ms": args.lead_ms,
        "masker_scale": result.masker_scale,
        "target_onset_sample": result.target_onset_sample,
    }
    write_manifest(_manifest_path(args, out), "mix", argv, [args.target, args.masker], outputs, extra)
    print(f"wrote {out} (masker scale {result.masker_scale:.6f}, onset {result.target_onset_sample})")
    return 0


def _collect_wavs(paths) -> list[Path]:
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(p.glob("*.wav")))
        else:
            out.append(p)
    if not out:
        raise ValidationError("no corpus WAV files found")
    return out


def cmd_ssn(args, argv) -> int:
    files = _collect_wavs(args.corpus)
    corpus = [read_wav(f) for f in files]
    noise = make_ssn(corpus, args.duration, seed=args.seed, rms=args.rms)
    out = Path(args.output)
    write_wav(out, noise)
    reference = AudioBuffer(
        np.concatenate([c.samples for c in corpus]), corpus[0].sample_rate_hz
    )
    match = ltas_match_error_db(noise, reference)
    extra = {
        "duration_s": args.duration,
        "seed": args.seed,
        "rms": args.rms,
        "ltas_band_centers_hz": list(THIRD_OCTAVE_CENTERS_HZ),
        "ltas_match_error_db": [round(float(v), 3) for v in match],
        "max_abs_ltas_error_db": round(float(np.max(np.abs(match))), 3),
    }
    write_manifest(_manifest_path(args, out), "ssn", argv, files, [out], extra)
    print(
        f"wrote {out} ({args.duration:.1f} s shaped to {len(files)} corpus files, "
        f"worst band error {extra['max_abs_ltas_error_db']:.2f} dB)"
    )
    return 0


def cmd_srt_sim(args, argv) -> int:
    start = args.start_smr if args.start_smr is not None else args.srt_true + 12.0
    rows = []
    for run in range(args.runs):
        listener = SimListener(args.srt_true, args.slope, rng_seed=args.seed + run)
        state = run_simulated_staircase(
            listener, StaircaseConfig(start, n_sentences=args.sentences)
        )
        est = srt_estimate(state)
        rows.append((run, args.seed + run, est, est - args.srt_true))
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "seed", "srt_estimate_db", "bias_db"])
        writer.writerows(rows)
    biases = [r[3] for r in rows]
    extra = {
        "mean_bias_db": float(np.mean(biases)),
        "sd_bias_db": float(np.std(biases)),
        "runs": args.runs,
    }
    write_manifest(_manifest_path(args, out), "srt-sim", argv, [], [out], extra)
    print(f"{args.runs} runs: mean bias {extra['mean_bias_db']:+.3f} dB, sd {extra['sd_bias_db']:.3f} dB")
    return 0


def cmd_ga(args, argv) -> int:
    clean = read_wav(args.clean)
    masker = read_wav(args.masker, expect_rate=clean.sample_rate_hz)
    mixed = mix_at_smr(clean, masker, MixSpec(args.smr, args.lead_ms))
    # Resynthesized stems share the processed output's length exactly.
    reference = resynthesize(mixed.target)
    mixture = resynthesize(mixed.mixture)
    grid = ParameterGrid.experiment_ii() if args.mode == "experiment-ii" else ParameterGrid()
    cfg = GaConfig(
        population_size=args.population,
        mutation_rate=args.mutation_rate,
        max_generations=args.generations,
        convergence_patience=args.patience,
        rng_seed=args.seed,
    )
    gate = GateConfig(args.gate_threshold)

    def score(genome):
        params = grid.params(genome)
        result = enhance_with_isnr(mixed.target, mixed.masker, params, gate)
        return lsd_fitness(result.audio, reference, mixture)

    result = run_ga(ObjectiveFitness(score), grid, cfg)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    best_path = outdir / "best.json"
    result.best_params.to_json(best_path)
    history_path = outdir / "history.json"
    history_path.write_text(result.history_json(grid))
    conv_path = outdir / "convergence.csv"
    with open(conv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "elite_score", "mean_score"])
        for rec in result.history:
            writer.writerow([rec.generation, rec.elite_score, float(np.mean(rec.scores))])
    outputs = [best_path, history_path, conv_path]
    manifest = Path(args.manifest) if args.manifest else outdir / "manifest.json"
    write_manifest(
        manifest, "ga", argv, [args.clean, args.masker], outputs,
        extra={"best": result.best_params.to_dict(), "converged": result.converged,
               "generations_run": len(result.history), "mode": args.mode},
    )
    print(f"best genome: {result.best_params.to_dict()} "
          f"({len(result.history)} generations, converged={result.converged})")
    return 0


def cmd_snr_bench(args, argv) -> int:
    try:
        entries = json.loads(Path(args.stimuli).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise AudioIoError(f"cannot read stimulus manifest {args.stimuli}: {exc}") from exc
    if not isinstance(entries, list) or not entries:
        raise ValidationError("stimulus manifest must be a nonempty JSON list")
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = StftConfig()
    frames_path = outdir / "frames.csv"
    inputs = [args.stimuli]
    report = []
    with open(frames_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stimulus", "frame", "time_s", "isnr_db", "esnr_db", "active"])
        for i, entry in enumerate(entries):
            target = read_wav(entry["target_path"])
            masker = read_wav(entry["masker_path"], expect_rate=target.sample_rate_hz)
            inputs += [entry["target_path"], entry["masker_path"]]
            spec = MixSpec(entry["smr_db"], entry.get("lead_ms", 500.0))
            mixed = mix_at_smr(target, masker, spec)
            ideal = isnr_track(mixed.target, mixed.masker, cfg)
            if args.estimator == "oracle":
                est = ideal
            else:
                est = esnr_track(mixed.mixture, cfg)
            active = speech_active_frames(mixed.target, cfg)
            times = cfg.frame_times_s(len(ideal), target.sample_rate_hz)
            for f in range(len(ideal)):
                writer.writerow([
                    i, f, f"{times[f]:.6f}",
                    repr(float(ideal.snr_db[f])), repr(float(est.snr_db[f])),
                    int(active[f]),
                ])
            stats = compare_tracks(est, ideal, active, GateConfig(args.gate_threshold))
            report.append({
                "stimulus": i,
                "smr_db": entry["smr_db"],
                "pearson_r": stats.pearson_r,
                "mean_abs_error_db": stats.mean_abs_error_db,
                "gate_agreement": stats.gate_agreement,
                "n_frames": stats.n_frames,
            })
    pooled = {
        "pearson_r": float(np.mean([r["pearson_r"] for r in report])),
        "gate_agreement": float(np.mean([r["gate_agreement"] for r in report])),
        "mean_abs_error_db": float(np.mean([r["mean_abs_error_db"] for r in report])),
    }
    report_path = outdir / "report.json"
    report_path.write_text(json.dumps({"estimator": args.estimator, "per_stimulus": report,
                                       "pooled": pooled}, indent=2))
    manifest = Path(args.manifest) if args.manifest else outdir / "manifest.json"
    write_manifest(manifest, "snr-bench", argv, inputs, [frames_path, report_path], pooled)
    print(f"pooled: r={pooled['pearson_r']:.3f}, gate agreement "
          f"{100 * pooled['gate_agreement']:.1f}%, MAE {pooled['mean_abs_error_db']:.2f} dB")
    return 0


def cmd_serve(args, argv) -> int:
    import socket

    import uvicorn

    from .service import create_app

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        raise AudioIoError(f"cannot bind {args.host}:{args.port}: {exc}") from exc
    finally:
        probe.close()
    app = create_app(
        stimulus_dir=args.stimulus_dir, log_dir=args.log_dir, seed=args.seed
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_rerun(args, argv) -> int:
    try:
        doc = json.loads(Path(args.manifest_file).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise AudioIoError(f"cannot read manifest {args.manifest_file}: {exc}") from exc
    stored = doc.get("argv")
    if not stored:
        raise ValidationError("manifest records no argv to replay")
    print(f"replaying: scekit {' '.join(stored)}")
    return main(stored)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scekit", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="spectral-change enhance a stimulus")
    p.add_argument("--params", required=True, help="JSON file with {b, xi, m, s}")
    p.add_argument("--clean", help="target stem WAV (with --masker)")
    p.add_argument("--masker", help="masker stem WAV (with --clean)")
    p.add_argument("--smr", type=float, help="mix stems at this SMR before processing")
    p.add_argument("--lead-ms", type=float, default=500.0)
    p.add_argument("--mixture", help="premixed WAV (blind estimation path)")
    p.add_argument("--gate-threshold", type=float, default=0.0)
    p.add_argument("--ungated", action="store_true", help="enhance every frame")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("mix", help="mix target and masker at an SMR")
    p.add_argument("--target", required=True)
    p.add_argument("--masker", required=True)
    p.add_argument("--smr", type=float, required=True)
    p.add_argument("--lead-ms", type=float, default=500.0)
    p.add_argument("--write-stems", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("ssn", help="synthesize speech-shaped noise from a corpus")
    p.add_argument("--corpus", nargs="+", required=True, help="WAV files or directories")
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rms", type=float, default=0.1)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_ssn)

    p = sub.add_parser("srt-sim", help="simulated adaptive threshold runs")
    p.add_argument("--srt-true", type=float, required=True)
    p.add_argument("--slope", type=float, default=1.0)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sentences", type=int, default=20)
    p.add_argument("--start-smr", type=float, default=None)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_srt_sim)

    p = sub.add_parser("ga", help="objective parameter search on one stimulus")
    p.add_argument("--clean", required=True)
    p.add_argument("--masker", required=True)
    p.add_argument("--smr", type=float, default=0.0)
    p.add_argument("--lead-ms", type=float, default=500.0)
    p.add_argument("--mode", choices=["default", "experiment-ii"], default="default")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--population", type=int, default=8)
    p.add_argument("--generations", type=int, default=15)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--mutation-rate", type=float, default=0.15)
    p.add_argument("--gate-threshold", type=float, default=0.0)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_ga)

    p = sub.add_parser("snr-bench", help="estimator vs ideal SNR benchmark")
    p.add_argument("--stimuli", required=True, help="JSON list of stem/SMR entries")
    p.add_argument("--estimator", choices=["default", "oracle"], default="default")
    p.add_argument("--gate-threshold", type=float, default=0.0)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_snr_bench)

    p = sub.add_parser("serve", help="run the interactive session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8572)
    p.add_argument("--stimulus-dir", default=None)
    p.add_argument("--log-dir", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("rerun", help="replay a command from its manifest")
    p.add_argument("manifest_file")
    p.set_defaults(func=cmd_rerun)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, argv)
    except AudioIoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
