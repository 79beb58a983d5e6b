#!/usr/bin/env python3
"""Render a self-contained demo stimulus set into a directory.

Produces a synthetic utterance, a speech-shaped masker, their mixture at a
chosen SMR, and the three processed versions (unprocessed resynthesis,
ungated enhancement, ideal-SNR-gated enhancement).  The directory can be
passed to `scekit serve --stimulus-dir` for interactive sessions.
"""

import argparse
from pathlib import Path

from scekit.audio import write_wav
from scekit.enhance import SceParams
from scekit.mixing import MixSpec, make_ssn, mix_at_smr
from scekit.pipeline import enhance_ungated, enhance_with_isnr, resynthesize
from scekit.synth import pseudo_speech


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-o", "--output", default="demo_stimuli")
    ap.add_argument("--smr", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--duration", type=float, default=2.5)
    args = ap.parse_args()

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    clean = pseudo_speech(args.duration, seed=args.seed)
    masker = make_ssn(
        [pseudo_speech(args.duration, seed=args.seed + 1)],
        args.duration + 1.0,
        seed=args.seed + 2,
    )
    mixed = mix_at_smr(clean, masker, MixSpec(smr_db=args.smr))
    params = SceParams(b=1.0, xi=0.9, m=5, s=3.0)

    write_wav(out / "clean.wav", clean)
    write_wav(out / "masker.wav", masker)
    write_wav(out / "mixture.wav", mixed.mixture)
    write_wav(out / "unprocessed.wav", resynthesize(mixed.mixture))
    write_wav(out / "enhanced.wav", enhance_ungated(mixed.mixture, params).audio)
    gated = enhance_with_isnr(mixed.target, mixed.masker, params)
    write_wav(out / "enhanced_gated.wav", gated.audio)
    params.to_json(out / "params.json")
    print(f"wrote 6 WAV files and params.json to {out}/ "
          f"(gated fraction {gated.stats['gated_fraction']:.2f})")


if __name__ == "__main__":
    main()
