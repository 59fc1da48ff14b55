#!/usr/bin/env python3
"""Tabulate the wavelet scale against a mel scale with the same filter count.

With the stock configuration (f_h 24 kHz, f_l 0.5 Hz, T_max 341 ms,
Q 35) the wavelet scale spends 49 evenly spaced filters below 205 Hz and
steps geometrically above it, while 290 mel filters spread their density
differently. Writes both banks as JSON next to the table; pass --plot to
save a PNG overlay when matplotlib is available.
"""

import argparse
from pathlib import Path

from scaloforge.filterbank import WaveletScaleParams, build_mel_scale, build_wavelet_scale


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--f-h", type=float, default=24000.0)
    parser.add_argument("--f-l", type=float, default=0.5)
    parser.add_argument("--t-max", type=float, default=0.341)
    parser.add_argument("--q", type=int, default=35)
    parser.add_argument("--out-dir", default="scale_report")
    parser.add_argument("--plot", action="store_true")
    args = parser.parse_args()

    params = WaveletScaleParams(f_h=args.f_h, f_l=args.f_l, T_max=args.t_max, Q=args.q)
    wavelet = build_wavelet_scale(params)
    mel = build_mel_scale(0.0, args.f_h, wavelet.J)

    print(f"wavelet scale: K={wavelet.K} constant-Q + P={wavelet.P} even = J={wavelet.J}")
    print(f"boundary frequency 2Q/T_max = {params.boundary_freq:.2f} Hz")
    print(f"{'index':>6} {'wavelet Hz':>12} {'wavelet bw':>12} {'mel Hz':>12}")
    for j in list(range(0, wavelet.J, max(1, wavelet.J // 20))) + [wavelet.J - 1]:
        print(
            f"{j:>6} {wavelet.centers[j]:>12.2f} {wavelet.bandwidths[j]:>12.2f} "
            f"{mel.centers[j]:>12.2f}"
        )

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wavelet.save_json(out / "wavelet_bank.json")
    mel.save_json(out / "mel_bank.json")
    print(f"bank JSON written to {out}/")

    if args.plot:
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            print("matplotlib unavailable, skipping the plot")
            return
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(wavelet.centers, label="wavelet scale")
        ax.plot(mel.centers, label="mel scale")
        ax.set_xlabel("filter index")
        ax.set_ylabel("center frequency (Hz)")
        ax.set_yscale("log")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "scales.png", dpi=120)
        print(f"plot written to {out}/scales.png")


if __name__ == "__main__":
    main()
