#!/usr/bin/env python3
"""Emit JSON oracle reports comparing the STFT energy path to direct
time-domain convolution for stationary tones at sampled filter centers.

Uses a small 8 kHz configuration so the naive convolution stays cheap.
"""

import argparse

import numpy as np

from scaloforge.features import StftConfig
from scaloforge.filterbank import WaveletScaleParams, build_wavelet_scale, digitize
from scaloforge.oracle import compare_paths
from scaloforge.signal_io import SynthSpec, synth_signal


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rate", type=int, default=8000)
    parser.add_argument("--f-h", type=float, default=3900.0)
    parser.add_argument("--q", type=int, default=8)
    parser.add_argument("--t-max", type=float, default=0.256)
    parser.add_argument("--n-filters", type=int, default=10)
    parser.add_argument("--duration", type=float, default=1.5)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    params = WaveletScaleParams(f_h=args.f_h, f_l=0.5, T_max=args.t_max, Q=args.q)
    bank = build_wavelet_scale(params)
    framing = StftConfig(window=0.512, shift=0.080, fft_size=4096)
    matrix = digitize(bank, framing.fft_size, args.rate)

    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for j in sorted(rng.choice(bank.J, size=args.n_filters, replace=False)):
        tone = synth_signal(
            SynthSpec(kind="tone", freq=float(bank.centers[j]), duration=args.duration, rate=args.rate)
        )
        cmp = compare_paths(tone.samples[0], args.rate, int(j), bank, matrix, framing)
        print(cmp.to_json(filter_index=int(j)))
        worst = max(worst, cmp.max_rel_err)
    print(f"# worst max_rel_err over {args.n_filters} filters: {worst:.6f}")


if __name__ == "__main__":
    main()
