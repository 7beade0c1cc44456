#!/usr/bin/env python3
"""Initialize encoder weights from a preset and write them as an MCLP file."""

from __future__ import annotations

import argparse

import aesgrad as ag


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", default="toy", choices=sorted(ag.runconfig.ENCODER_PRESETS),
                        help="encoder size preset")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output MCLP path")
    args = parser.parse_args()

    weights = ag.init_weights(ag.encoder_preset(args.preset), seed=args.seed)
    ag.save_weights(weights, args.out)
    print(f"wrote {args.out} (preset={args.preset} seed={args.seed} "
          f"checksum={weights.checksum()})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
