"""Signing rate against fibre length, written as CSV."""
import argparse
import sys

from qds.cli import render
from qds.config import field_trial_config, load_config
from qds.tables import SWEEP_COLUMNS, parse_range, sweep_rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config")
    parser.add_argument("--range", default="0:200:10", help="distances in km, start:stop:step")
    parser.add_argument("--loss-per-km", type=float, default=31.0 / 90.0,
                        help="dB/km (default: installed-link average)")
    parser.add_argument("--epsilon", type=float, default=1e-10)
    args = parser.parse_args()
    config = load_config(args.config) if args.config else field_trial_config()

    rows = sweep_rows(config, "distance_km", parse_range(args.range), args.epsilon, args.loss_per_km)
    sys.stdout.write(render({}, rows, SWEEP_COLUMNS, "csv"))


if __name__ == "__main__":
    main()
