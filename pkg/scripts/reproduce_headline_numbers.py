"""Print signature lengths, signing rates and thresholds at the 90 km operating point."""
import argparse

from qds.config import field_trial_config, load_config
from qds.security import eve_error_estimate
from qds.tables import params_notes, params_rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", help="run configuration (default: built-in operating point)")
    args = parser.parse_args()
    config = load_config(args.config) if args.config else field_trial_config()

    est = eve_error_estimate(config.security_inputs())
    print(f"T = {config.T:.4e}   e = {config.e:.4f}")
    print(f"P_e in use = {est.p_e:.4f} ({est.source}); closed form = {est.formula_value:.4f} [{est.branch}]")
    rows = params_rows(config)
    print(f"g = {rows[0]['g']:.4f}  s_a = {rows[0]['s_a']:.4f}  s_v = {rows[0]['s_v']:.4f}")
    print(f"{'epsilon':>8} {'L':>6} {'rate (bit/s)':>13} {'capacity':>9}")
    for row in rows:
        print(f"{row['epsilon']:>8.0e} {row['L']:>6d} {row['rate_bits_per_s']:>13.3f} {row['capacity']:>9d}")
    for note in params_notes(config, rows):
        print(f"note: {note}")


if __name__ == "__main__":
    main()
