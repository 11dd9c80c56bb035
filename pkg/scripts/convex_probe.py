"""Mean squared distance to the least-squares optimum for uniform and
gradient-norm sampling on a synthetic linear regression problem.

    python scripts/convex_probe.py [--seeds 50] [--iterations 2000]
"""

import argparse

from issgd.experiments import convex_probe


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, default=50)
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--every", type=int, default=100)
    args = parser.parse_args()

    result = convex_probe(seeds=args.seeds, iterations=args.iterations, every=args.every)
    uni = result.mean_sq_distance["uniform-only"]
    imp = result.mean_sq_distance["gradient-norm"]
    print(f"{'iteration':>9} {'uniform':>12} {'gradnorm':>12} {'ratio':>7}")
    for t, u, g in zip(result.iterations, uni, imp):
        print(f"{t:9d} {u:12.4e} {g:12.4e} {g / u:7.3f}")


if __name__ == "__main__":
    main()
