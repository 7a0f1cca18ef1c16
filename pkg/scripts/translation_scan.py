"""Cost of a rigidly translated disk along a line, to see the landscape a descent has to cross.

    python3 scripts/translation_scan.py --target 0.5 0.75
"""
import argparse

import numpy as np

from elastinv import ForceParams, MaterialModel, Problem, SimConfig, generate_mesh
from elastinv import signed_distance_circle, synthesize_data


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--target", type=float, nargs=2, default=[0.5, 0.75])
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--steps", type=int, default=100)
    args = ap.parse_args()
    mesh = generate_mesh(args.n)
    model, force = MaterialModel(), ForceParams()
    cfg = SimConfig(n_steps=args.steps)
    delta = synthesize_data(signed_distance_circle(mesh, args.target, 0.1), model, force, cfg)
    problem = Problem(model, force, cfg, delta)
    start = np.array([0.5, 0.5])
    goal = np.array(args.target)
    for s in np.linspace(0.0, 1.2, 25):
        c = start + s * (goal - start)
        E = problem.cost(signed_distance_circle(mesh, c, 0.1))
        print(f"centre ({c[0]:.3f}, {c[1]:.3f})  cost {E:.4e}")


if __name__ == "__main__":
    main()
