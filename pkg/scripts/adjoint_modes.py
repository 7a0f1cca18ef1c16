"""Compare the adjoint variants against the central-difference oracle.

    python3 scripts/adjoint_modes.py

Uses the 21x21 / 50-step case with the disk target above the initial disk.
"""
import numpy as np

from elastinv import ForceParams, InverseConfig, MaterialModel, Problem, SimConfig, generate_mesh
from elastinv import signed_distance_circle, synthesize_data
from elastinv.inverse import fd_gradient_check, smooth_direction
from elastinv.wave import ADJOINT_MODES


def main():
    mesh = generate_mesh(20)
    model, force = MaterialModel(), ForceParams()
    cfg = SimConfig(n_steps=50)
    init = signed_distance_circle(mesh, (0.5, 0.5), 0.1)
    delta = synthesize_data(signed_distance_circle(mesh, (0.5, 0.65), 0.1), model, force, cfg)
    s = 1e-3 * np.abs(init.values).max()
    for mode in ADJOINT_MODES:
        problem = Problem(model, force, cfg, delta, InverseConfig(adjoint_mode=mode))
        g, _ = problem.gradient(init)
        rels = [fd_gradient_check(init, problem, smooth_direction(mesh, k), s, g=g)[2] for k in range(3)]
        print(f"{mode:18s} rel_error " + "  ".join(f"{r:.2e}" for r in rels))


if __name__ == "__main__":
    main()
