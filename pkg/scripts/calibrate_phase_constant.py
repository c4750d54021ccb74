"""Recompute the truncation constant c in N = 2n + ceil(c log(1/eps)) for the phase expansion."""

from rte_kernel_lab.separable import PHASE_TRUNCATION_C, calibrate_phase_constant

if __name__ == "__main__":
    c = calibrate_phase_constant()
    print(f"fitted c = {c:.4f}; frozen value = {PHASE_TRUNCATION_C}")
    for ratio in (0.2, 0.3, 0.4, 0.45):
        print(f"  ratio {ratio}: c = {calibrate_phase_constant(ratio=ratio):.3f}")
