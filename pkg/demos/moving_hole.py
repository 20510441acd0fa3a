"""Manufactured heat problem around a moving square hole.

Runs the h = tau = 2^-m ladder for bilinear/linear-in-time elements and
prints the errors and observed slopes.

    python demos/moving_hole.py [levels...]
"""
import sys

from stagfem.driver import convergence_study

levels = [int(a) for a in sys.argv[1:]] or [3, 4, 5]

table = convergence_study(levels, p=1, q=1,
                          progress=lambda m, e: print(f"m={m}  dg={e['accumulated_dg']:.4e}  "
                                                      f"l2(T)={e['l2_final']:.4e}"))
print(f"accumulated DG slope {table.dg_rate:.3f}")
print(f"final-time L2 slope  {table.l2_rate:.3f}")
