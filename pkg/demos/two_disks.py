"""Two disks meet, merge and separate again.

The concentration starts at +1 in the upper disk and -1 in the lower one.
Before contact nothing mixes; afterwards diffusion acts across the neck.
Writes one VTK file per slab into ./two_disks_out.

    python demos/two_disks.py
"""
from pathlib import Path

from stagfem import driver as D
from stagfem.vtk import write_solution

out = Path("two_disks_out")
out.mkdir(exist_ok=True)

spec = D.two_disk_problem()
contact = D.first_contact_slab(spec)
print(f"first contact in slab {contact}")


def report(rec):
    t = rec.space.slab[1]
    trace = rec.trace(t)
    upper = trace(D.diameter_points(t))
    total = D.domain_integral(rec.space, rec.geom, trace, t)
    print(f"slab {rec.n:2d}  t={t:.3f}  integral={total:+.2e}  upper disk in [{upper.min():.3f}, {upper.max():.3f}]")
    write_solution(out / f"u_{rec.n:04d}.vtk", trace, rec.geom, t)


D.run(spec, callback=report, keep=False)
