"""Smoke test of the nisio_py extension: build with `maturin build` and install the wheel first."""

import nisio_py as nz

grid = nz.Grid(-8.0, 8.0, 513)
f = nz.GridFunction.bump(grid, radius=1.0)
drift = nz.Family("gaussian_drift", lambda_interval=(-1.0, 1.0))

res = nz.nisio_dyadic(drift, 0.5, f, tol_rel=1e-3, n_max=8)
assert res.converged and res.upper_bound_pass
u = res.final_iterate
assert f.lp_norm(2.0) < u.lp_norm(2.0)
# the envelope dominates every member
for lam in (-1.0, 0.0, 1.0):
    assert drift.apply_member(lam, 0.5, f).leq(u, 1e-9)

hjb = nz.hjb_upwind(f, 0.5, 1.0)
diff = max(abs(a - b) for a, b in zip(u.samples(), hjb.samples()))
assert diff < 0.05, diff

jumps = nz.Family("compound_poisson", lambda_list=[0.0, 1.0], jump_atoms=[(1.0, 1.0)])
ode = nz.ode_reference(jumps, f, 0.5)
env = nz.nisio_dyadic(jumps, 0.5, f, tol_rel=1e-4, n_max=10).final_iterate
assert max(abs(a - b) for a, b in zip(env.samples(), ode.samples())) < 1e-2

shift = nz.Family("pure_shift", lambda_interval=(-1.0, 1.0))
assert not shift.has_upper_bound()
try:
    shift.upper_bound(0.5, f)
except nz.NoEnvelopeBoundError:
    pass
else:
    raise AssertionError("pure_shift has no dominating operator")

rows = nz.counterexample_scan(nz.Grid(-2.0, 2.0, 16001), 2.0, 0.5, [1e-1, 1e-2, 1e-3])
norms = [r[1] for r in rows]
assert norms == sorted(norms), norms

try:
    nz.Grid(1.0, 0.0, 10)
except ValueError:
    pass
else:
    raise AssertionError("inverted grid must be rejected")

print("nisio_py smoke test: OK")
