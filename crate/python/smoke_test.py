import qmem

state = qmem.StoredState.coherent(2.0)
mean, var = state.stats()
assert abs(mean - 4.0) < 1e-9 and abs(var - 4.0) < 1e-9

model = qmem.PhaseModel.from_variance(0.0, 1.0, 1000)
f = qmem.fidelity_analytic(state, model)
assert 0.0 < f < 1.0

coeffs = qmem.series_coefficients(state, 3)
assert abs(coeffs[0] - 1.0) < 1e-12 and abs(coeffs[1] - 1.0) < 1e-12

kappa, zeta, alpha = qmem.pulse_factors(1000.0, 1.0, "paper")
assert (kappa, zeta, alpha) == (3.2, 2.7, 2.7)

r_sync = qmem.reliability_sync([state, state], model)
r_rep = qmem.reliability_repeater(state, model, 2)
assert abs(r_rep - f * f) < 1e-12
assert r_sync > 0.0

try:
    qmem.StoredState.uniform(0)
except ValueError:
    pass

print("capacity(10) =", qmem.capacity_from_variance(10.0))
print("fidelity =", f)
print("smoke test ok")
