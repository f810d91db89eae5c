"""Smoke test for the `shjb` extension module.

Build it first, e.g. `maturin develop -m crates/py/Cargo.toml`, or
`cargo build -p shjb-py --release --features extension-module` and put
`target/release/libshjb_py.so` on the path as `shjb.so`.
"""

import math
import sys

import shjb


def close(a, b, tol):
    return abs(a - b) <= tol * (1.0 + abs(b))


def main():
    assert "pendulum" in shjb.fixtures()

    # Noiseless double integrator: P = [[√3, 1], [1, √3]].
    sol = shjb.solve_sare(shjb.Problem.fixture("lqr_noiseless"))
    assert sol.converged, sol.status
    s3 = math.sqrt(3.0)
    for got, want in zip(sum(sol.P, []), [s3, 1.0, 1.0, s3]):
        assert close(got, want, 1e-9), (got, want)
    assert sol.history_csv().startswith("tau,")

    diverged = shjb.solve_sare(shjb.Problem.fixture("lqgb_noise10x"))
    assert diverged.status == "diverged"

    pend = shjb.Problem.fixture("pendulum")
    series = shjb.solve_hjb(pend, degree=6)
    assert sorted(series.pi) == [3, 4, 5, 6]
    assert all(c["invertible"] for c in series.certificates())
    x = [0.3, -0.2]
    quad = 0.5 * sum(x[i] * series.P[i][j] * x[j] for i in range(2) for j in range(2))
    assert series.value(x) != quad
    assert len(series.feedback(x)) == 1
    again = shjb.Solution.from_json(series.to_json())
    assert close(again.value(x), series.value(x), 1e-12)

    traj = shjb.integrate(shjb.Problem.fixture("sdre_lqgb"), steps=3000)
    sare = shjb.solve_sare(shjb.Problem.fixture("lqgb"), tol=1e-12)
    gap = max(abs(a - b) for a, b in zip(sum(traj.P[0], []), sum(sare.P, [])))
    assert gap < 1e-3, gap
    assert len(traj) == 3001

    rows = shjb.simulate(pend, series, [0.5, 0.0], degrees=[1, 5], horizon=2.0, dt=1e-2, paths=256, seed=7)
    assert [r["feedback"] for r in rows] == ["degree1", "degree5"]
    assert all(r["diverged"] == 0 and r["mean"] > 0 for r in rows)
    assert rows == shjb.simulate(pend, series, [0.5, 0.0], degrees=[1, 5], horizon=2.0, dt=1e-2, paths=256, seed=7)

    try:
        series.value([1.0])
    except shjb.ShjbError:
        pass
    else:
        raise AssertionError("dimension mismatch not reported")

    print("python smoke test: ok")


if __name__ == "__main__":
    sys.exit(main())
