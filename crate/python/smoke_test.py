"""Smoke test for the walker_py extension module."""

import math

import walker_py


def main():
    model = walker_py.Model()
    assert abs(model.horizon_km - 2703.81) < 0.01, model.horizon_km
    assert math.isclose(model.min_distance_km, 550.0)

    d = model.drop(20, 20, seed=7, index=3)
    assert d.n_visible >= 1 and d.sinr >= 0.0
    again = model.drop(20, 20, seed=7, index=3)
    assert again.sinr == d.sinr

    points = model.sweep([(10, 10), (20, 20)], ["full", "q=0.1"], drops=200, seed=3)
    assert [(p.n_total, p.policy) for p in points] == [
        (100, "full"), (100, "q=0.1"), (400, "full"), (400, "q=0.1"),
    ]
    for p in points:
        lo, hi = p.p_cov_ci
        assert 0.0 <= lo <= p.p_cov <= hi <= 1.0
    assert points[0].to_csv().startswith("n_o,n_s,n_total,policy")

    cert = model.certificate(grid_res=128)
    assert cert.beta > 0 and cert.n0 >= 1
    same = walker_py.Certificate.from_json(cert.to_json())
    assert same.geometry_hash == cert.geometry_hash

    b = model.bounds(cert, 100, 100)
    assert b.status in ("ok", "vacuous (m < 1)", "precondition unmet")
    assert b.k_sinr > 0

    assert walker_py.lattice_arc_count(10, 0.0, math.pi) >= 5
    print("walker_py", walker_py.__version__, "smoke test ok")


if __name__ == "__main__":
    main()
