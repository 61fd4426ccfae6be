"""Smoke test for the osgood Python bindings.

Build and install first:
    pip install maturin
    maturin develop --release -m crates/osgood-py/Cargo.toml
then run:
    python python/smoke_test.py
"""

import json
import math

import osgood


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    # arithmetic
    assert osgood.shift_entropy(4) == math.log(4)
    assert osgood.entropy_of_iterate(12.0, 4) == 3.0

    # fields and flows
    drift = osgood.Field.drift(0.5, 0.25)
    x, y = osgood.flow(drift, (0.0, 0.0), t=1.0)
    assert close(x, 0.5, 1e-12) and close(y, 0.25, 1e-12), (x, y)
    grid = osgood.time_one_grid(osgood.Field.zero(), 4)
    assert len(grid) == 16 and grid[0] == (-1.0, -1.0)

    bump = osgood.Field.rotation_bump((0.2, -0.1), 0.4, 0.5)
    x, y = osgood.flow(bump, (0.25, -0.1), tol=1e-10)
    assert close(x, 0.15, 1e-8) and close(y, -0.1, 1e-8), (x, y)

    spec = osgood.Field.from_json(bump.to_json())
    assert spec.digest() == bump.digest()
    combined = drift + bump
    assert combined.num_blocks == drift.num_blocks + bump.num_blocks

    # moduli
    ll = osgood.Modulus.log_lipschitz()
    assert close(ll.bihari_bound(math.exp(-4.0), math.log(2.0)), math.exp(-2.0), 1e-9)
    report = json.loads(ll.check_osgood())
    assert report["non_lipschitz"]

    # horseshoe certificate and symbolic dynamics
    h2 = osgood.Field.horseshoe(2)
    cert = osgood.certify(h2, exact=True)
    assert cert.passed and cert.margin > 0 and cert.bound_nats == math.log(2), cert
    realized, total, rate = osgood.count_words(h2, 4)
    assert realized == total == 16 and close(rate, math.log(2), 1e-12)
    try:
        osgood.Field.horseshoe(1)
    except ValueError:
        pass
    else:
        raise AssertionError("N=1 horseshoe accepted")

    # periodic search
    orbit = json.loads(osgood.find_periodic_point(osgood.Field.drift(1.0, 0.0), 0.05))
    assert orbit["N"] == 2, orbit

    print("osgood bindings: all smoke checks passed")


if __name__ == "__main__":
    main()
