"""Smoke test for the orbindex_py extension.

Run after `pip install --no-build-isolation -e python/` (or with the built
library on PYTHONPATH).
"""

import json
import sys

import orbindex_py as ob


def check(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'} {name} {detail}".rstrip())
    return ok


def main():
    results = [check("version", bool(ob.version()), ob.version())]

    rep = json.loads(ob.validate_profile("fstar"))
    results.append(check("fstar profile validates", rep["pass"], f"mane={rep['mane_upper_bound']:.4f}"))

    orb = json.loads(ob.find_orbit("f2"))
    results.append(check("f2 orbit radius", abs(orb["orbit"]["rho"] - 2.5) < 1e-10, str(orb["orbit"]["rho"])))

    for tp, want in [(-1.0, "1/2"), (0.0, "0"), (1.0, "-1/2")]:
        got, expected = ob.shear_index(tp)
        results.append(check(f"shear T'={tp}", got == want == expected, got))

    flow = ob.spectral_flow([[[-1.0, 0.0], [0.0, 2.0]], [[0.0, 0.0], [0.0, 2.0]], [[1.0, 0.0], [0.0, 2.0]]])
    results.append(check("spectral flow of one crossing", flow == "1", flow))

    cfg = json.dumps({"n": 256})
    bundle = json.loads(ob.run_scenario(cfg))
    idx = {o["name"]: (o["mu_cz"], o["i_t"], o["i_free"], o["chi"]) for o in bundle["orbits"]}
    results.append(check("scenario passes", bundle["pass"], str(idx)))
    results.append(check("scenario indices", idx == {"fstar": ("1/2", 0, 1, -1), "f2": ("7/2", 3, 3, 1)}))

    results.append(check("flipped calibration fails", not json.loads(ob.calibrate(True))["pass"]))

    try:
        ob.run_scenario(json.dumps({"n": 100}))
        results.append(check("bad config rejected", False))
    except ValueError as e:
        results.append(check("bad config rejected", True, str(e)))

    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
