#!/usr/bin/env python3
"""Smoke test for the cvae_py extension module.

Build the module first:

    cargo build -p cvae-python --release

then run this script from the repository root:

    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path


def locate_module():
    root = Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / "release" / "libcvae_py.so",
        root / "target" / "debug" / "libcvae_py.so",
        root / "target" / "release" / "libcvae_py.dylib",
        root / "target" / "debug" / "libcvae_py.dylib",
    ]
    for built in candidates:
        if built.exists():
            # the interpreter imports extension modules by their bare name
            stage = Path(tempfile.mkdtemp(prefix="cvae_py_"))
            shutil.copy2(built, stage / "cvae_py.so")
            sys.path.insert(0, str(stage))
            return built
    sys.exit("cvae_py not built; run `cargo build -p cvae-python --release` first")


checks = 0


def check(label, condition):
    global checks
    checks += 1
    if not condition:
        sys.exit(f"FAIL {label}")
    print(f"PASS {label}")


def main():
    built = locate_module()
    import cvae_py

    print(f"loaded {built}")

    # Logistic map: known iterates from 0.2 and bit-level determinism.
    gen = cvae_py.LogisticMap(seed=0.2, burn_in=0)
    first = gen.sample(3)
    check(
        "logistic map iterates 0.64 / 0.9216 / 0.28901376",
        math.isclose(first[0], 0.64, abs_tol=1e-15)
        and math.isclose(first[1], 0.9216, abs_tol=1e-15)
        and math.isclose(first[2], 0.28901376, abs_tol=1e-13),
    )
    replay = cvae_py.LogisticMap(seed=0.2, burn_in=0).sample(3)
    check("logistic map replay is exact", first == replay)
    check("fixed-point seeds are rejected", not cvae_py.validate_seed(0.75))
    check("generic seeds validate", cvae_py.validate_seed(0.123456))

    # Long-run distribution against the arcsine law.
    stream = cvae_py.LogisticMap(seed=0.123456, burn_in=100).sample(100_000)
    d = cvae_py.ks_statistic(stream, "arcsine")
    check(f"KS vs arcsine CDF = {d:.5f} < 0.01", d < 0.01)

    # One-class classification end to end on the synthetic dataset.
    rows, labels = cvae_py.synth_occ(seed=7, n_neg=300, n_pos=40, nf=6, shift=0.4)
    x_train = [r for r, l in zip(rows, labels) if l == 0]
    x_test = [r for r, l in zip(rows, labels) if l == 1]
    check("synthetic split counts", len(x_train) == 300 and len(x_test) == 40)

    results = {}
    for model in ("vae", "cvae"):
        clf = cvae_py.VaeClassifier(model=model, epochs=60, seed=7)
        trace = clf.fit(x_train)
        check(f"{model} loss decreased", trace[-1] < trace[0])
        report = clf.evaluate(x_train, x_test, percentile=99.0)
        results[model] = report.cr
        check(f"{model} CR = {report.cr:.1f} >= 90", report.cr >= 90.0)
        check(
            f"{model} predictions consistent with scores",
            all(
                (s > report.threshold) == bool(p)
                for s, p in zip(report.scores, report.predictions)
            ),
        )

    # Statistics layer.
    t = cvae_py.two_sample_t([73.0, 73.2, 73.1, 72.9], [77.8, 78.0, 77.9, 78.1])
    check("t-test df = n1 + n2 - 2", t.degrees_of_freedom == 6)
    check(f"t-test detects the shift (p = {t.p_value:.2e})", t.significant_at_1pct)
    check("t_cdf symmetry", abs(cvae_py.t_cdf(2.5, 28.0) + cvae_py.t_cdf(-2.5, 28.0) - 1.0) < 1e-12)
    mean, std = cvae_py.aggregate([70.0, 80.0])
    check("aggregate mean/std", mean == 75.0 and abs(std - math.sqrt(50.0)) < 1e-12)

    print(f"\nall {checks} smoke checks passed"
          f" (vae CR {results['vae']:.1f}, cvae CR {results['cvae']:.1f})")


if __name__ == "__main__":
    main()
