"""Smoke test for the extension module.

    cargo build --release -p catchform-py --features extension-module
    python3 crates/py/python/smoke_test.py [path/to/libcatchform.so]
"""

import importlib.util
import math
import os
import shutil
import sys
import tempfile

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.abspath(os.path.join(HERE, "..", "..", ".."))


def load(lib):
    tmp = tempfile.mkdtemp()
    dst = os.path.join(tmp, "catchform.so")
    shutil.copy(lib, dst)
    spec = importlib.util.spec_from_file_location("catchform", dst)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    lib = sys.argv[1] if len(sys.argv) > 1 else os.path.join(ROOT, "target", "release", "libcatchform.so")
    cf = load(lib)
    print("catchform", cf.version())

    forces = cf.simulate_punch(5e-3, duration=0.5)
    assert len(forces) == 100 and all(math.isfinite(f) and f > 0 for f in forces)

    fixture = os.path.join(ROOT, "crates", "core", "tests", "fixtures", "golden_chunk_seed42.txt")
    with open(fixture) as f:
        assert cf.golden_chunk() == f.read(), "golden chunk differs from the fixture"

    blob = cf.seeded_bundle(42)
    assert blob[:4] == b"CFA1"
    desc = dict(cf.bundle_descriptor(blob))
    assert "arms" in desc, desc
    try:
        cf.bundle_descriptor(blob[:-3])
    except ValueError:
        pass
    else:
        raise AssertionError("truncated bundle accepted")

    assert cf.evaluate("press_hold", trials=2) == 1.0
    try:
        cf.evaluate("juggle")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown task accepted")

    assert cf.message_type('{"type":"error","seq":0,"payload":{"message":"x"}}') == "error"
    print("smoke test passed")


if __name__ == "__main__":
    main()
