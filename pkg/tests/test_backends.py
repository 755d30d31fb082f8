import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_state
from legged_inekf._kernels import available_backends
from legged_inekf.state import GRAVITY, NoiseConfig

BACKENDS = available_backends()
needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")
PY = BACKENDS["python"]


def spd(rng, n=21, scale=0.05):
    L = rng.normal(size=(n, n)) * scale
    return L @ L.T + 1e-4 * np.eye(n)


@needs_cython
def test_transition_and_propagate_parity(rng):
    C = BACKENDS["cython"]
    q = np.ascontiguousarray(NoiseConfig().process_blocks())
    for _ in range(20):
        x = random_state(rng).to_flat()
        np.testing.assert_allclose(C.transition_matrix(x, GRAVITY, 0.01), PY.transition_matrix(x, GRAVITY, 0.01), atol=1e-15)
        P = spd(rng)
        w, a = rng.normal(size=3), rng.normal(size=3)
        x1, P1, x2, P2 = x.copy(), P.copy(), x.copy(), P.copy()
        PY.propagate(x1, P1, w, a, 0.005, GRAVITY, q)
        C.propagate(x2, P2, w, a, 0.005, GRAVITY, q)
        np.testing.assert_allclose(x2, x1, atol=1e-13)
        np.testing.assert_allclose(P2, P1, atol=1e-13)


@needs_cython
def test_update_parity(rng):
    C = BACKENDS["cython"]
    Nf = 1e-3 * np.eye(3)
    for _ in range(20):
        s = random_state(rng)
        x = s.to_flat()
        P = spd(rng)
        y = s.R.T @ s.v + 0.1 * rng.normal(size=3)
        out = []
        for B in (PY, C):
            xb, Pb = x.copy(), P.copy()
            st, chi2, r = B.kinematic_update(xb, Pb, y, Nf, 30.1, True)
            out.append((st, chi2, r, xb, Pb))
        assert out[0][0] == out[1][0]
        assert out[0][1] == pytest.approx(out[1][1], rel=1e-10)
        for k in (2, 3, 4):
            np.testing.assert_allclose(out[0][k], out[1][k], atol=1e-12)

        wc, vc = rng.normal(size=3), rng.normal(size=3)
        hp, Hp = PY.camera_model(x, wc)
        hc, Hc = C.camera_model(x, wc)
        np.testing.assert_allclose(hc, hp, atol=1e-14)
        np.testing.assert_allclose(Hc, Hp, atol=1e-14)
        for wf in (False, True):
            Cv, Cw = 1e-3 * np.eye(3), 2e-3 * np.eye(3)
            np.testing.assert_allclose(C.camera_noise(x, Cv, Cw, wf), PY.camera_noise(x, Cv, Cw, wf), atol=1e-16)


@needs_cython
def test_tuner_parity(rng):
    C = BACKENDS["cython"]
    bufs = [np.zeros((5, 6)) for _ in range(2)]
    metas = [np.zeros(2, dtype=np.int64) for _ in range(2)]
    for _ in range(12):
        smp = rng.normal(size=6)
        a = PY.tuner_push(bufs[0], metas[0], smp, 1e-8)
        b = C.tuner_push(bufs[1], metas[1], smp, 1e-8)
        np.testing.assert_allclose(a, b, atol=1e-15)
        np.testing.assert_array_equal(metas[0], metas[1])


@needs_cython
def test_full_run_parity():
    from legged_inekf.simulator import ScenarioConfig, build_events, generate_truth, synthesize_sensors
    from legged_inekf.kinematics import biped_legs

    cfg = ScenarioConfig(duration=3.0)
    truth = generate_truth(cfg)
    ev = build_events(synthesize_sensors(truth, cfg), biped_legs())
    results = {}
    for name in ("python", "cython"):
        code = (
            "import sys, numpy as np\n"
            "from legged_inekf.simulator import *\n"
            "cfg = ScenarioConfig(duration=3.0)\n"
            "r = run_experiment(cfg, 'camera_on', return_run=True)[1]\n"
            "np.save(sys.argv[1], r.result.states)\n"
        )
        path = os.path.join(os.environ.get("TMPDIR", "/tmp"), f"parity_{name}_{os.getpid()}.npy")
        env = dict(os.environ, LEGGED_INEKF_BACKEND=name)
        subprocess.run([sys.executable, "-c", code, path], check=True, env=env)
        results[name] = np.load(path)
        os.remove(path)
    assert results["python"].shape[0] == np.count_nonzero((ev[1] == 2) | ((ev[1] == 1) & (ev[3] != 0)))
    np.testing.assert_allclose(results["cython"], results["python"], atol=1e-9)


@pytest.mark.parametrize("name", ["python", "cython"])
def test_backend_selection(name):
    if name not in BACKENDS:
        pytest.skip("compiled kernels not built")
    out = subprocess.run(
        [sys.executable, "-c", "from legged_inekf._kernels import BACKEND_NAME; print(BACKEND_NAME)"],
        env=dict(os.environ, LEGGED_INEKF_BACKEND=name),
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == name
