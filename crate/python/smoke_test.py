"""Smoke test for the posefilter Python module.

Build and install the extension first:

    cd crates/py && maturin build --release -o dist && pip install dist/*.whl
    python python/smoke_test.py
"""

import json
import math
import tempfile
from pathlib import Path

import posefilter as pf


def check_geometry():
    k = pf.CameraIntrinsics.default_for(96, 96)
    assert (k.width, k.height) == (96, 96)
    u, v = k.project([0.0, 0.0, 1.0])
    assert math.isclose(u, k.cx) and math.isclose(v, k.cy)
    p = k.backproject(10.0, 20.0, 0.8)
    assert all(math.isclose(a, b) for a, b in zip(k.project(p), (10.0, 20.0)))

    pose = pf.Pose.from_axis_angle([0.0, 0.0, 1.0], math.pi / 2, [0.0, 0.0, 0.7])
    x = pose.transform_point([1.0, 0.0, 0.0])
    assert math.isclose(x[1], 1.0) and abs(x[0]) < 1e-12
    ident = pose.compose(pose.inverse())
    assert all(abs(t) < 1e-12 for t in ident.translation)
    return k, pose


def check_rendering_and_metrics(k, pose):
    mesh = pf.TriangleMesh.primitive("box", [0.1, 0.08, 0.06])
    depth = pf.render_depth(mesh, pose, k)
    covered = [d for d in depth if d is not None]
    assert len(depth) == 96 * 96 and covered
    # The near face of the box is 3 cm in front of its center.
    assert math.isclose(min(covered), 0.67, abs_tol=1e-9)

    moved = pf.Pose(pose.rotation, [0.01, 0.0, 0.7])
    assert math.isclose(pf.add_error(mesh, pose, moved), 0.01, rel_tol=1e-9)
    assert pf.adds_error(mesh, pose, moved) <= pf.add_error(mesh, pose, moved)
    _, accuracy, auc = pf.accuracy_curve([0.0, 0.01, 0.05])
    assert accuracy[-1] == 2 / 3 and 0.0 < auc < 1.0
    assert math.isclose(pf.anneal_factor(0.7), 0.75 ** 5)


def check_pipeline():
    with tempfile.TemporaryDirectory() as tmp:
        scene = str(Path(tmp) / "scene")
        assert pf.cli(["synth", "--objects", "1", "--seed", "3", "--no-table", "--out", scene]) == 0
        assert pf.cli(["prior", "--scene", scene, "--preset", "clean"]) == 0
        assert pf.cli(["synth", "--objects", "0", "--out", scene]) == 1

        bundle = pf.Bundle(scene)
        (cls,) = bundle.classes
        config = pf.FilterConfig(num_samples=128, max_iterations=60, seed=1)
        results = pf.estimate(bundle, config=config)
        report = results[cls]
        assert isinstance(report, pf.EstimateReport), report
        assert len(report.weight_trace) == report.iterations_run + 1
        assert 0.0 <= report.best_weight <= 1.0
        error = pf.adds_error(bundle.mesh(cls), bundle.pose(cls), report.best_pose)
        again = pf.estimate(bundle, config=config)[cls]
        assert again.to_json() == report.to_json()
        assert json.loads(config.to_json())["num_samples"] == 128

        try:
            config.alphas = [0.1, 0.1, 0.3, 0.2, 0.2]
        except pf.PosefilterError as e:
            assert "sum to 1" in str(e)
        else:
            raise AssertionError("alphas not summing to 1 were accepted")
        return cls, report, error


def main():
    k, pose = check_geometry()
    check_rendering_and_metrics(k, pose)
    cls, report, error = check_pipeline()
    print(f"posefilter {pf.__version__}: {cls} weight {report.best_weight:.3f} "
          f"after {report.iterations_run} iterations, ADD-S {error * 1000:.1f} mm")
    print("smoke test passed")


if __name__ == "__main__":
    main()
