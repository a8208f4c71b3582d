import math

import numpy as np
import pytest

from pointloop.backends import AuditLog, BackendClient, BackendDescriptor
from pointloop.pointcloud import PointCloud, normalize_to_unit_sphere
from pointloop.scripted import make_scripted_backend


def make_clients(audit: AuditLog | None = None, cache=None, latency_s: float = 0.0,
                 kinds=("point", "vision", "chat")):
    """BackendClients over the built-in demo rule, sharing one audit log."""
    audit = audit or AuditLog()
    transport = make_scripted_backend(latency_s=latency_s)
    clients = {}
    for kind in kinds:
        desc = BackendDescriptor(kind=kind, model_name=f"demo-{kind}")
        clients[kind] = BackendClient(desc, transport, audit_log=audit, cache=cache)
    return clients, audit


def make_cloud(object_id="obj", n=100, seed=0):
    """Seeded random cloud, normalized to the unit sphere."""
    rng = np.random.default_rng(seed)
    xyz = rng.uniform(-1, 1, size=(n, 3))
    rgb = rng.uniform(0, 1, size=(n, 3))
    return normalize_to_unit_sphere(PointCloud(object_id=object_id, xyz=xyz, rgb=rgb))


def rotate_y(cloud: PointCloud, degrees: float) -> PointCloud:
    t = math.radians(degrees)
    rot = np.array([
        [math.cos(t), 0.0, math.sin(t)],
        [0.0, 1.0, 0.0],
        [-math.sin(t), 0.0, math.cos(t)],
    ])
    return PointCloud(object_id=cloud.object_id, xyz=cloud.xyz @ rot.T, rgb=cloud.rgb.copy())


def write_xyzrgb(path, cloud: PointCloud):
    with open(path, "w") as fh:
        for (x, y, z), (r, g, b) in zip(cloud.xyz, cloud.rgb):
            fh.write(f"{x:.9f} {y:.9f} {z:.9f} {r:.6f} {g:.6f} {b:.6f}\n")
    return path


class ObjectDir:
    """Directory of synthetic point-cloud files keyed by object id."""

    def __init__(self, path):
        self.path = path

    def __fspath__(self):
        return str(self.path)

    def __str__(self):
        return str(self.path)

    def __truediv__(self, other):
        return self.path / other

    def add(self, object_id, n=64, seed=None):
        if seed is None:
            seed = int.from_bytes(object_id.encode(), "little") % 2**31
        cloud = make_cloud(object_id, n=n, seed=seed)
        write_xyzrgb(self.path / f"{object_id}.xyz", cloud)
        return cloud


@pytest.fixture
def object_dir(tmp_path):
    d = tmp_path / "objects"
    d.mkdir()
    return ObjectDir(d)


def pytest_runtest_logreport(report):
    """One PASS/FAIL line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    status = "PASS" if report.passed else "FAIL"
    name = report.nodeid.split("::")[-1]
    print(f"\n[{status}] {name}")
