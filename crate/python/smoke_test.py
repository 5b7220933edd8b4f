"""Smoke test for the `vmc` extension module.

Build first:  cargo build --release -p vmc-py --features extension-module
then run:     python3 python/smoke_test.py [path/to/libvmc.so]
"""

import importlib.machinery
import importlib.util
import pathlib
import sys
from fractions import Fraction

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load(path=None):
    if path is None:
        for profile in ("release", "debug"):
            for name in ("libvmc.so", "libvmc.dylib", "vmc.dll"):
                cand = ROOT / "target" / profile / name
                if cand.exists():
                    path = cand
                    break
            if path:
                break
    if path is None:
        sys.exit("libvmc not built; see the module docstring")
    loader = importlib.machinery.ExtensionFileLoader("vmc", str(path))
    spec = importlib.util.spec_from_loader("vmc", loader)
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    return module


def main():
    vmc = load(sys.argv[1] if len(sys.argv) > 1 else None)

    clique = vmc.Model({"family": "infinite_clique"})
    assert clique.name == "infinite_clique"
    assert clique.level(2)[1] == ["0", "1/2", "1/2"]
    assert all(clique.projects(n) for n in range(8))

    pi = clique.balayage(12)
    assert pi.recognize() == "uniform"
    assert pi.rows()[3] == ["0", "1/3", "1/3", "1/3"]

    d1 = vmc.Sequence.delta(pi, 1, 12)
    d2 = vmc.Sequence.delta(pi, 2, 12)
    mix = vmc.Sequence.mixture([("1/2", d1), ("1/2", d2)])
    assert Fraction(mix.eval(1, 5)) == Fraction(1, 2)
    assert mix.is_member(pi)
    same = vmc.Sequence.resolve(
        {"kind": "mixture", "components": [
            {"weight": "1/2", "model": {"kind": "delta", "a": 1}},
            {"weight": "1/2", "model": {"kind": "delta", "a": 2}},
        ]},
        pi, 12)
    assert [same.level(n) for n in range(13)] == [mix.level(n) for n in range(13)]

    report = clique.check(10, mix)
    assert not report["vtm"]["violations"] and not report["compatibility"]["violations"]

    # worked decomposition
    rows = [[0], [1, 1, 0], [2, 1, 1, 2, 0], [2, 3, 1, 1, 2, 0],
            [4, 2, 3, 1, 4, 1, 2, 0], [4, 5, 2, 3, 1, 5, 4, 1, 2, 0]]
    d = vmc.decompose(rows, amax=2, kmax=2)
    assert d["s0"] == [0, 1, 2, 2, 4, 4], d["s0"]
    assert vmc.decompose([rows[-1]], amax=2, kmax=2)["s0"] == d["s0"]
    assert vmc.project_path(5, [4, 5, 2, 3, 1], 4)[:4] == [4, 2, 3, 1]

    vp = vmc.simulate(clique, d1, 4, 50, seed=3)
    assert vp == vmc.simulate(clique, d1, 4, 50, seed=3)
    assert len(vp) == 5 and vp[4]["level"] == 4

    classes = vmc.classify(clique, d1, 4)
    assert [c["verdict"] for c in classes] == ["InfinitelyVisited"] * 4

    assert vmc.zero_one(clique, vmc.Sequence.delta(pi, 1, 40), amax=6)["verdict"] == "Trivial"
    assert vmc.zero_one(clique, vmc.Sequence.resolve({"kind": "mixture", "components": [
        {"weight": "1/2", "model": {"kind": "delta", "a": 1}},
        {"weight": "1/2", "model": {"kind": "delta", "a": 2}}]}, pi, 40), amax=6)["verdict"] == "NonTrivial"

    stairs = vmc.smc_sample(vmc.Sequence.uniform(6), 6, 2000, seed=1)
    assert all(s[:2] == [0, 1] for s in stairs)
    share = sum(s[3] == 3 for s in stairs) / len(stairs)
    assert abs(share - 1 / 3) < 0.05, share

    cells = vmc.sternfeld(vmc.Balayage.named("uniform", 120), 2, 1, 100, 103)
    assert all(Fraction(c["sum"]) == Fraction(51, 200) for c in cells["cells"] if c["a"] > 100)

    try:
        vmc.Model({"family": "down_from_infinity", "q": ["3/2"]})
    except ValueError:
        pass
    else:
        raise AssertionError("bad q accepted")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
