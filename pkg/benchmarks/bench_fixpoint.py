"""Compare the compiled and pure-Python fixpoint kernels.

Three workloads: the raw kernel on desk-size theories, the raw kernel on a large
random layered program, and full ``forward_chain`` calls as datagen issues them.

    python3 benchmarks/bench_fixpoint.py [--repeat 5] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import random
import timeit
from array import array

from backprover import kernels, oracle
from backprover.datagen import GenConfig, random_theory


def layered_program(n_atoms: int, n_rules: int, n_strata: int, seed: int = 0) -> tuple:
    """Random stratified program in the kernel's flat encoding (atoms i and i^1 are complements)."""
    rng = random.Random(seed)
    per = n_atoms // n_strata
    init = [kernels.INF] * n_atoms
    for i in rng.sample(range(0, per, 2), per // 8):
        init[i] = 0
    rules = []
    for _ in range(n_rules):
        s = rng.randrange(1, n_strata)
        h = rng.randrange(s * per, (s + 1) * per) & ~1
        body, naf = [], []
        for _ in range(rng.randint(1, 3)):
            a = rng.randrange(0, s * per)
            body.append(a)
            naf.append(a ^ 1 if rng.random() < 0.2 else -1)
        rules.append((s, h, body, naf))
    rules.sort(key=lambda r: r[0])
    head, rule_start, body_atom, body_naf, strata_start = [], [0], [], [], [0]
    current = None
    for pos, (s, h, body, naf) in enumerate(rules):
        if current is not None and s != current:
            strata_start.append(pos)
        current = s
        head.append(h)
        body_atom += body
        body_naf += naf
        rule_start.append(len(body_atom))
    return n_atoms, *(array("q", x) for x in (init, head, rule_start, body_atom, body_naf, strata_start))


def capture_desk_programs(n: int, seed: int = 0) -> list[tuple]:
    """Kernel inputs exactly as forward_chain builds them for generated theories."""
    captured = []
    original = kernels.stratified_depths

    def spy(*args, **kwargs):
        captured.append(args[:7])
        return original(*args, **kwargs)

    kernels.stratified_depths = spy
    try:
        rng = random.Random(seed)
        config = GenConfig()
        while len(captured) < n:
            try:
                oracle.forward_chain(random_theory(config, rng))
            except (oracle.StratificationError, oracle.ConsistencyError):
                pass
    finally:
        kernels.stratified_depths = original
    return captured[:n]


def bench(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", default=None)
    args = parser.parse_args()
    if "compiled" not in kernels.AVAILABLE:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")

    desk = capture_desk_programs(2000)
    large = layered_program(20_000, 60_000, 20)
    theories = []
    rng = random.Random(1)
    while len(theories) < 500:
        t = random_theory(GenConfig(), rng)
        try:
            oracle.forward_chain(t)
            theories.append(t)
        except (oracle.StratificationError, oracle.ConsistencyError):
            pass

    for prog in desk[:200] + [large]:
        assert kernels.stratified_depths(*prog, backend_name="compiled") == \
            kernels.stratified_depths(*prog, backend_name="python")

    results = {}
    for name in ("python", "compiled"):
        results[name] = {
            "kernel_desk_2000": bench(lambda: [kernels.stratified_depths(*p, backend_name=name) for p in desk],
                                      args.repeat),
            "kernel_large": bench(lambda: kernels.stratified_depths(*large, backend_name=name), args.repeat),
            "forward_chain_500": bench(lambda: [oracle.forward_chain(t, backend=name) for t in theories],
                                       args.repeat),
        }
    print(f"{'workload':<20} {'python s':>10} {'compiled s':>11} {'speedup':>8}")
    for key in results["python"]:
        py, c = results["python"][key], results["compiled"][key]
        print(f"{key:<20} {py:>10.4f} {c:>11.4f} {py / c:>7.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
