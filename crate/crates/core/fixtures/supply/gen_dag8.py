#!/usr/bin/env python3
"""Regenerates the 8-node random supply DAG, its registers and the frozen
path enumeration (max 3 hops) that `riskmine propagate` must reproduce.

Usage: python3 gen_dag8.py
"""

import hashlib
import itertools
import json
import random

MAX_HOPS = 3


def main():
    rng = random.Random(8)
    nodes = ["s%d" % i for i in range(8)]
    edges = [(a, b) for a, b in itertools.combinations(nodes, 2) if rng.random() < 0.35]
    regs = {}
    for n in nodes:
        if rng.random() < 0.6:
            regs[n] = sorted(set(rng.choice(["risk a", "risk b", "risk c"]) for _ in range(rng.randint(1, 2))))

    with open("dag8.tsv", "w") as f:
        for a, b in edges:
            f.write("%s\t%s\t1\t\n" % (a, b))
    with open("dag8_registers.jsonl", "w") as f:
        for n, types in regs.items():
            for t in types:
                pid = hashlib.sha256(("%s\x1f%s" % (n, t)).encode()).hexdigest()[:16]
                f.write(json.dumps({
                    "entity_id": n, "as_of": "2015-01-01T00:00:00Z", "risk_type": t, "mention_count": 1,
                    "first_seen": "2015-01-01", "last_seen": "2015-01-01", "likelihood": None, "impact": None,
                    "swan_class": "UNCLASSIFIED", "provenance": [pid],
                }) + "\n")

    # Every node sequence of 2..MAX_HOPS+1 distinct nodes whose consecutive
    # pairs are edges.
    edge_set = set(edges)
    rows = set()
    for k in range(2, MAX_HOPS + 2):
        for seq in itertools.permutations(nodes, k):
            if all((seq[i], seq[i + 1]) in edge_set for i in range(k - 1)) and seq[0] in regs:
                for t in regs[seq[0]]:
                    rows.add((seq[-1], t, seq[0], ">".join(seq)))
    with open("dag8_paths.tsv", "w") as f:
        for r in sorted(rows):
            f.write("\t".join(r) + "\n")


if __name__ == "__main__":
    main()
