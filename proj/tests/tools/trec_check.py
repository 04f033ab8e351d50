#!/usr/bin/env python3
"""Score a TREC run file against a qrels file.

Usage: trec_check.py QRELS RUN

Prints three lines to stdout:

    recip_rank <value>
    ndcg <value>
    P_5 <value>

Each value is the mean over every topic present in the qrels file; a topic
with no rows in the run file scores zero.  When a `trec_eval` binary is on
PATH it is used (with -c, which applies the same all-qrels-topics averaging)
and its numbers are reprinted in the format above; otherwise the metrics are
computed here, independently, from the two files alone.  The backend used is
reported on stderr.
"""

import math
import shutil
import subprocess
import sys
from collections import defaultdict


def read_qrels(path):
    """topic -> set of relevant docnos (judgment > 0)."""
    relevant = defaultdict(set)
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise SystemExit(f"qrels: malformed line: {line.rstrip()}")
            topic, _iter, docno, judgment = parts
            relevant[topic]  # register the topic even if nothing is relevant
            if int(judgment) > 0:
                relevant[topic].add(docno)
    return relevant


def read_run(path):
    """topic -> list of docnos ordered by (-score, docno desc), the trec_eval way."""
    rows = defaultdict(list)
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise SystemExit(f"run: malformed line: {line.rstrip()}")
            topic, _q0, docno, _rank, score, _tag = parts
            rows[topic].append((float(score), docno))
    ordered = {}
    for topic, entries in rows.items():
        entries.sort(key=lambda e: e[1], reverse=True)  # docno descending...
        entries.sort(key=lambda e: e[0], reverse=True)  # ...then stably by score
        ordered[topic] = [docno for _score, docno in entries]
    return ordered


def reciprocal_rank(ranking, relevant):
    for position, docno in enumerate(ranking, start=1):
        if docno in relevant:
            return 1.0 / position
    return 0.0


def ndcg(ranking, relevant):
    dcg = sum(
        1.0 / math.log2(position + 1)
        for position, docno in enumerate(ranking, start=1)
        if docno in relevant
    )
    ideal = sum(1.0 / math.log2(position + 1) for position in range(1, len(relevant) + 1))
    return dcg / ideal if ideal > 0.0 else 0.0


def precision_at_5(ranking, relevant):
    return sum(1 for docno in ranking[:5] if docno in relevant) / 5.0


def compute_here(qrels_path, run_path):
    relevant = read_qrels(qrels_path)
    run = read_run(run_path)
    topics = sorted(relevant)
    if not topics:
        raise SystemExit("qrels: no topics")
    sums = {"recip_rank": 0.0, "ndcg": 0.0, "P_5": 0.0}
    for topic in topics:
        ranking = run.get(topic, [])
        rel = relevant[topic]
        sums["recip_rank"] += reciprocal_rank(ranking, rel)
        sums["ndcg"] += ndcg(ranking, rel)
        sums["P_5"] += precision_at_5(ranking, rel)
    return {name: total / len(topics) for name, total in sums.items()}


def compute_with_trec_eval(binary, qrels_path, run_path):
    cmd = [binary, "-c", "-m", "recip_rank", "-m", "ndcg", "-m", "P.5", qrels_path, run_path]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        return None
    values = {}
    for line in proc.stdout.splitlines():
        parts = line.split()
        if len(parts) == 3 and parts[1] == "all":
            values[parts[0]] = float(parts[2])
    if {"recip_rank", "ndcg", "P_5"} <= values.keys():
        return {name: values[name] for name in ("recip_rank", "ndcg", "P_5")}
    return None


def main(argv):
    if len(argv) != 3:
        raise SystemExit(__doc__.strip())
    qrels_path, run_path = argv[1], argv[2]
    binary = shutil.which("trec_eval")
    values = None
    if binary:
        values = compute_with_trec_eval(binary, qrels_path, run_path)
        if values is not None:
            print(f"backend: trec_eval ({binary})", file=sys.stderr)
    if values is None:
        values = compute_here(qrels_path, run_path)
        print("backend: internal", file=sys.stderr)
    for name in ("recip_rank", "ndcg", "P_5"):
        print(f"{name} {values[name]:.12f}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
