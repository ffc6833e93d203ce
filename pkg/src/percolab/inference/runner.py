"""Replica fan-out with a thread-count independent reduction.

Replicas ``[0, n)`` are cut into fixed blocks.  A worker maps one block to
a summary (a dict of arrays, a ``Tally`` or a list); summaries are merged
in block order, so the result is the same for any number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context

import numpy as np

from .estimates import Tally

DEFAULT_BLOCK = 1024


def default_threads():
    try:
        return max(1, int(os.environ.get("PERCOLAB_THREADS", "1")))
    except ValueError:
        return 1


def blocks(n, block=DEFAULT_BLOCK, start=0):
    block = max(1, int(block))
    return [(s, min(s + block, start + n)) for s in range(start, start + n, block)]


def merge(a, b):
    if a is None:
        return b
    if isinstance(a, Tally):
        return a.merge(b)
    if isinstance(a, dict):
        return {k: merge(a[k], b[k]) for k in a}
    if isinstance(a, list):
        return a + b
    return a + b


def _call(job):
    worker, params, lo, hi = job
    return worker(params, lo, hi)


def map_blocks(worker, params, ranges, threads=None):
    """Run ``worker(params, lo, hi)`` on every range; results in range order."""
    threads = default_threads() if threads is None else max(1, int(threads))
    jobs = [(worker, params, lo, hi) for lo, hi in ranges]
    if threads == 1 or len(jobs) == 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads, mp_context=get_context("fork")) as ex:
        return list(ex.map(_call, jobs))


def run_replicas(worker, params, n_samples, threads=None, block=DEFAULT_BLOCK, start=0):
    """Reduce ``worker`` over replicas ``[start, start + n_samples)``.

    Returns ``(summary, ranges)``; ``ranges`` are the replica blocks, recorded
    in result manifests so any sample can be regenerated offline.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    ranges = blocks(n_samples, block, start)
    out = None
    for r in map_blocks(worker, params, ranges, threads):
        out = merge(out, r)
    return out, ranges


