"""Reference interpreter for :class:`TiledKernel`.

Grid instances run in row-major order over the grid axes.  Each instance
produces its store records; records are applied to the output strictly in
instance order, so a thread pool (``threads > 1``) only changes who computes
the partials, never the accumulation order.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from ..plan import AccessCounters, bind_extents
from ..validation import (IndexRangeError, check_bindings, check_index_tensor, check_tensor,
                          result_dtype)
from .tiled import (AccumAdd, Arange, DotAcc, Expand, Full, Load, Loop, Mul, Offset,
                    ProgramIndex, ReduceSum, Ref, Reshape, Split, Store, TiledKernel, Transpose)

__all__ = ["interpret_kernel"]

_Val = Tuple[np.ndarray, Optional[np.ndarray], str]  # value, lane mask, source index tensor


def _expand(arr, ref: Ref):
    if arr is None or ref.expand is None:
        return arr
    return arr[tuple(slice(None) if e else None for e in ref.expand)]


class _Instance:
    def __init__(self, k: TiledKernel, tensors, dtype, pids, consts, store_index: set):
        self.k, self.t, self.dtype, self.pids = k, tensors, dtype, pids
        self.env: Dict[str, _Val] = {}
        self.consts = consts
        self.records = []
        self.store_index = store_index
        self.gathers = 0
        self.scatters = 0

    def get(self, ref: Ref):
        v, m, src = self.env[ref.name]
        return _expand(np.asarray(v), ref), _expand(m, ref), src

    def run(self, body):
        for s in body:
            self.step(s)

    def step(self, s):
        env = self.env
        if isinstance(s, Arange):
            lanes = np.arange(s.size)
            if s.axis is not None:
                lanes = lanes + self.pids[s.axis] * s.size
            shape = tuple(s.size if t != "1" else 1 for t in s.tags)
            lanes = lanes.reshape(shape)
            mask = lanes < s.extent if s.extent is not None else None
            env[s.name] = (lanes, mask, "")
        elif isinstance(s, ProgramIndex):
            env[s.name] = (np.int64(self.pids[s.axis]), None, "")
        elif isinstance(s, Offset):
            off = env[s.offset][0]
            base = env[s.base][0]
            val = base + off
            env[s.name] = (val, val < s.extent, "")
        elif isinstance(s, Split):
            v, m, _ = env[s.src]
            out = v // s.div
            if s.mod is not None:
                out = out % s.mod
            env[s.name] = (out, m, "")
        elif isinstance(s, Load):
            self.load(s)
        elif isinstance(s, Mul):
            a, ma, _ = self.get(s.a)
            b, mb, _ = self.get(s.b)
            env[s.name] = (a * b, _and(ma, mb), "")
        elif isinstance(s, Full):
            shape = tuple(self.consts[d] for d in s.dims)
            env[s.name] = (np.zeros(shape, dtype=self.dtype), None, "")
        elif isinstance(s, AccumAdd):
            v, _, _ = self.get(s.value)
            acc = env[s.acc][0]
            env[s.acc] = (acc + v, None, "")
        elif isinstance(s, DotAcc):
            a, _, _ = self.get(s.a)
            b, _, _ = self.get(s.b)
            acc = env[s.acc][0]
            env[s.acc] = (acc + np.matmul(a, b).astype(self.dtype, copy=False), None, "")
        elif isinstance(s, Reshape):
            v, m, src = env[s.src]
            shape = tuple(self.consts[d] for d in s.dims)
            mm = None if m is None else np.broadcast_to(m, v.shape).reshape(shape)
            env[s.name] = (v.reshape(shape), mm, src)
        elif isinstance(s, Transpose):
            v, m, src = env[s.src]
            env[s.name] = (v.T, None if m is None else m.T, src)
        elif isinstance(s, ReduceSum):
            v, _, _ = env[s.src]
            red = v.sum(axis=s.axis)
            env[s.name] = (_expand(red, Ref(s.name, s.expand)), None, "")
        elif isinstance(s, Expand):
            v, m, src = self.get(s.src)
            env[s.name] = (v, m, src)
        elif isinstance(s, Store):
            self.store(s)
        elif isinstance(s, Loop):
            for it in range(0, s.stop, s.step):
                env[s.var] = (np.int64(it), None, "")
                self.run(s.body)
        else:  # pragma: no cover
            raise TypeError(s)

    def _index(self, refs, shape, what: str):
        vals = [self.get(r) for r in refs]
        arrs = np.broadcast_arrays(*[np.asarray(v) for v, _, _ in vals])
        mask = None
        for _, m, _ in vals:
            mask = _and(mask, m)
        full = arrs[0].shape
        mask = np.ones(full, dtype=bool) if mask is None else np.broadcast_to(mask, full)
        coords = []
        for d, (a, (_, _, src)) in enumerate(zip(arrs, vals)):
            c = np.where(mask, a, 0)
            # cheap scan first; the exact lane is located only on failure
            if c.size and (c.min() < 0 or c.max() >= shape[d]):
                bad = ((a < 0) | (a >= shape[d])) & mask
                if bad.any():
                    pos = np.unravel_index(int(np.flatnonzero(bad)[0]), bad.shape)
                    raise IndexRangeError(src or f"<{what} lane>", pos, a[pos], shape[d],
                                          f"{what} dim {d}")
            coords.append(c)
        return coords, mask

    def load(self, s: Load):
        arr = self.t[s.tensor]
        coords, mask = self._index(s.index, arr.shape, s.tensor)
        vals = arr[tuple(coords)]
        vals = np.where(mask, vals, np.zeros((), dtype=vals.dtype))
        if s.is_index:
            n = int(mask.sum())
            if s.name in self.store_index:
                self.scatters += n
            else:
                self.gathers += n
        self.env[s.name] = (vals, mask, s.tensor if s.is_index else "")

    def store(self, s: Store):
        out_shape = self.t[self.k.stmt.output.tensor].shape
        coords, mask = self._index(s.index, out_shape, s.tensor)
        v, _, _ = self.get(s.value)
        v = np.broadcast_to(v, mask.shape)
        sel = np.nonzero(mask)
        self.records.append((tuple(c[sel] for c in coords), v[sel]))


def _and(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a & b


def _store_index_names(k: TiledKernel) -> set:
    from .tiled import walk
    store_refs = {r.name for s in walk(k.body) if isinstance(s, Store) for r in s.index}
    load_refs = {r.name for s in walk(k.body) if isinstance(s, Load) for r in s.index}
    return store_refs - load_refs


def interpret_kernel(k: TiledKernel, tensors: Mapping[str, np.ndarray],
                     out: Optional[np.ndarray] = None, threads: int = 1,
                     counters: Optional[AccessCounters] = None) -> np.ndarray:
    """Simulate the grid of ``k`` and return the output tensor.

    ``out`` (default: the bound output tensor) gives the output shape and the
    initial value for accumulating statements; it is not modified.  When
    ``counters`` is given it receives the index reads and atomic updates of
    the valid lanes.
    """
    stmt = k.stmt
    env = dict(tensors)
    name = stmt.output.tensor
    if out is None:
        if name not in env:
            raise KeyError(f"tensor {name!r} is not bound")
        out = env[name]
    env[name] = np.asarray(out)
    check_bindings(stmt.tensor_names(), env)
    bound = bind_extents(stmt, env)
    if dict(bound.extents) != dict(stmt.extents):
        raise ValueError(f"kernel was tiled for extents {dict(stmt.extents)}, "
                         f"tensors give {dict(bound.extents)}")
    arrays = {}
    for t in stmt.tensor_names():
        if t in stmt.index_tensors():
            arrays[t] = check_index_tensor(env[t], t)
        else:
            arrays[t] = check_tensor(env[t], t)
    dtype = result_dtype([arrays[a.tensor] for a in stmt.inputs] + [arrays[name]])
    result = np.zeros(arrays[name].shape, dtype=dtype)
    if stmt.accumulate:
        result += arrays[name]

    consts = dict(k.blocks)
    store_index = _store_index_names(k)
    grid = [range(n) for _, n in k.grid]

    def run(pids):
        inst = _Instance(k, arrays, dtype, pids, consts, store_index)
        inst.run(k.body)
        return inst

    instances = itertools.product(*grid)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = list(pool.map(run, instances))
    else:
        done = (run(p) for p in instances)
    atomic = any(isinstance(s, Store) and s.atomic for s in k.body)
    for inst in done:
        for coords, vals in inst.records:
            np.add.at(result, coords, vals.astype(dtype, copy=False))
            if counters is not None and atomic:
                counters.atomic_updates += len(vals)
        if counters is not None:
            counters.gathers += inst.gathers
            counters.scatters += inst.scatters
    return result
