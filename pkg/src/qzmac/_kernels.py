"""Numba nopython kernels for both schedulers' slot loops.

These mirror the python backend in engine.py statement for statement: same
counter-addressed SplitMix64 draws, same float operation order, so the two
backends produce bit-identical trace arrays. Keep any change here in lockstep
with engine.py (the cross-backend equality tests will catch drift).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
    AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TO_U01 = np.float64(2.0 ** -53)

# counter vector layout
C_DISTINCT, C_TIE, C_PHASE, C_PU_WORK = 0, 1, 2, 3
N_COUNTERS = 4

OUT_IDLE, OUT_PU, OUT_POLLED, OUT_SU, OUT_WIN, OUT_COLLISION = 0, 1, 2, 3, 4, 5
DLV_NOTHING, DLV_DELIVERED, DLV_COLLISION, DLV_CHANNEL = 0, 1, 2, 3
K_TDMA, K_ORACLE, K_PCSMA = 0, 1, 2


@njit(cache=True)
def _mix64(x):
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


@njit(cache=True)
def _val(key, counter):
    return _mix64(key + GAMMA * np.uint64(counter))


@njit(cache=True)
def _u01(u):
    return np.float64(u >> np.uint64(11)) * _TO_U01


@njit(cache=True)
def _grow(qdata, qhead, qsize):
    n, cap = qdata.shape
    out = np.zeros((n, cap * 2), dtype=np.int64)
    for i in range(n):
        for k in range(qsize[i]):
            out[i, k] = qdata[i, (qhead[i] + k) % cap]
        qhead[i] = 0
    return out


@njit(cache=True)
def _qzmac_kernel(n, horizon, t_p, t_c,
                  lam, sat, pattern, use_pattern,
                  pu0, su0,
                  p_fb, p_fi, p_busy, p_loss,
                  guard, eb_period, eb_loss, drift,
                  arr_keys, cnt_keys, cca_keys, eb_keys,
                  intf_key, loss_key,
                  arrivals, outcome, transmitter, draw, start, ntx_arr, txmask,
                  delivery_arr, departed, elapsed, pu_arr, su_arr, qlen,
                  diverged, mismask, maxoff, cnts):
    stride = t_p + t_c + 1
    plen = pattern.shape[0]

    rep_el = np.empty((n, n), dtype=np.int64)
    for i in range(n):
        for k in range(n):
            rep_el[i, k] = k
    rep_pu = np.full(n, pu0, dtype=np.int64)
    rep_su = np.full(n, su0, dtype=np.int64)
    qdata = np.zeros((n, 256), dtype=np.int64)
    qhead = np.zeros(n, dtype=np.int64)
    qsize = np.zeros(n, dtype=np.int64)
    pending = np.zeros(n, dtype=np.uint8)
    off = np.zeros(n, dtype=np.float64)
    aligned = np.zeros(n, dtype=np.bool_)
    is_tx = np.zeros(n, dtype=np.bool_)
    tx_start = np.zeros(n, dtype=np.int64)
    obs_busy = np.zeros(n, dtype=np.bool_)
    believed = np.zeros(n, dtype=np.int64)
    contender = np.zeros(n, dtype=np.bool_)
    r = np.zeros(n, dtype=np.int64)
    poll_ext = np.zeros(t_p, dtype=np.bool_)
    no_errors = p_fb == 0.0 and p_fi == 0.0

    for t in range(horizon):
        # arrivals from the previous slot become eligible
        for i in range(n):
            if pending[i]:
                cap = qdata.shape[1]
                if qsize[i] == cap:
                    qdata = _grow(qdata, qhead, qsize)
                    cap = qdata.shape[1]
                qdata[i, (qhead[i] + qsize[i]) % cap] = t - 1
                qsize[i] += 1
                pending[i] = 0
        for i in range(n):
            a = np.uint8(0)
            if use_pattern:
                if t < plen:
                    a = pattern[t, i]
            elif not sat[i]:
                if _u01(_val(arr_keys[i], t)) < lam[i]:
                    a = np.uint8(1)
            arrivals[t, i] = a
            pending[i] = a

        # clocks advance; beacons resynchronize (offsets evaluated after the
        # beacon correction, matching the alignment check below)
        for i in range(n):
            off[i] += drift[i]
        if t > 0 and t % eb_period == 0:
            b = t // eb_period
            for i in range(n):
                lost = eb_loss > 0.0 and _u01(_val(eb_keys[i], b)) < eb_loss
                if not lost:
                    off[i] = 0.0
        mx = 0.0
        for i in range(n):
            a_off = -off[i] if off[i] < 0.0 else off[i]
            if a_off > mx:
                mx = a_off
        maxoff[t] = mx
        mis = np.uint64(0)
        for i in range(n):
            a_off = -off[i] if off[i] < 0.0 else off[i]
            aligned[i] = a_off < guard
            if not aligned[i]:
                mis |= np.uint64(1) << np.uint64(i)
        mismask[t] = mis

        pu_true = rep_pu[0]
        pu_backlogged = sat[pu_true] or qsize[pu_true] > 0

        # minislot machine
        any_tx = False
        for i in range(n):
            is_tx[i] = False
            tx_start[i] = 0
            obs_busy[i] = False
            believed[i] = 0
            contender[i] = False
            r[i] = 0

        for ms in range(1, t_p + 1):
            if ms <= 3:
                for i in range(n):
                    if is_tx[i] or obs_busy[i]:
                        continue
                    if not (sat[i] or qsize[i] > 0):
                        continue
                    if ms == 1:
                        target = rep_pu[i]
                    elif ms == 2:
                        target = 0
                        best = rep_el[i, 0]
                        for k in range(1, n):
                            if rep_el[i, k] > best:
                                target = k
                                best = rep_el[i, k]
                    else:
                        target = rep_su[i]
                    if target == i:
                        is_tx[i] = True
                        tx_start[i] = ms
                        any_tx = True
            e = p_busy > 0.0 and _u01(_val(intf_key, t * stride + (ms - 1))) < p_busy
            poll_ext[ms - 1] = e
            truth = e or any_tx
            for i in range(n):
                if is_tx[i] or obs_busy[i]:
                    continue
                if not aligned[i]:
                    busy = _u01(_val(cca_keys[i], t * stride + (ms - 1))) < 0.5
                elif no_errors:
                    busy = truth
                else:
                    u = _u01(_val(cca_keys[i], t * stride + (ms - 1)))
                    busy = (not (u < p_fi)) if truth else (u < p_fb)
                if busy:
                    obs_busy[i] = True
                    believed[i] = ms

        for i in range(n):
            if (sat[i] or qsize[i] > 0) and not is_tx[i] and not obs_busy[i]:
                contender[i] = True
                r[i] = 1 + np.int64(_val(cnt_keys[i], t) % np.uint64(t_c))
        for c in range(1, t_c + 1):
            for i in range(n):
                if contender[i] and r[i] == c and not obs_busy[i] and not is_tx[i]:
                    is_tx[i] = True
                    tx_start[i] = t_p + c
                    any_tx = True
            e = p_busy > 0.0 and _u01(_val(intf_key, t * stride + (t_p + c - 1))) < p_busy
            truth = e or any_tx
            for i in range(n):
                if is_tx[i] or obs_busy[i]:
                    continue
                if contender[i] and r[i] != c + 1:
                    continue
                if not aligned[i]:
                    busy = _u01(_val(cca_keys[i], t * stride + (t_p + c - 1))) < 0.5
                elif no_errors:
                    busy = truth
                else:
                    u = _u01(_val(cca_keys[i], t * stride + (t_p + c - 1)))
                    busy = (not (u < p_fi)) if truth else (u < p_fb)
                if busy:
                    obs_busy[i] = True
                    believed[i] = t_p + c

        # slot resolution
        ntx = 0
        jtx = -1
        jtx_last = -1
        first = -1
        mask = np.uint64(0)
        for i in range(n):
            if is_tx[i]:
                ntx += 1
                jtx_last = i
                if first < 0 or tx_start[i] < first:
                    first = tx_start[i]
                mask |= np.uint64(1) << np.uint64(i)
        reg_ext = p_busy > 0.0 and _u01(_val(intf_key, t * stride + (t_p + t_c))) < p_busy
        ack = False
        if ntx >= 2:
            delivery = DLV_COLLISION
        elif ntx == 1:
            jtx = jtx_last
            corrupted = p_loss > 0.0 and _u01(_val(loss_key, t)) < p_loss
            if (not aligned[jtx]) or reg_ext or corrupted:
                delivery = DLV_CHANNEL
            else:
                delivery = DLV_DELIVERED
                ack = True
        else:
            delivery = DLV_NOTHING

        if ntx == 0:
            out = OUT_IDLE
        elif ntx >= 2:
            out = OUT_COLLISION
        elif first <= t_p:
            out = OUT_PU if first == 1 else (OUT_POLLED if first == 2 else OUT_SU)
        else:
            out = OUT_WIN

        if ntx > 0:
            limit = first - 1 if first - 1 < t_p else t_p
            for m in range(limit):
                if poll_ext[m]:
                    cnts[C_PHASE] += 1
                    break
        if pu_backlogged and out != OUT_PU:
            cnts[C_PU_WORK] += 1

        dep = -1
        if delivery == DLV_DELIVERED and not sat[jtx]:
            cap = qdata.shape[1]
            dep = qdata[jtx, qhead[jtx]]
            qhead[jtx] = (qhead[jtx] + 1) % cap
            qsize[jtx] -= 1

        # per-node replica updates from on-air observations
        decodable = ntx == 1 and aligned[jtx]
        for i in range(n):
            srv = -1
            kind = OUT_IDLE
            if not aligned[i]:
                pass
            elif decodable:
                if ack or first <= t_p:
                    srv = jtx
                    kind = (OUT_PU if first == 1 else
                            (OUT_POLLED if first == 2 else OUT_SU)) \
                        if first <= t_p else OUT_WIN
            elif is_tx[i]:
                if tx_start[i] <= t_p:
                    srv = i
                    s = tx_start[i]
                    kind = OUT_PU if s == 1 else (OUT_POLLED if s == 2 else OUT_SU)
            elif obs_busy[i] and believed[i] <= t_p and believed[i] <= 3 \
                    and (ntx >= 1 or reg_ext):
                if believed[i] == 1:
                    srv = rep_pu[i]
                    kind = OUT_PU
                elif believed[i] == 2:
                    srv = 0
                    best = rep_el[i, 0]
                    for k in range(1, n):
                        if rep_el[i, k] > best:
                            srv = k
                            best = rep_el[i, k]
                    kind = OUT_POLLED
                else:
                    srv = rep_su[i]
                    kind = OUT_SU
            if srv >= 0:
                for k in range(n):
                    rep_el[i, k] = 0 if k == srv else rep_el[i, k] + 1
                if ack:
                    if kind == OUT_POLLED:
                        rep_pu[i] = srv
                    elif kind == OUT_WIN:
                        rep_su[i] = srv
            else:
                for k in range(n):
                    rep_el[i, k] += 1

        # replica invariants
        div = np.uint8(0)
        for i in range(1, n):
            if rep_pu[i] != rep_pu[0] or rep_su[i] != rep_su[0]:
                div = np.uint8(1)
                break
            same = True
            for k in range(n):
                if rep_el[i, k] != rep_el[0, k]:
                    same = False
                    break
            if not same:
                div = np.uint8(1)
                break
        for i in range(n):
            for k in range(i + 1, n):
                if rep_el[0, i] == rep_el[0, k]:
                    cnts[C_DISTINCT] += 1
        best = rep_el[0, 0]
        for k in range(1, n):
            if rep_el[0, k] > best:
                best = rep_el[0, k]
        nbest = 0
        for k in range(n):
            if rep_el[0, k] == best:
                nbest += 1
        if nbest != 1:
            cnts[C_TIE] += 1

        # trace row
        outcome[t] = out
        transmitter[t] = jtx
        if out == OUT_WIN and contender[jtx]:
            draw[t] = r[jtx]
        else:
            draw[t] = -1
        start[t] = first if ntx > 0 else -1
        ntx_arr[t] = ntx
        txmask[t] = mask
        delivery_arr[t] = delivery
        departed[t] = dep
        for i in range(n):
            elapsed[t, i] = rep_el[0, i]
            qlen[t, i] = -1 if sat[i] else qsize[i]
        pu_arr[t] = rep_pu[0]
        su_arr[t] = rep_su[0]
        diverged[t] = div


@njit(cache=True)
def _baseline_kernel(kind, n, horizon,
                     lam, sat, pattern, use_pattern,
                     p_busy, p_loss, csma_p,
                     arr_keys, intf_key, loss_key, pcsma_key,
                     arrivals, outcome, transmitter, draw, start, ntx_arr,
                     txmask, delivery_arr, departed, elapsed, pu_arr, su_arr,
                     qlen, diverged, mismask, maxoff, cnts):
    plen = pattern.shape[0]
    el = np.empty(n, dtype=np.int64)
    for i in range(n):
        el[i] = i
    qdata = np.zeros((n, 256), dtype=np.int64)
    qhead = np.zeros(n, dtype=np.int64)
    qsize = np.zeros(n, dtype=np.int64)
    pending = np.zeros(n, dtype=np.uint8)
    txs = np.zeros(n, dtype=np.bool_)

    for t in range(horizon):
        for i in range(n):
            if pending[i]:
                cap = qdata.shape[1]
                if qsize[i] == cap:
                    qdata = _grow(qdata, qhead, qsize)
                    cap = qdata.shape[1]
                qdata[i, (qhead[i] + qsize[i]) % cap] = t - 1
                qsize[i] += 1
                pending[i] = 0
        for i in range(n):
            a = np.uint8(0)
            if use_pattern:
                if t < plen:
                    a = pattern[t, i]
            elif not sat[i]:
                if _u01(_val(arr_keys[i], t)) < lam[i]:
                    a = np.uint8(1)
            arrivals[t, i] = a
            pending[i] = a

        ntx = 0
        jtx = -1
        out = OUT_IDLE
        mask = np.uint64(0)
        if kind == K_TDMA:
            owner = t % n
            if sat[owner] or qsize[owner] > 0:
                ntx = 1
                jtx = owner
                out = OUT_POLLED
                mask = np.uint64(1) << np.uint64(owner)
        elif kind == K_ORACLE:
            best = np.int64(-1)
            for i in range(n):
                if (sat[i] or qsize[i] > 0) and el[i] > best:
                    best = el[i]
                    jtx = i
            if jtx >= 0:
                ntx = 1
                out = OUT_POLLED
                mask = np.uint64(1) << np.uint64(jtx)
        else:
            for i in range(n):
                txs[i] = False
                if sat[i] or qsize[i] > 0:
                    if _u01(_val(pcsma_key, t * n + i)) < csma_p:
                        txs[i] = True
                        ntx += 1
                        jtx = i
                        mask |= np.uint64(1) << np.uint64(i)
            if ntx == 1:
                out = OUT_WIN
            elif ntx >= 2:
                out = OUT_COLLISION
                jtx = -1

        reg_ext = p_busy > 0.0 and _u01(_val(intf_key, t)) < p_busy
        ack = False
        if ntx >= 2:
            delivery = DLV_COLLISION
        elif ntx == 1:
            corrupted = p_loss > 0.0 and _u01(_val(loss_key, t)) < p_loss
            if reg_ext or corrupted:
                delivery = DLV_CHANNEL
            else:
                delivery = DLV_DELIVERED
                ack = True
        else:
            delivery = DLV_NOTHING

        dep = -1
        if ack and not sat[jtx]:
            cap = qdata.shape[1]
            dep = qdata[jtx, qhead[jtx]]
            qhead[jtx] = (qhead[jtx] + 1) % cap
            qsize[jtx] -= 1
        if kind == K_ORACLE:
            if ntx == 1:
                for i in range(n):
                    el[i] = 0 if i == jtx else el[i] + 1
            else:
                for i in range(n):
                    el[i] += 1

        outcome[t] = out
        transmitter[t] = jtx
        draw[t] = -1
        start[t] = -1
        ntx_arr[t] = ntx
        txmask[t] = mask
        delivery_arr[t] = delivery
        departed[t] = dep
        for i in range(n):
            elapsed[t, i] = el[i] if kind == K_ORACLE else -1
            qlen[t, i] = -1 if sat[i] else qsize[i]
        pu_arr[t] = -1
        su_arr[t] = -1


def fill(cfg, keys, drift, arrays, counters):
    """Marshal config into plain scalars/arrays and run the jit kernel."""
    n = cfg.n
    spec = cfg.arrivals
    lam = np.asarray(spec.lam, dtype=np.float64)
    sat = np.asarray(spec.saturated, dtype=np.bool_)
    if spec.pattern is not None:
        pattern = np.asarray(spec.pattern, dtype=np.uint8).reshape(-1, n)
        use_pattern = True
    else:
        pattern = np.zeros((0, n), dtype=np.uint8)
        use_pattern = False
    arr_keys = np.asarray(keys["arr"], dtype=np.uint64)
    cnts = np.zeros(N_COUNTERS, dtype=np.int64)

    if cfg.scheduler == "qzmac":
        _qzmac_kernel(
            n, cfg.horizon, cfg.poll_minislots, cfg.contention_minislots,
            lam, sat, pattern, use_pattern,
            cfg.pu0, cfg.su0,
            cfg.cca.p_false_busy, cfg.cca.p_false_idle,
            cfg.interference.p_minislot_busy, cfg.interference.p_packet_loss,
            cfg.sync.guard_us, cfg.sync.eb_period_slots, cfg.sync.eb_loss_p,
            np.asarray(drift, dtype=np.float64),
            arr_keys,
            np.asarray(keys["cnt"], dtype=np.uint64),
            np.asarray(keys["cca"], dtype=np.uint64),
            np.asarray(keys["eb"], dtype=np.uint64),
            np.uint64(keys["intf"]), np.uint64(keys["loss"]),
            arrays.arrivals, arrays.outcome, arrays.transmitter, arrays.draw,
            arrays.start, arrays.ntx, arrays.txmask, arrays.delivery,
            arrays.departed, arrays.elapsed, arrays.pu, arrays.su, arrays.qlen,
            arrays.diverged, arrays.mismask, arrays.maxoff, cnts)
    else:
        kind = {"tdma": K_TDMA, "oracle": K_ORACLE, "pcsma": K_PCSMA}[cfg.scheduler]
        _baseline_kernel(
            kind, n, cfg.horizon,
            lam, sat, pattern, use_pattern,
            cfg.interference.p_minislot_busy, cfg.interference.p_packet_loss,
            cfg.effective_csma_p(),
            arr_keys, np.uint64(keys["intf"]), np.uint64(keys["loss"]),
            np.uint64(keys["pcsma"]),
            arrays.arrivals, arrays.outcome, arrays.transmitter, arrays.draw,
            arrays.start, arrays.ntx, arrays.txmask, arrays.delivery,
            arrays.departed, arrays.elapsed, arrays.pu, arrays.su, arrays.qlen,
            arrays.diverged, arrays.mismask, arrays.maxoff, cnts)

    counters.distinct_violations = int(cnts[C_DISTINCT])
    counters.tie_violations = int(cnts[C_TIE])
    counters.phase_order_violations = int(cnts[C_PHASE])
    counters.pu_work_violations = int(cnts[C_PU_WORK])
